#include "fan/ops.hpp"

#include <algorithm>
#include <cmath>

#include "fan/error.hpp"

namespace fan {

namespace {

using detail::Adjoints;
using detail::Node;
using detail::adjoint_of;

thread_local std::vector<uint8_t>* g_relu_sign_log = nullptr;
constexpr double kMaskFill = -1e9;

bool track(const Tensor& t) { return grad_enabled() && t.requires_grad(); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

void check_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " +
                         shape_str(t.shape()));
    }
}

// out[m x n] += a[m x k] * b[k x n]
void matmul_accum(const double* a, const double* b, double* out, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* orow = out + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// da[m x k] += g[m x n] * b^T  (row-dot form)
void matmul_accum_abt(const double* g, const double* b, double* da, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const double* grow = g + static_cast<size_t>(i) * n;
        double* darow = da + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double* brow = b + static_cast<size_t>(p) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            darow[p] += acc;
        }
    }
}

// db[k x n] += a^T * g  (a: [m x k], g: [m x n])
void matmul_accum_atb(const double* a, const double* g, double* db, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        const double* grow = g + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            double* dbrow = db + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) dbrow[j] += av * grow[j];
        }
    }
}

}  // namespace

void set_relu_sign_log(std::vector<uint8_t>* log) { g_relu_sign_log = log; }

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    const size_t n = a.vec().size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = a.vec()[i] + b.vec()[i];
    Tensor o = Tensor::from_data(a.shape(), std::move(out));
    if (track(a) || track(b)) {
        o.node->requires_grad = true;
        o.node->parents = {a.node, b.node};
        Node* an = a.node.get();
        Node* bn = b.node.get();
        o.node->backward = [an, bn](const std::vector<double>& g, Adjoints& adj) {
            if (an->requires_grad) {
                auto& da = adjoint_of(adj, an);
                for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            if (bn->requires_grad) {
                auto& db = adjoint_of(adj, bn);
                for (size_t i = 0; i < g.size(); ++i) db[i] += g[i];
            }
        };
    }
    return o;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    const size_t n = a.vec().size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = a.vec()[i] - b.vec()[i];
    Tensor o = Tensor::from_data(a.shape(), std::move(out));
    if (track(a) || track(b)) {
        o.node->requires_grad = true;
        o.node->parents = {a.node, b.node};
        Node* an = a.node.get();
        Node* bn = b.node.get();
        o.node->backward = [an, bn](const std::vector<double>& g, Adjoints& adj) {
            if (an->requires_grad) {
                auto& da = adjoint_of(adj, an);
                for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            if (bn->requires_grad) {
                auto& db = adjoint_of(adj, bn);
                for (size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
            }
        };
    }
    return o;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    const size_t n = a.vec().size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = a.vec()[i] * b.vec()[i];
    Tensor o = Tensor::from_data(a.shape(), std::move(out));
    if (track(a) || track(b)) {
        o.node->requires_grad = true;
        o.node->parents = {a.node, b.node};
        Node* an = a.node.get();
        Node* bn = b.node.get();
        o.node->backward = [an, bn](const std::vector<double>& g, Adjoints& adj) {
            if (an->requires_grad) {
                auto& da = adjoint_of(adj, an);
                for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bn->data[i];
            }
            if (bn->requires_grad) {
                auto& db = adjoint_of(adj, bn);
                for (size_t i = 0; i < g.size(); ++i) db[i] += g[i] * an->data[i];
            }
        };
    }
    return o;
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "div");
    const size_t n = a.vec().size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = a.vec()[i] / b.vec()[i];
    Tensor o = Tensor::from_data(a.shape(), std::move(out));
    if (track(a) || track(b)) {
        o.node->requires_grad = true;
        o.node->parents = {a.node, b.node};
        Node* an = a.node.get();
        Node* bn = b.node.get();
        o.node->backward = [an, bn](const std::vector<double>& g, Adjoints& adj) {
            if (an->requires_grad) {
                auto& da = adjoint_of(adj, an);
                for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] / bn->data[i];
            }
            if (bn->requires_grad) {
                auto& db = adjoint_of(adj, bn);
                for (size_t i = 0; i < g.size(); ++i) {
                    db[i] -= g[i] * an->data[i] / (bn->data[i] * bn->data[i]);
                }
            }
        };
    }
    return o;
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor scale(const Tensor& x, double c) {
    const size_t n = x.vec().size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = c * x.vec()[i];
    Tensor o = Tensor::from_data(x.shape(), std::move(out));
    if (track(x)) {
        o.node->requires_grad = true;
        o.node->parents = {x.node};
        Node* xn = x.node.get();
        o.node->backward = [xn, c](const std::vector<double>& g, Adjoints& adj) {
            auto& dx = adjoint_of(adj, xn);
            for (size_t i = 0; i < g.size(); ++i) dx[i] += c * g[i];
        };
    }
    return o;
}

Tensor add_const(const Tensor& x, double c) {
    const size_t n = x.vec().size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = x.vec()[i] + c;
    Tensor o = Tensor::from_data(x.shape(), std::move(out));
    if (track(x)) {
        o.node->requires_grad = true;
        o.node->parents = {x.node};
        Node* xn = x.node.get();
        o.node->backward = [xn](const std::vector<double>& g, Adjoints& adj) {
            auto& dx = adjoint_of(adj, xn);
            for (size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        };
    }
    return o;
}

Tensor relu(const Tensor& x) {
    const size_t n = x.vec().size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) {
        const double v = x.vec()[i];
        if (g_relu_sign_log) g_relu_sign_log->push_back(v > 0.0 ? 1 : 0);
        out[i] = v > 0.0 ? v : 0.0;
    }
    Tensor o = Tensor::from_data(x.shape(), std::move(out));
    if (track(x)) {
        o.node->requires_grad = true;
        o.node->parents = {x.node};
        Node* xn = x.node.get();
        o.node->backward = [xn](const std::vector<double>& g, Adjoints& adj) {
            auto& dx = adjoint_of(adj, xn);
            for (size_t i = 0; i < g.size(); ++i) {
                if (xn->data[i] > 0.0) dx[i] += g[i];
            }
        };
    }
    return o;
}

Tensor sigmoid(const Tensor& x) {
    const size_t n = x.vec().size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) {
        const double v = x.vec()[i];
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    Tensor o = Tensor::from_data(x.shape(), std::move(out));
    if (track(x)) {
        o.node->requires_grad = true;
        o.node->parents = {x.node};
        Node* xn = x.node.get();
        Node* on = o.node.get();
        o.node->backward = [xn, on](const std::vector<double>& g, Adjoints& adj) {
            auto& dx = adjoint_of(adj, xn);
            for (size_t i = 0; i < g.size(); ++i) {
                const double y = on->data[i];
                dx[i] += g[i] * y * (1.0 - y);
            }
        };
    }
    return o;
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.vec()) acc += v;
    Tensor o = Tensor::scalar(acc);
    if (track(x)) {
        o.node->requires_grad = true;
        o.node->parents = {x.node};
        Node* xn = x.node.get();
        o.node->backward = [xn](const std::vector<double>& g, Adjoints& adj) {
            auto& dx = adjoint_of(adj, xn);
            for (auto& v : dx) v += g[0];
        };
    }
    return o;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor reshape(const Tensor& x, const Shape& new_shape) {
    if (shape_numel(new_shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(new_shape));
    }
    Tensor o = Tensor::from_data(new_shape, x.vec());
    if (track(x)) {
        o.node->requires_grad = true;
        o.node->parents = {x.node};
        Node* xn = x.node.get();
        o.node->backward = [xn](const std::vector<double>& g, Adjoints& adj) {
            auto& dx = adjoint_of(adj, xn);
            for (size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        };
    }
    return o;
}

Tensor transpose2d(const Tensor& x) {
    check_rank2(x, "transpose2d");
    const int m = x.dim(0), n = x.dim(1);
    std::vector<double> out(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out[static_cast<size_t>(j) * m + i] = x.vec()[static_cast<size_t>(i) * n + j];
        }
    }
    Tensor o = Tensor::from_data({n, m}, std::move(out));
    if (track(x)) {
        o.node->requires_grad = true;
        o.node->parents = {x.node};
        Node* xn = x.node.get();
        o.node->backward = [xn, m, n](const std::vector<double>& g, Adjoints& adj) {
            auto& dx = adjoint_of(adj, xn);
            for (int j = 0; j < n; ++j) {
                for (int i = 0; i < m; ++i) {
                    dx[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
                }
            }
        };
    }
    return o;
}

Tensor slice_rows(const Tensor& x, int r0, int r1) {
    check_rank2(x, "slice_rows");
    const int m = x.dim(0), d = x.dim(1);
    if (r0 < 0 || r1 > m || r0 >= r1) {
        throw ShapeError("slice_rows: invalid range [" + std::to_string(r0) + "," +
                         std::to_string(r1) + ") for " + shape_str(x.shape()));
    }
    const int rows = r1 - r0;
    std::vector<double> out(static_cast<size_t>(rows) * d);
    std::copy_n(x.data() + static_cast<size_t>(r0) * d, out.size(), out.data());
    Tensor o = Tensor::from_data({rows, d}, std::move(out));
    if (track(x)) {
        o.node->requires_grad = true;
        o.node->parents = {x.node};
        Node* xn = x.node.get();
        o.node->backward = [xn, r0, d](const std::vector<double>& g, Adjoints& adj) {
            auto& dx = adjoint_of(adj, xn);
            const size_t base = static_cast<size_t>(r0) * d;
            for (size_t i = 0; i < g.size(); ++i) dx[base + i] += g[i];
        };
    }
    return o;
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
    check_rank2(x, "slice_cols");
    const int m = x.dim(0), d = x.dim(1);
    if (c0 < 0 || c1 > d || c0 >= c1) {
        throw ShapeError("slice_cols: invalid range [" + std::to_string(c0) + "," +
                         std::to_string(c1) + ") for " + shape_str(x.shape()));
    }
    const int cols = c1 - c0;
    std::vector<double> out(static_cast<size_t>(m) * cols);
    for (int i = 0; i < m; ++i) {
        std::copy_n(x.data() + static_cast<size_t>(i) * d + c0, cols,
                    out.data() + static_cast<size_t>(i) * cols);
    }
    Tensor o = Tensor::from_data({m, cols}, std::move(out));
    if (track(x)) {
        o.node->requires_grad = true;
        o.node->parents = {x.node};
        Node* xn = x.node.get();
        o.node->backward = [xn, c0, d, m, cols](const std::vector<double>& g, Adjoints& adj) {
            auto& dx = adjoint_of(adj, xn);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < cols; ++j) {
                    dx[static_cast<size_t>(i) * d + c0 + j] +=
                        g[static_cast<size_t>(i) * cols + j];
                }
            }
        };
    }
    return o;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    check_rank2(a, "concat_rows");
    check_rank2(b, "concat_rows");
    if (a.dim(1) != b.dim(1)) {
        throw ShapeError("concat_rows: column mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    const int ma = a.dim(0), mb = b.dim(0), d = a.dim(1);
    std::vector<double> out;
    out.reserve(static_cast<size_t>(ma + mb) * d);
    out.insert(out.end(), a.vec().begin(), a.vec().end());
    out.insert(out.end(), b.vec().begin(), b.vec().end());
    Tensor o = Tensor::from_data({ma + mb, d}, std::move(out));
    if (track(a) || track(b)) {
        o.node->requires_grad = true;
        o.node->parents = {a.node, b.node};
        Node* an = a.node.get();
        Node* bn = b.node.get();
        const size_t na = a.vec().size();
        o.node->backward = [an, bn, na](const std::vector<double>& g, Adjoints& adj) {
            if (an->requires_grad) {
                auto& da = adjoint_of(adj, an);
                for (size_t i = 0; i < na; ++i) da[i] += g[i];
            }
            if (bn->requires_grad) {
                auto& db = adjoint_of(adj, bn);
                for (size_t i = 0; i < db.size(); ++i) db[i] += g[na + i];
            }
        };
    }
    return o;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: empty input list");
    const int m = parts[0].dim(0);
    int total = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        check_rank2(p, "concat_cols");
        if (p.dim(0) != m) {
            throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                             shape_str(p.shape()));
        }
        total += p.dim(1);
        any_grad = any_grad || track(p);
    }
    std::vector<double> out(static_cast<size_t>(m) * total);
    int off = 0;
    for (const auto& p : parts) {
        const int d = p.dim(1);
        for (int i = 0; i < m; ++i) {
            std::copy_n(p.data() + static_cast<size_t>(i) * d, d,
                        out.data() + static_cast<size_t>(i) * total + off);
        }
        off += d;
    }
    Tensor o = Tensor::from_data({m, total}, std::move(out));
    if (any_grad) {
        o.node->requires_grad = true;
        std::vector<std::pair<Node*, std::pair<int, int>>> layout;  // node, (offset, width)
        off = 0;
        for (const auto& p : parts) {
            o.node->parents.push_back(p.node);
            layout.emplace_back(p.node.get(), std::make_pair(off, p.dim(1)));
            off += p.dim(1);
        }
        o.node->backward = [layout, m, total](const std::vector<double>& g, Adjoints& adj) {
            for (const auto& [pn, span] : layout) {
                if (!pn->requires_grad) continue;
                auto& dp = adjoint_of(adj, pn);
                const auto [o0, d] = span;
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < d; ++j) {
                        dp[static_cast<size_t>(i) * d + j] +=
                            g[static_cast<size_t>(i) * total + o0 + j];
                    }
                }
            }
        };
    }
    return o;
}

Tensor add_rowvec(const Tensor& x, const Tensor& bias) {
    check_rank2(x, "add_rowvec");
    if (bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
        throw ShapeError("add_rowvec: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(x.shape()));
    }
    const int m = x.dim(0), d = x.dim(1);
    std::vector<double> out(x.vec());
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < d; ++j) out[static_cast<size_t>(i) * d + j] += bias.vec()[j];
    }
    Tensor o = Tensor::from_data(x.shape(), std::move(out));
    if (track(x) || track(bias)) {
        o.node->requires_grad = true;
        o.node->parents = {x.node, bias.node};
        Node* xn = x.node.get();
        Node* bn = bias.node.get();
        o.node->backward = [xn, bn, m, d](const std::vector<double>& g, Adjoints& adj) {
            if (xn->requires_grad) {
                auto& dx = adjoint_of(adj, xn);
                for (size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
            }
            if (bn->requires_grad) {
                auto& db = adjoint_of(adj, bn);
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < d; ++j) db[j] += g[static_cast<size_t>(i) * d + j];
                }
            }
        };
    }
    return o;
}

Tensor add_broadcast_scalar(const Tensor& x, const Tensor& s) {
    if (s.numel() != 1) {
        throw ShapeError("add_broadcast_scalar: expected 1-element tensor, got " +
                         shape_str(s.shape()));
    }
    std::vector<double> out(x.vec());
    const double sv = s.vec()[0];
    for (auto& v : out) v += sv;
    Tensor o = Tensor::from_data(x.shape(), std::move(out));
    if (track(x) || track(s)) {
        o.node->requires_grad = true;
        o.node->parents = {x.node, s.node};
        Node* xn = x.node.get();
        Node* sn = s.node.get();
        o.node->backward = [xn, sn](const std::vector<double>& g, Adjoints& adj) {
            if (xn->requires_grad) {
                auto& dx = adjoint_of(adj, xn);
                for (size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
            }
            if (sn->requires_grad) {
                auto& ds = adjoint_of(adj, sn);
                for (double v : g) ds[0] += v;
            }
        };
    }
    return o;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    matmul_accum(a.data(), b.data(), out.data(), m, k, n);
    Tensor o = Tensor::from_data({m, n}, std::move(out));
    if (track(a) || track(b)) {
        o.node->requires_grad = true;
        o.node->parents = {a.node, b.node};
        Node* an = a.node.get();
        Node* bn = b.node.get();
        o.node->backward = [an, bn, m, k, n](const std::vector<double>& g, Adjoints& adj) {
            if (an->requires_grad) {
                matmul_accum_abt(g.data(), bn->data.data(), adjoint_of(adj, an).data(), m, n, k);
            }
            if (bn->requires_grad) {
                matmul_accum_atb(an->data.data(), g.data(), adjoint_of(adj, bn).data(), m, k, n);
            }
        };
    }
    return o;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_rowvec(matmul(x, w), b);
}

Tensor softmax(const Tensor& x, int axis) {
    const int r = x.rank();
    if (axis < 0 || axis >= r) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(x.shape()));
    }
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    const int64_t an = x.dim(axis);
    for (int i = axis + 1; i < r; ++i) inner *= x.dim(i);

    std::vector<double> out(x.vec().size());
    const auto& xv = x.vec();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * an * inner + in;
            double mx = xv[static_cast<size_t>(base)];
            for (int64_t i = 1; i < an; ++i) {
                mx = std::max(mx, xv[static_cast<size_t>(base + i * inner)]);
            }
            double z = 0.0;
            for (int64_t i = 0; i < an; ++i) {
                const double e = std::exp(xv[static_cast<size_t>(base + i * inner)] - mx);
                out[static_cast<size_t>(base + i * inner)] = e;
                z += e;
            }
            for (int64_t i = 0; i < an; ++i) out[static_cast<size_t>(base + i * inner)] /= z;
        }
    }
    Tensor o = Tensor::from_data(x.shape(), std::move(out));
    if (track(x)) {
        o.node->requires_grad = true;
        o.node->parents = {x.node};
        Node* xn = x.node.get();
        Node* on = o.node.get();
        o.node->backward = [xn, on, outer, an, inner](const std::vector<double>& g,
                                                      Adjoints& adj) {
            auto& dx = adjoint_of(adj, xn);
            for (int64_t o2 = 0; o2 < outer; ++o2) {
                for (int64_t in = 0; in < inner; ++in) {
                    const int64_t base = o2 * an * inner + in;
                    double dot = 0.0;
                    for (int64_t i = 0; i < an; ++i) {
                        const size_t idx = static_cast<size_t>(base + i * inner);
                        dot += g[idx] * on->data[idx];
                    }
                    for (int64_t i = 0; i < an; ++i) {
                        const size_t idx = static_cast<size_t>(base + i * inner);
                        dx[idx] += on->data[idx] * (g[idx] - dot);
                    }
                }
            }
        };
    }
    return o;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() < 1) throw ShapeError("layer_norm: scalar input");
    const int d = x.dim(x.rank() - 1);
    if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d) {
        throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(d) + "], got " +
                         shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
    }
    const int64_t rows = x.numel() / d;
    std::vector<double> out(x.vec().size());
    std::vector<double> means(static_cast<size_t>(rows));
    std::vector<double> invs(static_cast<size_t>(rows));
    const auto& xv = x.vec();
    for (int64_t r = 0; r < rows; ++r) {
        const size_t base = static_cast<size_t>(r) * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xv[base + j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xv[base + j] - mu;
            var += c * c;
        }
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        means[static_cast<size_t>(r)] = mu;
        invs[static_cast<size_t>(r)] = inv;
        for (int j = 0; j < d; ++j) {
            out[base + j] = gamma.vec()[static_cast<size_t>(j)] * (xv[base + j] - mu) * inv +
                            beta.vec()[static_cast<size_t>(j)];
        }
    }
    Tensor o = Tensor::from_data(x.shape(), std::move(out));
    if (track(x) || track(gamma) || track(beta)) {
        o.node->requires_grad = true;
        o.node->parents = {x.node, gamma.node, beta.node};
        Node* xn = x.node.get();
        Node* gn = gamma.node.get();
        Node* bn = beta.node.get();
        o.node->backward = [xn, gn, bn, d, rows, means = std::move(means),
                            invs = std::move(invs)](const std::vector<double>& g, Adjoints& adj) {
            std::vector<double>* dx = xn->requires_grad ? &adjoint_of(adj, xn) : nullptr;
            std::vector<double>* dg = gn->requires_grad ? &adjoint_of(adj, gn) : nullptr;
            std::vector<double>* db = bn->requires_grad ? &adjoint_of(adj, bn) : nullptr;
            for (int64_t r = 0; r < rows; ++r) {
                const size_t base = static_cast<size_t>(r) * d;
                const double mu = means[static_cast<size_t>(r)];
                const double inv = invs[static_cast<size_t>(r)];
                if (dg || db) {
                    for (int j = 0; j < d; ++j) {
                        const double xh = (xn->data[base + j] - mu) * inv;
                        if (dg) (*dg)[static_cast<size_t>(j)] += g[base + j] * xh;
                        if (db) (*db)[static_cast<size_t>(j)] += g[base + j];
                    }
                }
                if (dx) {
                    double sum_dxh = 0.0, sum_dxh_xc = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double dxh = g[base + j] * gn->data[static_cast<size_t>(j)];
                        sum_dxh += dxh;
                        sum_dxh_xc += dxh * (xn->data[base + j] - mu);
                    }
                    const double dvar = sum_dxh_xc * (-0.5) * inv * inv * inv;
                    const double dmu = -inv * sum_dxh;
                    for (int j = 0; j < d; ++j) {
                        const double xc = xn->data[base + j] - mu;
                        const double dxh = g[base + j] * gn->data[static_cast<size_t>(j)];
                        (*dx)[base + j] += dxh * inv + dvar * 2.0 * xc / d + dmu / d;
                    }
                }
            }
        };
    }
    return o;
}

Tensor apply_key_padding_mask(const Tensor& scores, const std::vector<bool>& key_mask) {
    check_rank2(scores, "apply_key_padding_mask");
    const int lq = scores.dim(0), lk = scores.dim(1);
    if (static_cast<int>(key_mask.size()) != lk) {
        throw ShapeError("apply_key_padding_mask: mask length " +
                         std::to_string(key_mask.size()) + " vs " + std::to_string(lk) + " keys");
    }
    bool all_masked = true;
    for (bool m : key_mask) {
        if (!m) {
            all_masked = false;
            break;
        }
    }
    if (all_masked) throw DegenerateMaskError("key padding mask covers all keys");
    std::vector<double> out(scores.vec());
    for (int i = 0; i < lq; ++i) {
        for (int j = 0; j < lk; ++j) {
            if (key_mask[static_cast<size_t>(j)]) out[static_cast<size_t>(i) * lk + j] += kMaskFill;
        }
    }
    Tensor o = Tensor::from_data(scores.shape(), std::move(out));
    if (track(scores)) {
        o.node->requires_grad = true;
        o.node->parents = {scores.node};
        Node* sn = scores.node.get();
        o.node->backward = [sn](const std::vector<double>& g, Adjoints& adj) {
            auto& ds = adjoint_of(adj, sn);
            for (size_t i = 0; i < g.size(); ++i) ds[i] += g[i];
        };
    }
    return o;
}

Tensor embedding(const std::vector<int>& ids, const Tensor& table) {
    check_rank2(table, "embedding");
    const int v = table.dim(0), c = table.dim(1);
    for (int id : ids) {
        if (id < 0 || id >= v) {
            throw DataError("embedding: token id " + std::to_string(id) +
                            " outside vocabulary of size " + std::to_string(v));
        }
    }
    const int l = static_cast<int>(ids.size());
    std::vector<double> out(static_cast<size_t>(l) * c);
    for (int i = 0; i < l; ++i) {
        std::copy_n(table.data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * c, c,
                    out.data() + static_cast<size_t>(i) * c);
    }
    Tensor o = Tensor::from_data({l, c}, std::move(out));
    if (track(table)) {
        o.node->requires_grad = true;
        o.node->parents = {table.node};
        Node* tn = table.node.get();
        o.node->backward = [tn, ids, c](const std::vector<double>& g, Adjoints& adj) {
            auto& dt = adjoint_of(adj, tn);
            for (size_t i = 0; i < ids.size(); ++i) {
                const size_t dst = static_cast<size_t>(ids[i]) * c;
                for (int j = 0; j < c; ++j) dt[dst + j] += g[i * c + j];
            }
        };
    }
    return o;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const MhaWeights& w, int heads,
                            const std::vector<bool>* key_padding_mask, AttentionProbe* probe) {
    check_rank2(q, "multi_head_attention");
    check_rank2(k, "multi_head_attention");
    check_rank2(v, "multi_head_attention");
    const int d = q.dim(1);
    if (k.dim(1) != d || v.dim(1) != d) {
        throw ShapeError("multi_head_attention: q/k/v channel mismatch " + shape_str(q.shape()) +
                         " " + shape_str(k.shape()) + " " + shape_str(v.shape()));
    }
    if (k.dim(0) != v.dim(0)) {
        throw ShapeError("multi_head_attention: key/value length mismatch");
    }
    if (heads <= 0 || d % heads != 0) {
        throw ConfigError("multi_head_attention: model dim " + std::to_string(d) +
                          " not divisible by heads " + std::to_string(heads));
    }
    if (key_padding_mask) {
        if (static_cast<int>(key_padding_mask->size()) != k.dim(0)) {
            throw ShapeError("multi_head_attention: mask length mismatch");
        }
        bool all = true;
        for (bool m : *key_padding_mask) all = all && m;
        if (all) throw DegenerateMaskError("multi_head_attention: all keys masked");
    }

    const int dh = d / heads;
    const double scaling = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor qp = linear(q, w.wq, w.bq);
    Tensor kp = linear(k, w.wk, w.bk);
    Tensor vp = linear(v, w.wv, w.bv);

    if (probe) {
        probe->heads = heads;
        probe->lq = q.dim(0);
        probe->lk = k.dim(0);
        probe->weights.clear();
    }

    std::vector<Tensor> head_outs;
    head_outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(qp, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(kp, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(vp, h * dh, (h + 1) * dh);
        Tensor scores = scale(matmul(qh, transpose2d(kh)), scaling);
        if (key_padding_mask) scores = apply_key_padding_mask(scores, *key_padding_mask);
        Tensor weights = softmax(scores, 1);
        if (probe) probe->weights.push_back(weights.vec());
        head_outs.push_back(matmul(weights, vh));
    }
    Tensor merged = heads == 1 ? head_outs[0] : concat_cols(head_outs);
    return linear(merged, w.wo, w.bo);
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride, int padding) {
    if (x.rank() != 3) {
        throw ShapeError("conv2d: input must be [h x w x c], got " + shape_str(x.shape()));
    }
    if (kernel.rank() != 4) {
        throw ShapeError("conv2d: kernel must be [kh x kw x c_in x c_out], got " +
                         shape_str(kernel.shape()));
    }
    const int h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
    const int kh = kernel.dim(0), kw = kernel.dim(1);
    if (kernel.dim(2) != cin) {
        throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.dim(2)) +
                         " input channels, input has " + std::to_string(cin));
    }
    if (stride <= 0) throw ConfigError("conv2d: stride must be positive");
    if (padding < 0) throw ConfigError("conv2d: padding must be non-negative");
    const int cout = kernel.dim(3);
    const int oh = (h + 2 * padding - kh) / stride + 1;
    const int ow = (wd + 2 * padding - kw) / stride + 1;
    if (h + 2 * padding < kh || wd + 2 * padding < kw) {
        throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) +
                         " larger than padded input " + shape_str(x.shape()));
    }

    std::vector<double> out(static_cast<size_t>(oh) * ow * cout, 0.0);
    const double* xd = x.data();
    const double* kd = kernel.data();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            double* orow = out.data() + (static_cast<size_t>(oy) * ow + ox) * cout;
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy * stride - padding + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox * stride - padding + kx;
                    if (ix < 0 || ix >= wd) continue;
                    const double* xrow = xd + (static_cast<size_t>(iy) * wd + ix) * cin;
                    const double* krow =
                        kd + (static_cast<size_t>(ky) * kw + kx) * cin * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const double xv = xrow[ci];
                        const double* kslice = krow + static_cast<size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) orow[co] += xv * kslice[co];
                    }
                }
            }
        }
    }
    Tensor o = Tensor::from_data({oh, ow, cout}, std::move(out));
    if (track(x) || track(kernel)) {
        o.node->requires_grad = true;
        o.node->parents = {x.node, kernel.node};
        Node* xn = x.node.get();
        Node* kn = kernel.node.get();
        o.node->backward = [xn, kn, h, wd, cin, kh, kw, cout, oh, ow, stride,
                            padding](const std::vector<double>& g, Adjoints& adj) {
            std::vector<double>* dx = xn->requires_grad ? &adjoint_of(adj, xn) : nullptr;
            std::vector<double>* dk = kn->requires_grad ? &adjoint_of(adj, kn) : nullptr;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const double* grow = g.data() + (static_cast<size_t>(oy) * ow + ox) * cout;
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy * stride - padding + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ox * stride - padding + kx;
                            if (ix < 0 || ix >= wd) continue;
                            const size_t xbase = (static_cast<size_t>(iy) * wd + ix) * cin;
                            const size_t kbase =
                                (static_cast<size_t>(ky) * kw + kx) * cin * cout;
                            for (int ci = 0; ci < cin; ++ci) {
                                const double xv = xn->data[xbase + ci];
                                const double* kslice =
                                    kn->data.data() + kbase + static_cast<size_t>(ci) * cout;
                                double accum = 0.0;
                                for (int co = 0; co < cout; ++co) {
                                    const double gv = grow[co];
                                    if (dk) {
                                        (*dk)[kbase + static_cast<size_t>(ci) * cout + co] +=
                                            xv * gv;
                                    }
                                    accum += kslice[co] * gv;
                                }
                                if (dx) (*dx)[xbase + ci] += accum;
                            }
                        }
                    }
                }
            }
        };
    }
    return o;
}

Tensor bilinear_upsample(const Tensor& x, int out_h, int out_w) {
    const bool has_channels = x.rank() == 3;
    if (x.rank() != 2 && x.rank() != 3) {
        throw ShapeError("bilinear_upsample: input must be [h x w] or [h x w x c], got " +
                         shape_str(x.shape()));
    }
    if (out_h <= 0 || out_w <= 0) {
        throw ShapeError("bilinear_upsample: target size must be positive, got " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
    }
    const int h = x.dim(0), w = x.dim(1);
    const int c = has_channels ? x.dim(2) : 1;
    if (out_h < h || out_w < w) {
        throw ShapeError("bilinear_upsample: target " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " smaller than input " + shape_str(x.shape()));
    }

    // align-corners=false source coordinates, clamped at the borders
    struct Tap {
        int i0, i1;
        double w0, w1;
    };
    auto make_taps = [](int in_n, int out_n) {
        std::vector<Tap> taps(static_cast<size_t>(out_n));
        const double s = static_cast<double>(in_n) / out_n;
        for (int o = 0; o < out_n; ++o) {
            double src = (o + 0.5) * s - 0.5;
            if (src < 0.0) src = 0.0;
            if (src > in_n - 1) src = in_n - 1;
            const int i0 = static_cast<int>(std::floor(src));
            const int i1 = std::min(i0 + 1, in_n - 1);
            const double f = src - i0;
            taps[static_cast<size_t>(o)] = {i0, i1, 1.0 - f, f};
        }
        return taps;
    };
    const auto ty = make_taps(h, out_h);
    const auto tx = make_taps(w, out_w);

    std::vector<double> out(static_cast<size_t>(out_h) * out_w * c);
    const double* xd = x.data();
    for (int oy = 0; oy < out_h; ++oy) {
        const Tap& a = ty[static_cast<size_t>(oy)];
        for (int ox = 0; ox < out_w; ++ox) {
            const Tap& b = tx[static_cast<size_t>(ox)];
            double* orow = out.data() + (static_cast<size_t>(oy) * out_w + ox) * c;
            const double* r00 = xd + (static_cast<size_t>(a.i0) * w + b.i0) * c;
            const double* r01 = xd + (static_cast<size_t>(a.i0) * w + b.i1) * c;
            const double* r10 = xd + (static_cast<size_t>(a.i1) * w + b.i0) * c;
            const double* r11 = xd + (static_cast<size_t>(a.i1) * w + b.i1) * c;
            for (int ch = 0; ch < c; ++ch) {
                orow[ch] = a.w0 * (b.w0 * r00[ch] + b.w1 * r01[ch]) +
                           a.w1 * (b.w0 * r10[ch] + b.w1 * r11[ch]);
            }
        }
    }
    Shape out_shape = has_channels ? Shape{out_h, out_w, c} : Shape{out_h, out_w};
    Tensor o = Tensor::from_data(out_shape, std::move(out));
    if (track(x)) {
        o.node->requires_grad = true;
        o.node->parents = {x.node};
        Node* xn = x.node.get();
        o.node->backward = [xn, ty, tx, w, c, out_h, out_w](const std::vector<double>& g,
                                                            Adjoints& adj) {
            auto& dx = adjoint_of(adj, xn);
            for (int oy = 0; oy < out_h; ++oy) {
                const Tap& a = ty[static_cast<size_t>(oy)];
                for (int ox = 0; ox < out_w; ++ox) {
                    const Tap& b = tx[static_cast<size_t>(ox)];
                    const double* grow = g.data() + (static_cast<size_t>(oy) * out_w + ox) * c;
                    for (int ch = 0; ch < c; ++ch) {
                        const double gv = grow[ch];
                        dx[(static_cast<size_t>(a.i0) * w + b.i0) * c + ch] += a.w0 * b.w0 * gv;
                        dx[(static_cast<size_t>(a.i0) * w + b.i1) * c + ch] += a.w0 * b.w1 * gv;
                        dx[(static_cast<size_t>(a.i1) * w + b.i0) * c + ch] += a.w1 * b.w0 * gv;
                        dx[(static_cast<size_t>(a.i1) * w + b.i1) * c + ch] += a.w1 * b.w1 * gv;
                    }
                }
            }
        };
    }
    return o;
}

Tensor positional_embedding_2d(int h, int w, int dim) {
    if (dim % 4 != 0) {
        throw ConfigError("positional_embedding_2d: dim " + std::to_string(dim) +
                          " must be divisible by 4");
    }
    const int quarter = dim / 4;
    std::vector<double> out(static_cast<size_t>(h) * w * dim);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double* row = out.data() + (static_cast<size_t>(y) * w + x) * dim;
            for (int j = 0; j < quarter; ++j) {
                const double omega =
                    1.0 / std::pow(10000.0, static_cast<double>(j) / quarter);
                row[2 * j] = std::sin(y * omega);
                row[2 * j + 1] = std::cos(y * omega);
                row[dim / 2 + 2 * j] = std::sin(x * omega);
                row[dim / 2 + 2 * j + 1] = std::cos(x * omega);
            }
        }
    }
    return Tensor::from_data({h * w, dim}, std::move(out));
}

Tensor positional_embedding_1d(int len, int dim) {
    if (dim % 2 != 0) {
        throw ConfigError("positional_embedding_1d: dim " + std::to_string(dim) +
                          " must be even");
    }
    const int half = dim / 2;
    std::vector<double> out(static_cast<size_t>(len) * dim);
    for (int p = 0; p < len; ++p) {
        double* row = out.data() + static_cast<size_t>(p) * dim;
        for (int j = 0; j < half; ++j) {
            const double omega = 1.0 / std::pow(10000.0, static_cast<double>(j) / half);
            row[2 * j] = std::sin(p * omega);
            row[2 * j + 1] = std::cos(p * omega);
        }
    }
    return Tensor::from_data({len, dim}, std::move(out));
}

Tensor bce_with_logits_mean(const Tensor& logits, const Tensor& targets) {
    check_same_shape(logits, targets, "bce_with_logits_mean");
    for (double t : targets.vec()) {
        if (t != 0.0 && t != 1.0) {
            throw DataError("bce_with_logits_mean: target values must be exactly 0 or 1, got " +
                            std::to_string(t));
        }
    }
    const size_t n = logits.vec().size();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double z = logits.vec()[i];
        const double y = targets.vec()[i];
        acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
    }
    Tensor o = Tensor::scalar(acc / static_cast<double>(n));
    if (track(logits)) {
        o.node->requires_grad = true;
        o.node->parents = {logits.node, targets.node};
        Node* zn = logits.node.get();
        Node* yn = targets.node.get();
        o.node->backward = [zn, yn, n](const std::vector<double>& g, Adjoints& adj) {
            auto& dz = adjoint_of(adj, zn);
            const double inv_n = 1.0 / static_cast<double>(n);
            for (size_t i = 0; i < n; ++i) {
                const double z = zn->data[i];
                const double p =
                    z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
                dz[i] += g[0] * (p - yn->data[i]) * inv_n;
            }
        };
    }
    return o;
}

}  // namespace fan
