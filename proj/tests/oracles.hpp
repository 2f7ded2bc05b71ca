#pragma once

// Test-only reference implementations: plain-loop oracles kept independent of
// the library's operator code paths, plus small input generators.

#include <algorithm>
#include <cmath>
#include <vector>

#include "fan/ops.hpp"
#include "fan/rng.hpp"
#include "fan/tensor.hpp"

namespace oracles {

using fan::MhaWeights;
using fan::Rng;
using fan::Shape;
using fan::Tensor;

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  int m, int k, int n) {
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < k; ++p)
                out[static_cast<size_t>(i) * n + j] +=
                    a[static_cast<size_t>(i) * k + p] * b[static_cast<size_t>(p) * n + j];
    return out;
}

// y = x W + b with x: [rows x in], W: [in x out]
inline std::vector<double> linear(const std::vector<double>& x, int rows, int in,
                                  const std::vector<double>& w, const std::vector<double>& b,
                                  int out) {
    std::vector<double> y(static_cast<size_t>(rows) * out);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < out; ++j) {
            double acc = b[static_cast<size_t>(j)];
            for (int p = 0; p < in; ++p)
                acc += x[static_cast<size_t>(i) * in + p] * w[static_cast<size_t>(p) * out + j];
            y[static_cast<size_t>(i) * out + j] = acc;
        }
    return y;
}

inline std::vector<double> softmax_vec(const std::vector<double>& x) {
    long double z = 0.0L;
    std::vector<long double> e(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        e[i] = expl(static_cast<long double>(x[i]));
        z += e[i];
    }
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(e[i] / z);
    return out;
}

inline std::vector<double> layer_norm(const std::vector<double>& x, int rows, int d,
                                      const std::vector<double>& gamma,
                                      const std::vector<double>& beta, double eps = 1e-5) {
    std::vector<double> out(x.size());
    for (int r = 0; r < rows; ++r) {
        const size_t base = static_cast<size_t>(r) * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += x[base + j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (x[base + j] - mu) * (x[base + j] - mu);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < d; ++j)
            out[base + j] = gamma[static_cast<size_t>(j)] * (x[base + j] - mu) * inv +
                            beta[static_cast<size_t>(j)];
    }
    return out;
}

inline std::vector<double> relu(std::vector<double> x) {
    for (auto& v : x) v = v > 0 ? v : 0.0;
    return x;
}

inline std::vector<double> add(std::vector<double> a, const std::vector<double>& b) {
    for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

inline double bilinear_at(const std::vector<double>& x, int h, int w, int c, int out_h,
                          int out_w, int oy, int ox, int ch) {
    auto src = [](int o, int in_n, int out_n) {
        double s = (o + 0.5) * static_cast<double>(in_n) / out_n - 0.5;
        if (s < 0) s = 0;
        if (s > in_n - 1) s = in_n - 1;
        return s;
    };
    const double sy = src(oy, h, out_h);
    const double sx = src(ox, w, out_w);
    const int y0 = static_cast<int>(std::floor(sy)), y1 = std::min(y0 + 1, h - 1);
    const int x0 = static_cast<int>(std::floor(sx)), x1 = std::min(x0 + 1, w - 1);
    const double fy = sy - y0, fx = sx - x0;
    auto at = [&](int y, int xx) { return x[(static_cast<size_t>(y) * w + xx) * c + ch]; };
    return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
           fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

inline std::vector<double> bilinear(const std::vector<double>& x, int h, int w, int c, int out_h,
                                    int out_w) {
    std::vector<double> out(static_cast<size_t>(out_h) * out_w * c);
    for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox)
            for (int ch = 0; ch < c; ++ch)
                out[(static_cast<size_t>(oy) * out_w + ox) * c + ch] =
                    bilinear_at(x, h, w, c, out_h, out_w, oy, ox, ch);
    return out;
}

inline std::vector<double> conv2d(const std::vector<double>& x, int h, int w, int cin,
                                  const std::vector<double>& k, int kh, int kw, int cout,
                                  int stride, int pad, int oh, int ow) {
    std::vector<double> out(static_cast<size_t>(oh) * ow * cout, 0.0);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int co = 0; co < cout; ++co) {
                double acc = 0.0;
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx)
                        for (int ci = 0; ci < cin; ++ci) {
                            const int iy = oy * stride - pad + ky;
                            const int ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += x[(static_cast<size_t>(iy) * w + ix) * cin + ci] *
                                   k[((static_cast<size_t>(ky) * kw + kx) * cin + ci) * cout + co];
                        }
                out[(static_cast<size_t>(oy) * ow + ox) * cout + co] = acc;
            }
    return out;
}

// Step-by-step multi-head attention, one query at a time.
inline std::vector<double> mha(const std::vector<double>& q, int lq, const std::vector<double>& k,
                               const std::vector<double>& v, int lk, int d, int heads,
                               const MhaWeights& w, const std::vector<bool>* mask) {
    const auto qp = linear(q, lq, d, w.wq.vec(), w.bq.vec(), d);
    const auto kp = linear(k, lk, d, w.wk.vec(), w.bk.vec(), d);
    const auto vp = linear(v, lk, d, w.wv.vec(), w.bv.vec(), d);
    const int dh = d / heads;
    std::vector<double> merged(static_cast<size_t>(lq) * d, 0.0);
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < lq; ++i) {
            std::vector<double> scores(static_cast<size_t>(lk));
            for (int j = 0; j < lk; ++j) {
                double acc = 0.0;
                for (int p = 0; p < dh; ++p)
                    acc += qp[static_cast<size_t>(i) * d + h * dh + p] *
                           kp[static_cast<size_t>(j) * d + h * dh + p];
                scores[static_cast<size_t>(j)] = acc / std::sqrt(static_cast<double>(dh));
                if (mask && (*mask)[static_cast<size_t>(j)])
                    scores[static_cast<size_t>(j)] += -1e9;
            }
            double mx = scores[0];
            for (double s : scores) mx = std::max(mx, s);
            double z = 0.0;
            for (auto& s : scores) {
                s = std::exp(s - mx);
                z += s;
            }
            for (auto& s : scores) s /= z;
            for (int p = 0; p < dh; ++p) {
                double acc = 0.0;
                for (int j = 0; j < lk; ++j)
                    acc += scores[static_cast<size_t>(j)] *
                           vp[static_cast<size_t>(j) * d + h * dh + p];
                merged[static_cast<size_t>(i) * d + h * dh + p] = acc;
            }
        }
    }
    return linear(merged, lq, d, w.wo.vec(), w.bo.vec(), d);
}

// ---- generators ----

inline Tensor random_tensor(const Shape& s, Rng& rng, double sd = 1.0, bool rg = false) {
    Tensor t = Tensor::zeros(s, rg);
    for (auto& v : t.vec()) v = rng.normal(0.0, sd);
    return t;
}

inline MhaWeights random_mha_weights(int d, Rng& rng, bool requires_grad = false) {
    auto mk = [&](const Shape& s) {
        Tensor t = Tensor::zeros(s, requires_grad);
        for (auto& v : t.vec()) v = rng.normal(0.0, 0.3);
        return t;
    };
    MhaWeights w;
    w.wq = mk({d, d});
    w.bq = mk({d});
    w.wk = mk({d, d});
    w.bk = mk({d});
    w.wv = mk({d, d});
    w.bv = mk({d});
    w.wo = mk({d, d});
    w.bo = mk({d});
    return w;
}

}  // namespace oracles
