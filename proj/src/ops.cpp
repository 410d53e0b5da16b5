#include "ditcache/ops.hpp"

#include <cfloat>
#include <cmath>

#include "ditcache/errors.hpp"

namespace ditcache::ad {

namespace {

using Impl = std::shared_ptr<TensorImpl>;

Tensor make(Shape shape, std::vector<double> vals) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->values = std::move(vals);
    return Tensor::wrap(std::move(impl));
}

std::vector<double>& ensure_grad(const Impl& t) {
    if (t->grad.empty())
        t->grad.assign(t->values.size(), 0.0);
    return t->grad;
}

bool tracked(const Tensor& a) { return a.defined() && a.requires_grad(); }

void record(Tensor& out, Tape::BackFn fn) { Tape::active().record(out, std::move(fn)); }

[[noreturn]] void broadcast_error(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " are not broadcast-compatible "
                     "(only scalar and full-shape broadcasting supported)");
}

enum class BinKind { add, sub, mul };

Tensor binary_op(BinKind kind, const char* name, const Tensor& a, const Tensor& b) {
    const bool a_scalar = a.size() == 1;
    const bool b_scalar = b.size() == 1;
    const bool same = a.shape() == b.shape();
    if (!same && !a_scalar && !b_scalar)
        broadcast_error(name, a, b);

    const auto& av = a.values();
    const auto& bv = b.values();
    const Tensor& big = (same || b_scalar) ? a : b;
    const size_t n = static_cast<size_t>(big.size());
    std::vector<double> out(n);
    for (size_t i = 0; i < n; i++) {
        double x = a_scalar && !same ? av[0] : av[i];
        double y = b_scalar && !same ? bv[0] : bv[i];
        switch (kind) {
            case BinKind::add: out[i] = x + y; break;
            case BinKind::sub: out[i] = x - y; break;
            case BinKind::mul: out[i] = x * y; break;
        }
    }
    Tensor res = make(big.shape(), std::move(out));
    if (!tracked(a) && !tracked(b))
        return res;

    Impl ai = a.ptr(), bi = b.ptr(), oi = res.ptr();
    bool asc = a_scalar && !same, bsc = b_scalar && !same;
    record(res, [kind, ai, bi, oi, asc, bsc, n]() {
        if (oi->grad.empty())
            return;
        const auto& go = oi->grad;
        if (ai->requires_grad) {
            auto& ga = ensure_grad(ai);
            for (size_t i = 0; i < n; i++) {
                double g = go[i];
                if (kind == BinKind::mul)
                    g *= bsc ? bi->values[0] : bi->values[i];
                ga[asc ? 0 : i] += g;
            }
        }
        if (bi->requires_grad) {
            auto& gb = ensure_grad(bi);
            for (size_t i = 0; i < n; i++) {
                double g = go[i];
                if (kind == BinKind::sub)
                    g = -g;
                else if (kind == BinKind::mul)
                    g = go[i] * (asc ? ai->values[0] : ai->values[i]);
                gb[bsc ? 0 : i] += g;
            }
        }
    });
    return res;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(BinKind::add, "add", a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(BinKind::sub, "sub", a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(BinKind::mul, "mul", a, b); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    const int ra = static_cast<int>(as.size());
    const int rb = static_cast<int>(bs.size());
    if (!((ra == 2 && rb == 2) || (ra == 3 && rb == 2) || (ra == 3 && rb == 3)))
        throw ShapeError("matmul: unsupported ranks for shapes " + shape_str(as) + " x " +
                         shape_str(bs));
    const int B = ra == 3 ? as[0] : 1;
    const int m = as[ra - 2], k = as[ra - 1];
    const int kb = bs[rb - 2], n = bs[rb - 1];
    const bool b_batched = rb == 3;
    if (k != kb || (b_batched && bs[0] != B))
        throw ShapeError("matmul: inner dimensions disagree for shapes " + shape_str(as) +
                         " x " + shape_str(bs));

    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(static_cast<size_t>(B) * m * n, 0.0);
    for (int bb = 0; bb < B; bb++) {
        const double* A = av.data() + static_cast<size_t>(bb) * m * k;
        const double* Bm = bv.data() + (b_batched ? static_cast<size_t>(bb) * k * n : 0);
        double* C = out.data() + static_cast<size_t>(bb) * m * n;
        for (int i = 0; i < m; i++) {
            for (int kk = 0; kk < k; kk++) {
                const double aik = A[static_cast<size_t>(i) * k + kk];
                const double* Brow = Bm + static_cast<size_t>(kk) * n;
                double* Crow = C + static_cast<size_t>(i) * n;
                for (int j = 0; j < n; j++)
                    Crow[j] += aik * Brow[j];
            }
        }
    }
    Shape oshape = ra == 3 ? Shape{B, m, n} : Shape{m, n};
    Tensor res = make(std::move(oshape), std::move(out));
    if (!tracked(a) && !tracked(b))
        return res;

    Impl ai = a.ptr(), bi = b.ptr(), oi = res.ptr();
    record(res, [ai, bi, oi, B, m, k, n, b_batched]() {
        if (oi->grad.empty())
            return;
        const auto& go = oi->grad;
        if (ai->requires_grad) {
            auto& ga = ensure_grad(ai);
            for (int bb = 0; bb < B; bb++) {
                const double* G = go.data() + static_cast<size_t>(bb) * m * n;
                const double* Bm =
                    bi->values.data() + (b_batched ? static_cast<size_t>(bb) * k * n : 0);
                double* dA = ga.data() + static_cast<size_t>(bb) * m * k;
                for (int i = 0; i < m; i++)
                    for (int kk = 0; kk < k; kk++) {
                        const double* Grow = G + static_cast<size_t>(i) * n;
                        const double* Brow = Bm + static_cast<size_t>(kk) * n;
                        double s = 0.0;
                        for (int j = 0; j < n; j++)
                            s += Grow[j] * Brow[j];
                        dA[static_cast<size_t>(i) * k + kk] += s;
                    }
            }
        }
        if (bi->requires_grad) {
            auto& gb = ensure_grad(bi);
            for (int bb = 0; bb < B; bb++) {
                const double* G = go.data() + static_cast<size_t>(bb) * m * n;
                const double* A = ai->values.data() + static_cast<size_t>(bb) * m * k;
                double* dB = gb.data() + (b_batched ? static_cast<size_t>(bb) * k * n : 0);
                for (int i = 0; i < m; i++)
                    for (int kk = 0; kk < k; kk++) {
                        const double aik = A[static_cast<size_t>(i) * k + kk];
                        const double* Grow = G + static_cast<size_t>(i) * n;
                        double* dBrow = dB + static_cast<size_t>(kk) * n;
                        for (int j = 0; j < n; j++)
                            dBrow[j] += aik * Grow[j];
                    }
            }
        }
    });
    return res;
}

Tensor scale(const Tensor& a, double c) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); i++)
        out[i] = av[i] * c;
    Tensor res = make(a.shape(), std::move(out));
    if (!tracked(a))
        return res;
    Impl ai = a.ptr(), oi = res.ptr();
    record(res, [ai, oi, c]() {
        if (oi->grad.empty())
            return;
        auto& ga = ensure_grad(ai);
        for (size_t i = 0; i < ga.size(); i++)
            ga[i] += oi->grad[i] * c;
    });
    return res;
}

Tensor gelu(const Tensor& a) {
    static const double inv_sqrt2 = 0.70710678118654752440;
    static const double inv_sqrt2pi = 0.39894228040143267794;
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); i++)
        out[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] * inv_sqrt2));
    Tensor res = make(a.shape(), std::move(out));
    if (!tracked(a))
        return res;
    Impl ai = a.ptr(), oi = res.ptr();
    record(res, [ai, oi]() {
        if (oi->grad.empty())
            return;
        auto& ga = ensure_grad(ai);
        for (size_t i = 0; i < ga.size(); i++) {
            double x = ai->values[i];
            double phi = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            ga[i] += oi->grad[i] * (phi + x * pdf);
        }
    });
    return res;
}

Tensor sigmoid(const Tensor& a) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); i++) {
        double y = 1.0 / (1.0 + std::exp(-av[i]));
        // keep the open interval even for saturating inputs
        if (y >= 1.0)
            y = 1.0 - DBL_EPSILON / 2;
        else if (y <= 0.0)
            y = DBL_MIN;
        out[i] = y;
    }
    Tensor res = make(a.shape(), std::move(out));
    if (!tracked(a))
        return res;
    Impl ai = a.ptr(), oi = res.ptr();
    record(res, [ai, oi]() {
        if (oi->grad.empty())
            return;
        auto& ga = ensure_grad(ai);
        for (size_t i = 0; i < ga.size(); i++) {
            double y = oi->values[i];
            ga[i] += oi->grad[i] * y * (1.0 - y);
        }
    });
    return res;
}

Tensor softmax(const Tensor& a) {
    const auto& av = a.values();
    const int d = a.shape().back();
    const size_t rows = av.size() / d;
    std::vector<double> out(av.size());
    for (size_t r = 0; r < rows; r++) {
        const double* x = av.data() + r * d;
        double* y = out.data() + r * d;
        double mx = x[0];
        for (int j = 1; j < d; j++)
            mx = std::max(mx, x[j]);
        double s = 0.0;
        for (int j = 0; j < d; j++) {
            y[j] = std::exp(x[j] - mx);
            s += y[j];
        }
        for (int j = 0; j < d; j++)
            y[j] /= s;
    }
    Tensor res = make(a.shape(), std::move(out));
    if (!tracked(a))
        return res;
    Impl ai = a.ptr(), oi = res.ptr();
    record(res, [ai, oi, d, rows]() {
        if (oi->grad.empty())
            return;
        auto& ga = ensure_grad(ai);
        for (size_t r = 0; r < rows; r++) {
            const double* y = oi->values.data() + r * d;
            const double* go = oi->grad.data() + r * d;
            double dot = 0.0;
            for (int j = 0; j < d; j++)
                dot += go[j] * y[j];
            for (int j = 0; j < d; j++)
                ga[r * d + j] += y[j] * (go[j] - dot);
        }
    });
    return res;
}

Tensor layernorm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
    const int d = a.shape().back();
    if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
        throw ShapeError("layernorm: scale/shift must have shape [" + std::to_string(d) +
                         "], got " + shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
    const auto& av = a.values();
    const size_t rows = av.size() / d;
    std::vector<double> out(av.size());
    std::vector<double> means(rows), rstds(rows);
    for (size_t r = 0; r < rows; r++) {
        const double* x = av.data() + r * d;
        double m = 0.0;
        for (int j = 0; j < d; j++)
            m += x[j];
        m /= d;
        double var = 0.0;
        for (int j = 0; j < d; j++) {
            double c = x[j] - m;
            var += c * c;
        }
        var /= d;
        double rstd = 1.0 / std::sqrt(var + eps);
        means[r] = m;
        rstds[r] = rstd;
        double* y = out.data() + r * d;
        for (int j = 0; j < d; j++)
            y[j] = (x[j] - m) * rstd * gamma.values()[j] + beta.values()[j];
    }
    Tensor res = make(a.shape(), std::move(out));
    if (!tracked(a) && !tracked(gamma) && !tracked(beta))
        return res;
    Impl ai = a.ptr(), gi = gamma.ptr(), bi = beta.ptr(), oi = res.ptr();
    record(res, [ai, gi, bi, oi, d, rows, means = std::move(means), rstds = std::move(rstds)]() {
        if (oi->grad.empty())
            return;
        const auto& go = oi->grad;
        for (size_t r = 0; r < rows; r++) {
            const double* x = ai->values.data() + r * d;
            const double* g = go.data() + r * d;
            const double m = means[r], rstd = rstds[r];
            double dnorm_mean = 0.0, dnorm_norm_mean = 0.0;
            for (int j = 0; j < d; j++) {
                double norm = (x[j] - m) * rstd;
                double dnorm = gi->values[j] * g[j];
                dnorm_mean += dnorm;
                dnorm_norm_mean += dnorm * norm;
            }
            dnorm_mean /= d;
            dnorm_norm_mean /= d;
            if (ai->requires_grad) {
                auto& ga = ensure_grad(ai);
                for (int j = 0; j < d; j++) {
                    double norm = (x[j] - m) * rstd;
                    double dnorm = gi->values[j] * g[j];
                    ga[r * d + j] += (dnorm - dnorm_mean - norm * dnorm_norm_mean) * rstd;
                }
            }
            if (gi->requires_grad) {
                auto& gg = ensure_grad(gi);
                for (int j = 0; j < d; j++)
                    gg[j] += (x[j] - m) * rstd * g[j];
            }
            if (bi->requires_grad) {
                auto& gb = ensure_grad(bi);
                for (int j = 0; j < d; j++)
                    gb[j] += g[j];
            }
        }
    });
    return res;
}

Tensor frobenius_sq(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("frobenius_sq: shapes differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const auto& av = a.values();
    const auto& bv = b.values();
    double s = 0.0;
    for (size_t i = 0; i < av.size(); i++) {
        double dlt = av[i] - bv[i];
        s += dlt * dlt;
    }
    Tensor res = make({1}, {s});
    if (!tracked(a) && !tracked(b))
        return res;
    Impl ai = a.ptr(), bi = b.ptr(), oi = res.ptr();
    record(res, [ai, bi, oi]() {
        if (oi->grad.empty())
            return;
        const double g0 = oi->grad[0];
        if (ai->requires_grad) {
            auto& ga = ensure_grad(ai);
            for (size_t i = 0; i < ga.size(); i++)
                ga[i] += 2.0 * (ai->values[i] - bi->values[i]) * g0;
        }
        if (bi->requires_grad) {
            auto& gb = ensure_grad(bi);
            for (size_t i = 0; i < gb.size(); i++)
                gb[i] -= 2.0 * (ai->values[i] - bi->values[i]) * g0;
        }
    });
    return res;
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values())
        s += v;
    Tensor res = make({1}, {s});
    if (!tracked(a))
        return res;
    Impl ai = a.ptr(), oi = res.ptr();
    record(res, [ai, oi]() {
        if (oi->grad.empty())
            return;
        auto& ga = ensure_grad(ai);
        const double g0 = oi->grad[0];
        for (size_t i = 0; i < ga.size(); i++)
            ga[i] += g0;
    });
    return res;
}

Tensor add_rows(const Tensor& x, const Tensor& v) {
    const auto& xs = x.shape();
    const auto& vs = v.shape();
    if (xs.size() != 3 || vs.size() != 2 || xs[0] != vs[0] || xs[2] != vs[1])
        throw ShapeError("add_rows: expected (B,T,d)+(B,d), got " + shape_str(xs) + " + " +
                         shape_str(vs));
    const int B = xs[0], T = xs[1], d = xs[2];
    const auto& xv = x.values();
    const auto& vv = v.values();
    std::vector<double> out(xv.size());
    for (int b = 0; b < B; b++)
        for (int t = 0; t < T; t++)
            for (int j = 0; j < d; j++)
                out[(static_cast<size_t>(b) * T + t) * d + j] =
                    xv[(static_cast<size_t>(b) * T + t) * d + j] + vv[static_cast<size_t>(b) * d + j];
    Tensor res = make(xs, std::move(out));
    if (!tracked(x) && !tracked(v))
        return res;
    Impl xi = x.ptr(), vi = v.ptr(), oi = res.ptr();
    record(res, [xi, vi, oi, B, T, d]() {
        if (oi->grad.empty())
            return;
        const auto& go = oi->grad;
        if (xi->requires_grad) {
            auto& gx = ensure_grad(xi);
            for (size_t i = 0; i < gx.size(); i++)
                gx[i] += go[i];
        }
        if (vi->requires_grad) {
            auto& gv = ensure_grad(vi);
            for (int b = 0; b < B; b++)
                for (int t = 0; t < T; t++)
                    for (int j = 0; j < d; j++)
                        gv[static_cast<size_t>(b) * d + j] +=
                            go[(static_cast<size_t>(b) * T + t) * d + j];
        }
    });
    return res;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& idx) {
    const auto& ts = table.shape();
    if (ts.size() != 2)
        throw ShapeError("gather_rows: table must be rank 2, got " + shape_str(ts));
    const int V = ts[0], d = ts[1];
    for (int id : idx)
        if (id < 0 || id >= V)
            throw ShapeError("gather_rows: index " + std::to_string(id) + " out of range [0," +
                             std::to_string(V) + ")");
    const int B = static_cast<int>(idx.size());
    std::vector<double> out(static_cast<size_t>(B) * d);
    for (int b = 0; b < B; b++)
        for (int j = 0; j < d; j++)
            out[static_cast<size_t>(b) * d + j] = table.values()[static_cast<size_t>(idx[b]) * d + j];
    Tensor res = make({B, d}, std::move(out));
    if (!tracked(table))
        return res;
    Impl ti = table.ptr(), oi = res.ptr();
    record(res, [ti, oi, idx, d]() {
        if (oi->grad.empty())
            return;
        auto& gt = ensure_grad(ti);
        for (size_t b = 0; b < idx.size(); b++)
            for (int j = 0; j < d; j++)
                gt[static_cast<size_t>(idx[b]) * d + j] += oi->grad[b * d + j];
    });
    return res;
}

Tensor transpose_last2(const Tensor& a) {
    const auto& as = a.shape();
    if (as.size() != 2 && as.size() != 3)
        throw ShapeError("transpose_last2: rank must be 2 or 3, got " + shape_str(as));
    const int B = as.size() == 3 ? as[0] : 1;
    const int m = as[as.size() - 2], n = as[as.size() - 1];
    std::vector<double> out(a.values().size());
    for (int b = 0; b < B; b++) {
        const double* src = a.values().data() + static_cast<size_t>(b) * m * n;
        double* dst = out.data() + static_cast<size_t>(b) * m * n;
        for (int i = 0; i < m; i++)
            for (int j = 0; j < n; j++)
                dst[static_cast<size_t>(j) * m + i] = src[static_cast<size_t>(i) * n + j];
    }
    Shape oshape = as.size() == 3 ? Shape{B, n, m} : Shape{n, m};
    Tensor res = make(std::move(oshape), std::move(out));
    if (!tracked(a))
        return res;
    Impl ai = a.ptr(), oi = res.ptr();
    record(res, [ai, oi, B, m, n]() {
        if (oi->grad.empty())
            return;
        auto& ga = ensure_grad(ai);
        for (int b = 0; b < B; b++) {
            const double* g = oi->grad.data() + static_cast<size_t>(b) * m * n;
            double* dst = ga.data() + static_cast<size_t>(b) * m * n;
            for (int i = 0; i < m; i++)
                for (int j = 0; j < n; j++)
                    dst[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
        }
    });
    return res;
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
    Tensor res = make(std::move(shape), a.values());
    if (!tracked(a))
        return res;
    Impl ai = a.ptr(), oi = res.ptr();
    record(res, [ai, oi]() {
        if (oi->grad.empty())
            return;
        auto& ga = ensure_grad(ai);
        for (size_t i = 0; i < ga.size(); i++)
            ga[i] += oi->grad[i];
    });
    return res;
}

namespace {

// (B,T,d) <-> (B*h,T,d/h) index permutation shared by split/merge.
Tensor permute_heads(const Tensor& x, int n_heads, bool split) {
    const auto& xs = x.shape();
    if (xs.size() != 3)
        throw ShapeError("heads permutation: rank must be 3, got " + shape_str(xs));
    int B, T, d;
    if (split) {
        B = xs[0];
        T = xs[1];
        d = xs[2];
        if (d % n_heads != 0)
            throw ShapeError("split_heads: d_model " + std::to_string(d) +
                             " not divisible by heads " + std::to_string(n_heads));
    } else {
        if (xs[0] % n_heads != 0)
            throw ShapeError("merge_heads: batch*heads " + std::to_string(xs[0]) +
                             " not divisible by heads " + std::to_string(n_heads));
        B = xs[0] / n_heads;
        T = xs[1];
        d = xs[2] * n_heads;
    }
    const int hd = d / n_heads;
    std::vector<double> out(x.values().size());
    const auto& xv = x.values();
    for (int b = 0; b < B; b++)
        for (int a = 0; a < n_heads; a++)
            for (int t = 0; t < T; t++)
                for (int j = 0; j < hd; j++) {
                    size_t merged = (static_cast<size_t>(b) * T + t) * d + a * hd + j;
                    size_t heads = (static_cast<size_t>(b * n_heads + a) * T + t) * hd + j;
                    if (split)
                        out[heads] = xv[merged];
                    else
                        out[merged] = xv[heads];
                }
    Shape oshape = split ? Shape{B * n_heads, T, hd} : Shape{B, T, d};
    Tensor res = make(std::move(oshape), std::move(out));
    if (!tracked(x))
        return res;
    Impl xi = x.ptr(), oi = res.ptr();
    record(res, [xi, oi, B, T, d, n_heads, hd, split]() {
        if (oi->grad.empty())
            return;
        auto& gx = ensure_grad(xi);
        for (int b = 0; b < B; b++)
            for (int a = 0; a < n_heads; a++)
                for (int t = 0; t < T; t++)
                    for (int j = 0; j < hd; j++) {
                        size_t merged = (static_cast<size_t>(b) * T + t) * d + a * hd + j;
                        size_t heads = (static_cast<size_t>(b * n_heads + a) * T + t) * hd + j;
                        if (split)
                            gx[merged] += oi->grad[heads];
                        else
                            gx[heads] += oi->grad[merged];
                    }
    });
    return res;
}

}  // namespace

Tensor split_heads(const Tensor& x, int n_heads) { return permute_heads(x, n_heads, true); }
Tensor merge_heads(const Tensor& x, int n_heads) { return permute_heads(x, n_heads, false); }

namespace {

Tensor permute_patches(const Tensor& x, int channels, int h, int w, int p, bool to_tokens) {
    const int gh = h / p, gw = w / p;
    const int T = gh * gw, pd = channels * p * p;
    const auto& xs = x.shape();
    int B;
    if (to_tokens) {
        if (xs.size() != 4 || xs[1] != channels || xs[2] != h || xs[3] != w)
            throw ShapeError("patchify: expected (B," + std::to_string(channels) + "," +
                             std::to_string(h) + "," + std::to_string(w) + "), got " +
                             shape_str(xs));
        if (h % p != 0 || w % p != 0)
            throw ShapeError("patchify: image size not divisible by patch size");
        B = xs[0];
    } else {
        if (xs.size() != 3 || xs[1] != T || xs[2] != pd)
            throw ShapeError("unpatchify: expected (B," + std::to_string(T) + "," +
                             std::to_string(pd) + "), got " + shape_str(xs));
        B = xs[0];
    }
    std::vector<double> out(x.values().size());
    const auto& xv = x.values();
    // captured by value: the same index walk is reused inside the backward closure
    auto loop = [B, channels, gh, gw, h, w, p, T, pd](auto&& fn) {
        for (int b = 0; b < B; b++)
            for (int c = 0; c < channels; c++)
                for (int gy = 0; gy < gh; gy++)
                    for (int gx = 0; gx < gw; gx++)
                        for (int py = 0; py < p; py++)
                            for (int px = 0; px < p; px++) {
                                size_t img = ((static_cast<size_t>(b) * channels + c) * h +
                                              (gy * p + py)) * w + gx * p + px;
                                size_t tok = (static_cast<size_t>(b) * T + (gy * gw + gx)) * pd +
                                             (c * p + py) * p + px;
                                fn(img, tok);
                            }
    };
    loop([&](size_t img, size_t tok) {
        if (to_tokens)
            out[tok] = xv[img];
        else
            out[img] = xv[tok];
    });
    Shape oshape = to_tokens ? Shape{B, T, pd} : Shape{B, channels, h, w};
    Tensor res = make(std::move(oshape), std::move(out));
    if (!tracked(x))
        return res;
    Impl xi = x.ptr(), oi = res.ptr();
    record(res, [xi, oi, loop, to_tokens]() mutable {
        if (oi->grad.empty())
            return;
        auto& gx = ensure_grad(xi);
        loop([&](size_t img, size_t tok) {
            if (to_tokens)
                gx[img] += oi->grad[tok];
            else
                gx[tok] += oi->grad[img];
        });
    });
    return res;
}

}  // namespace

Tensor patchify(const Tensor& x, int p) {
    const auto& xs = x.shape();
    if (xs.size() != 4)
        throw ShapeError("patchify: rank must be 4, got " + shape_str(xs));
    return permute_patches(x, xs[1], xs[2], xs[3], p, true);
}

Tensor unpatchify(const Tensor& tokens, int channels, int h, int w, int p) {
    return permute_patches(tokens, channels, h, w, p, false);
}

Tensor detach(const Tensor& a) { return a.detach(); }

void backward(const Tensor& loss) { Tape::active().backward(loss); }

}  // namespace ditcache::ad
