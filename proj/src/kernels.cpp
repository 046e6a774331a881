#include "gnnpp/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "gnnpp/normal.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gnnpp::kernels {

namespace {
std::atomic<int> g_threads{1};

double unary_fwd1(Unary op, double x) {
    switch (op) {
        case Unary::Softplus:
            return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
        case Unary::LeakyRelu02:
            return x > 0.0 ? x : 0.2 * x;
        case Unary::Elu:
            return x > 0.0 ? x : std::expm1(x);
        case Unary::Exp:
            return std::exp(x);
    }
    return 0.0;
}

// y is the forward output; lets Elu/Exp reuse it.
double unary_deriv1(Unary op, double x, double y) {
    switch (op) {
        case Unary::Softplus: {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        }
        case Unary::LeakyRelu02:
            return x > 0.0 ? 1.0 : 0.2;
        case Unary::Elu:
            return x > 0.0 ? 1.0 : y + 1.0;
        case Unary::Exp:
            return y;
    }
    return 0.0;
}
}  // namespace

int thread_count() { return g_threads.load(std::memory_order_relaxed); }

void set_thread_count(int n) {
    if (n < 1) throw ConfigError("thread count must be >= 1, got " + std::to_string(n));
    g_threads.store(n, std::memory_order_relaxed);
#ifdef _OPENMP
    omp_set_num_threads(n);
#endif
}

bool openmp_compiled() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

bool parallel_active() {
#ifdef _OPENMP
    return thread_count() > 1 && !omp_in_parallel();
#else
    return false;
#endif
}

double sorted_sum(std::vector<double>& scratch) {
    if (scratch.empty()) return 0.0;
    std::sort(scratch.begin(), scratch.end());
    // bottom-up pairwise reduction: duplicating the whole list doubles every
    // partial sum exactly, so mean pooling is invariant under set duplication
    std::size_t n = scratch.size();
    while (n > 1) {
        std::size_t m = 0;
        for (std::size_t i = 0; i + 1 < n; i += 2) scratch[m++] = scratch[i] + scratch[i + 1];
        if (n % 2) scratch[m++] = scratch[n - 1];
        n = m;
    }
    return scratch[0];
}

// ---------------------------------------------------------------------------
// Serial reference implementations.
// ---------------------------------------------------------------------------

namespace ref {

void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    const int m = a.n_rows, k = a.n_cols, n = b.n_cols;
    for (int i = 0; i < m; ++i) {
        double* ci = c.row(i);
        if (!accumulate)
            for (int j = 0; j < n; ++j) ci[j] = 0.0;
        const double* ai = a.row(i);
        for (int t = 0; t < k; ++t) {
            const double ait = ai[t];
            const double* bt = b.row(t);
            for (int j = 0; j < n; ++j) ci[j] += ait * bt[j];
        }
    }
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    const int k = a.n_rows, m = a.n_cols, n = b.n_cols;
    for (int i = 0; i < m; ++i) {
        double* ci = c.row(i);
        if (!accumulate)
            for (int j = 0; j < n; ++j) ci[j] = 0.0;
        for (int t = 0; t < k; ++t) {
            const double ati = a.at(t, i);
            const double* bt = b.row(t);
            for (int j = 0; j < n; ++j) ci[j] += ati * bt[j];
        }
    }
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    const int m = a.n_rows, k = a.n_cols, n = b.n_rows;
    for (int i = 0; i < m; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (int j = 0; j < n; ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (int t = 0; t < k; ++t) s += ai[t] * bj[t];
            if (accumulate)
                ci[j] += s;
            else
                ci[j] = s;
        }
    }
}

void add_row_vector(const Tensor& x, const Tensor& bias, Tensor& y) {
    const int m = x.n_rows, n = x.n_cols;
    const double* bv = bias.v.data();
    for (int i = 0; i < m; ++i) {
        const double* xi = x.row(i);
        double* yi = y.row(i);
        for (int j = 0; j < n; ++j) yi[j] = xi[j] + bv[j];
    }
}

// Accumulates each column over rows in ascending row order; the omp variant
// keeps that per-column order and parallelises over columns.
void col_sum(const Tensor& x, Tensor& out, bool accumulate) {
    const int m = x.n_rows, n = x.n_cols;
    double* ov = out.v.data();
    if (!accumulate)
        for (int j = 0; j < n; ++j) ov[j] = 0.0;
    for (int i = 0; i < m; ++i) {
        const double* xi = x.row(i);
        for (int j = 0; j < n; ++j) ov[j] += xi[j];
    }
}

void unary_forward(Unary op, const Tensor& x, Tensor& y) {
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) y.v[i] = unary_fwd1(op, x.v[i]);
}

void unary_backward(Unary op, const Tensor& x, const Tensor& y, const Tensor& gy, Tensor& gx) {
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) gx.v[i] += gy.v[i] * unary_deriv1(op, x.v[i], y.v[i]);
}

void gather_rows(const Tensor& x, const std::vector<int>& idx, Tensor& y) {
    const int n = static_cast<int>(idx.size()), c = x.n_cols;
    for (int i = 0; i < n; ++i) {
        const double* src = x.row(idx[i]);
        double* dst = y.row(i);
        for (int j = 0; j < c; ++j) dst[j] = src[j];
    }
}

void segment_sum_rows(const Tensor& src, const ScatterPlan& plan, Tensor& out, bool accumulate) {
    const int n_seg = static_cast<int>(plan.offsets.size()) - 1;
    const int c = src.n_cols;
    const bool identity = plan.perm.empty();
    for (int s = 0; s < n_seg; ++s) {
        double* os = out.row(s);
        if (!accumulate)
            for (int j = 0; j < c; ++j) os[j] = 0.0;
        for (int t = plan.offsets[s]; t < plan.offsets[s + 1]; ++t) {
            const double* r = src.row(identity ? t : plan.perm[t]);
            for (int j = 0; j < c; ++j) os[j] += r[j];
        }
    }
}

void segment_mean_rows_sorted(const Tensor& src, const std::vector<int>& offsets, Tensor& out) {
    const int n_seg = static_cast<int>(offsets.size()) - 1;
    const int c = src.n_cols;
    for (int s = 0; s < n_seg; ++s) {
        const int lo = offsets[s], hi = offsets[s + 1];
        double* os = out.row(s);
        if (hi == lo) {
            for (int j = 0; j < c; ++j) os[j] = 0.0;
            continue;
        }
        std::vector<double> scratch(static_cast<std::size_t>(hi - lo));
        for (int j = 0; j < c; ++j) {
            for (int t = lo; t < hi; ++t) scratch[static_cast<std::size_t>(t - lo)] = src.at(t, j);
            os[j] = sorted_sum(scratch) / static_cast<double>(hi - lo);
        }
    }
}

void segment_mean_backward(const Tensor& gout, const std::vector<int>& offsets, Tensor& gx) {
    const int n_seg = static_cast<int>(offsets.size()) - 1;
    const int c = gout.n_cols;
    for (int s = 0; s < n_seg; ++s) {
        const int lo = offsets[s], hi = offsets[s + 1];
        if (hi == lo) continue;
        const double inv = 1.0 / static_cast<double>(hi - lo);
        const double* gs = gout.row(s);
        for (int t = lo; t < hi; ++t) {
            double* gt = gx.row(t);
            for (int j = 0; j < c; ++j) gt[j] += gs[j] * inv;
        }
    }
}

void segment_softmax(const Tensor& scores, const std::vector<int>& offsets, Tensor& alpha) {
    const int n_seg = static_cast<int>(offsets.size()) - 1;
    const int h = scores.n_cols;
    for (int s = 0; s < n_seg; ++s) {
        const int lo = offsets[s], hi = offsets[s + 1];
        if (hi == lo) continue;
        for (int j = 0; j < h; ++j) {
            double mx = scores.at(lo, j);
            for (int t = lo + 1; t < hi; ++t) mx = std::max(mx, scores.at(t, j));
            double z = 0.0;
            for (int t = lo; t < hi; ++t) {
                const double e = std::exp(scores.at(t, j) - mx);
                alpha.at(t, j) = e;
                z += e;
            }
            for (int t = lo; t < hi; ++t) alpha.at(t, j) /= z;
        }
    }
}

void segment_softmax_backward(const Tensor& alpha, const Tensor& galpha,
                              const std::vector<int>& offsets, Tensor& gs) {
    const int n_seg = static_cast<int>(offsets.size()) - 1;
    const int h = alpha.n_cols;
    for (int s = 0; s < n_seg; ++s) {
        const int lo = offsets[s], hi = offsets[s + 1];
        for (int j = 0; j < h; ++j) {
            double dot = 0.0;
            for (int t = lo; t < hi; ++t) dot += alpha.at(t, j) * galpha.at(t, j);
            for (int t = lo; t < hi; ++t)
                gs.at(t, j) += alpha.at(t, j) * (galpha.at(t, j) - dot);
        }
    }
}

void head_scale(const Tensor& alpha, const Tensor& v, Tensor& out) {
    const int e = v.n_rows, h = alpha.n_cols, d = v.n_cols / alpha.n_cols;
    for (int i = 0; i < e; ++i) {
        const double* ai = alpha.row(i);
        const double* vi = v.row(i);
        double* oi = out.row(i);
        for (int j = 0; j < h; ++j)
            for (int t = 0; t < d; ++t) oi[j * d + t] = ai[j] * vi[j * d + t];
    }
}

void head_scale_backward(const Tensor& alpha, const Tensor& v, const Tensor& gout, Tensor& galpha,
                         Tensor& gv) {
    const int e = v.n_rows, h = alpha.n_cols, d = v.n_cols / alpha.n_cols;
    for (int i = 0; i < e; ++i) {
        const double* ai = alpha.row(i);
        const double* vi = v.row(i);
        const double* gi = gout.row(i);
        double* gai = galpha.row(i);
        double* gvi = gv.row(i);
        for (int j = 0; j < h; ++j) {
            double acc = 0.0;
            for (int t = 0; t < d; ++t) {
                acc += vi[j * d + t] * gi[j * d + t];
                gvi[j * d + t] += ai[j] * gi[j * d + t];
            }
            gai[j] += acc;
        }
    }
}

void head_dot(const Tensor& a, const Tensor& x, Tensor& out) {
    const int e = x.n_rows, h = a.n_rows, d = a.n_cols;
    for (int i = 0; i < e; ++i) {
        const double* xi = x.row(i);
        double* oi = out.row(i);
        for (int j = 0; j < h; ++j) {
            const double* aj = a.row(j);
            double s = 0.0;
            for (int t = 0; t < d; ++t) s += aj[t] * xi[j * d + t];
            oi[j] = s;
        }
    }
}

// ga accumulates over rows in ascending row order per (head, lane); the omp
// variant parallelises over (head, lane) pairs and keeps that order.
void head_dot_backward(const Tensor& a, const Tensor& x, const Tensor& gout, Tensor& ga,
                       Tensor& gx) {
    const int e = x.n_rows, h = a.n_rows, d = a.n_cols;
    for (int j = 0; j < h; ++j)
        for (int t = 0; t < d; ++t) {
            double s = 0.0;
            for (int i = 0; i < e; ++i) s += x.at(i, j * d + t) * gout.at(i, j);
            ga.at(j, t) += s;
        }
    for (int i = 0; i < e; ++i) {
        const double* gi = gout.row(i);
        double* gxi = gx.row(i);
        for (int j = 0; j < h; ++j) {
            const double* aj = a.row(j);
            for (int t = 0; t < d; ++t) gxi[j * d + t] += aj[t] * gi[j];
        }
    }
}

void add(const Tensor& x, const Tensor& y, Tensor& out) {
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) out.v[i] = x.v[i] + y.v[i];
}

void axpy(double a, const Tensor& x, Tensor& y) {
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) y.v[i] += a * x.v[i];
}

void scale(const Tensor& x, double a, Tensor& out) {
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) out.v[i] = a * x.v[i];
}

void crps_gaussian_batch(const double* mu, const double* sigma, const double* y, int n,
                         double* crps, double* dmu, double* dsigma) {
    for (int i = 0; i < n; ++i)
        crps[i] = crps_gaussian(mu[i], sigma[i], y[i], dmu ? dmu + i : nullptr,
                                dsigma ? dsigma + i : nullptr);
}

}  // namespace ref

// ---------------------------------------------------------------------------
// OpenMP implementations. Loop bodies mirror ref exactly; only the work
// partitioning differs, and no output element is touched by two threads.
// ---------------------------------------------------------------------------

namespace omp {

void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    const int m = a.n_rows, k = a.n_cols, n = b.n_cols;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        double* ci = c.row(i);
        if (!accumulate)
            for (int j = 0; j < n; ++j) ci[j] = 0.0;
        const double* ai = a.row(i);
        for (int t = 0; t < k; ++t) {
            const double ait = ai[t];
            const double* bt = b.row(t);
            for (int j = 0; j < n; ++j) ci[j] += ait * bt[j];
        }
    }
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    const int k = a.n_rows, m = a.n_cols, n = b.n_cols;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        double* ci = c.row(i);
        if (!accumulate)
            for (int j = 0; j < n; ++j) ci[j] = 0.0;
        for (int t = 0; t < k; ++t) {
            const double ati = a.at(t, i);
            const double* bt = b.row(t);
            for (int j = 0; j < n; ++j) ci[j] += ati * bt[j];
        }
    }
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    const int m = a.n_rows, k = a.n_cols, n = b.n_rows;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (int j = 0; j < n; ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (int t = 0; t < k; ++t) s += ai[t] * bj[t];
            if (accumulate)
                ci[j] += s;
            else
                ci[j] = s;
        }
    }
}

void add_row_vector(const Tensor& x, const Tensor& bias, Tensor& y) {
    const int m = x.n_rows, n = x.n_cols;
    const double* bv = bias.v.data();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* xi = x.row(i);
        double* yi = y.row(i);
        for (int j = 0; j < n; ++j) yi[j] = xi[j] + bv[j];
    }
}

void col_sum(const Tensor& x, Tensor& out, bool accumulate) {
    const int m = x.n_rows, n = x.n_cols;
    double* ov = out.v.data();
#pragma omp parallel for schedule(static)
    for (int j = 0; j < n; ++j) {
        double s = accumulate ? ov[j] : 0.0;
        for (int i = 0; i < m; ++i) s += x.at(i, j);
        ov[j] = s;
    }
}

void unary_forward(Unary op, const Tensor& x, Tensor& y) {
    const std::size_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
        y.v[static_cast<std::size_t>(i)] = unary_fwd1(op, x.v[static_cast<std::size_t>(i)]);
}

void unary_backward(Unary op, const Tensor& x, const Tensor& y, const Tensor& gy, Tensor& gx) {
    const std::size_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        const std::size_t u = static_cast<std::size_t>(i);
        gx.v[u] += gy.v[u] * unary_deriv1(op, x.v[u], y.v[u]);
    }
}

void gather_rows(const Tensor& x, const std::vector<int>& idx, Tensor& y) {
    const int n = static_cast<int>(idx.size()), c = x.n_cols;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const double* src = x.row(idx[i]);
        double* dst = y.row(i);
        for (int j = 0; j < c; ++j) dst[j] = src[j];
    }
}

void segment_sum_rows(const Tensor& src, const ScatterPlan& plan, Tensor& out, bool accumulate) {
    const int n_seg = static_cast<int>(plan.offsets.size()) - 1;
    const int c = src.n_cols;
    const bool identity = plan.perm.empty();
#pragma omp parallel for schedule(static)
    for (int s = 0; s < n_seg; ++s) {
        double* os = out.row(s);
        if (!accumulate)
            for (int j = 0; j < c; ++j) os[j] = 0.0;
        for (int t = plan.offsets[s]; t < plan.offsets[s + 1]; ++t) {
            const double* r = src.row(identity ? t : plan.perm[t]);
            for (int j = 0; j < c; ++j) os[j] += r[j];
        }
    }
}

void segment_mean_rows_sorted(const Tensor& src, const std::vector<int>& offsets, Tensor& out) {
    const int n_seg = static_cast<int>(offsets.size()) - 1;
    const int c = src.n_cols;
#pragma omp parallel for schedule(static)
    for (int s = 0; s < n_seg; ++s) {
        const int lo = offsets[s], hi = offsets[s + 1];
        double* os = out.row(s);
        if (hi == lo) {
            for (int j = 0; j < c; ++j) os[j] = 0.0;
            continue;
        }
        std::vector<double> scratch(static_cast<std::size_t>(hi - lo));
        for (int j = 0; j < c; ++j) {
            for (int t = lo; t < hi; ++t) scratch[static_cast<std::size_t>(t - lo)] = src.at(t, j);
            os[j] = sorted_sum(scratch) / static_cast<double>(hi - lo);
        }
    }
}

void segment_mean_backward(const Tensor& gout, const std::vector<int>& offsets, Tensor& gx) {
    const int n_seg = static_cast<int>(offsets.size()) - 1;
    const int c = gout.n_cols;
#pragma omp parallel for schedule(static)
    for (int s = 0; s < n_seg; ++s) {
        const int lo = offsets[s], hi = offsets[s + 1];
        if (hi == lo) continue;
        const double inv = 1.0 / static_cast<double>(hi - lo);
        const double* gs = gout.row(s);
        for (int t = lo; t < hi; ++t) {
            double* gt = gx.row(t);
            for (int j = 0; j < c; ++j) gt[j] += gs[j] * inv;
        }
    }
}

void segment_softmax(const Tensor& scores, const std::vector<int>& offsets, Tensor& alpha) {
    const int n_seg = static_cast<int>(offsets.size()) - 1;
    const int h = scores.n_cols;
#pragma omp parallel for schedule(static)
    for (int s = 0; s < n_seg; ++s) {
        const int lo = offsets[s], hi = offsets[s + 1];
        if (hi == lo) continue;
        for (int j = 0; j < h; ++j) {
            double mx = scores.at(lo, j);
            for (int t = lo + 1; t < hi; ++t) mx = std::max(mx, scores.at(t, j));
            double z = 0.0;
            for (int t = lo; t < hi; ++t) {
                const double e = std::exp(scores.at(t, j) - mx);
                alpha.at(t, j) = e;
                z += e;
            }
            for (int t = lo; t < hi; ++t) alpha.at(t, j) /= z;
        }
    }
}

void segment_softmax_backward(const Tensor& alpha, const Tensor& galpha,
                              const std::vector<int>& offsets, Tensor& gs) {
    const int n_seg = static_cast<int>(offsets.size()) - 1;
    const int h = alpha.n_cols;
#pragma omp parallel for schedule(static)
    for (int s = 0; s < n_seg; ++s) {
        const int lo = offsets[s], hi = offsets[s + 1];
        for (int j = 0; j < h; ++j) {
            double dot = 0.0;
            for (int t = lo; t < hi; ++t) dot += alpha.at(t, j) * galpha.at(t, j);
            for (int t = lo; t < hi; ++t)
                gs.at(t, j) += alpha.at(t, j) * (galpha.at(t, j) - dot);
        }
    }
}

void head_scale(const Tensor& alpha, const Tensor& v, Tensor& out) {
    const int e = v.n_rows, h = alpha.n_cols, d = v.n_cols / alpha.n_cols;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < e; ++i) {
        const double* ai = alpha.row(i);
        const double* vi = v.row(i);
        double* oi = out.row(i);
        for (int j = 0; j < h; ++j)
            for (int t = 0; t < d; ++t) oi[j * d + t] = ai[j] * vi[j * d + t];
    }
}

void head_scale_backward(const Tensor& alpha, const Tensor& v, const Tensor& gout, Tensor& galpha,
                         Tensor& gv) {
    const int e = v.n_rows, h = alpha.n_cols, d = v.n_cols / alpha.n_cols;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < e; ++i) {
        const double* ai = alpha.row(i);
        const double* vi = v.row(i);
        const double* gi = gout.row(i);
        double* gai = galpha.row(i);
        double* gvi = gv.row(i);
        for (int j = 0; j < h; ++j) {
            double acc = 0.0;
            for (int t = 0; t < d; ++t) {
                acc += vi[j * d + t] * gi[j * d + t];
                gvi[j * d + t] += ai[j] * gi[j * d + t];
            }
            gai[j] += acc;
        }
    }
}

void head_dot(const Tensor& a, const Tensor& x, Tensor& out) {
    const int e = x.n_rows, h = a.n_rows, d = a.n_cols;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < e; ++i) {
        const double* xi = x.row(i);
        double* oi = out.row(i);
        for (int j = 0; j < h; ++j) {
            const double* aj = a.row(j);
            double s = 0.0;
            for (int t = 0; t < d; ++t) s += aj[t] * xi[j * d + t];
            oi[j] = s;
        }
    }
}

void head_dot_backward(const Tensor& a, const Tensor& x, const Tensor& gout, Tensor& ga,
                       Tensor& gx) {
    const int e = x.n_rows, h = a.n_rows, d = a.n_cols;
#pragma omp parallel for schedule(static) collapse(2)
    for (int j = 0; j < h; ++j)
        for (int t = 0; t < d; ++t) {
            double s = 0.0;
            for (int i = 0; i < e; ++i) s += x.at(i, j * d + t) * gout.at(i, j);
            ga.at(j, t) += s;
        }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < e; ++i) {
        const double* gi = gout.row(i);
        double* gxi = gx.row(i);
        for (int j = 0; j < h; ++j) {
            const double* aj = a.row(j);
            for (int t = 0; t < d; ++t) gxi[j * d + t] += aj[t] * gi[j];
        }
    }
}

void add(const Tensor& x, const Tensor& y, Tensor& out) {
    const std::size_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        const std::size_t u = static_cast<std::size_t>(i);
        out.v[u] = x.v[u] + y.v[u];
    }
}

void axpy(double a, const Tensor& x, Tensor& y) {
    const std::size_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        const std::size_t u = static_cast<std::size_t>(i);
        y.v[u] += a * x.v[u];
    }
}

void scale(const Tensor& x, double a, Tensor& out) {
    const std::size_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        const std::size_t u = static_cast<std::size_t>(i);
        out.v[u] = a * x.v[u];
    }
}

void crps_gaussian_batch(const double* mu, const double* sigma, const double* y, int n,
                         double* crps, double* dmu, double* dsigma) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
        crps[i] = crps_gaussian(mu[i], sigma[i], y[i], dmu ? dmu + i : nullptr,
                                dsigma ? dsigma + i : nullptr);
}

}  // namespace omp

// ---------------------------------------------------------------------------
// Dispatch wrappers with shape validation.
// ---------------------------------------------------------------------------

namespace {
void check_segments(const std::vector<int>& offsets, int n_rows, const char* what) {
    if (offsets.empty() || offsets.front() != 0 || offsets.back() != n_rows)
        throw ShapeError(std::string(what) + ": bad segment offsets");
    for (std::size_t i = 1; i < offsets.size(); ++i)
        if (offsets[i] < offsets[i - 1]) throw ShapeError(std::string(what) + ": offsets decrease");
}
}  // namespace

void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    if (a.n_cols != b.n_rows) throw ShapeError("matmul: inner dims disagree");
    require_shape(c, a.n_rows, b.n_cols, "matmul out");
    if (parallel_active())
        omp::matmul(a, b, c, accumulate);
    else
        ref::matmul(a, b, c, accumulate);
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    if (a.n_rows != b.n_rows) throw ShapeError("matmul_tn: inner dims disagree");
    require_shape(c, a.n_cols, b.n_cols, "matmul_tn out");
    if (parallel_active())
        omp::matmul_tn(a, b, c, accumulate);
    else
        ref::matmul_tn(a, b, c, accumulate);
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    if (a.n_cols != b.n_cols) throw ShapeError("matmul_nt: inner dims disagree");
    require_shape(c, a.n_rows, b.n_rows, "matmul_nt out");
    if (parallel_active())
        omp::matmul_nt(a, b, c, accumulate);
    else
        ref::matmul_nt(a, b, c, accumulate);
}

void add_row_vector(const Tensor& x, const Tensor& bias, Tensor& y) {
    if (static_cast<int>(bias.numel()) != x.n_cols)
        throw ShapeError("add_row_vector: bias length != column count");
    require_shape(y, x.n_rows, x.n_cols, "add_row_vector out");
    if (parallel_active())
        omp::add_row_vector(x, bias, y);
    else
        ref::add_row_vector(x, bias, y);
}

void col_sum(const Tensor& x, Tensor& out, bool accumulate) {
    if (static_cast<int>(out.numel()) != x.n_cols)
        throw ShapeError("col_sum: output length != column count");
    if (parallel_active())
        omp::col_sum(x, out, accumulate);
    else
        ref::col_sum(x, out, accumulate);
}

void unary_forward(Unary op, const Tensor& x, Tensor& y) {
    require_shape(y, x.n_rows, x.n_cols, "unary out");
    if (parallel_active())
        omp::unary_forward(op, x, y);
    else
        ref::unary_forward(op, x, y);
}

void unary_backward(Unary op, const Tensor& x, const Tensor& y, const Tensor& gy, Tensor& gx) {
    require_shape(gx, x.n_rows, x.n_cols, "unary grad");
    if (parallel_active())
        omp::unary_backward(op, x, y, gy, gx);
    else
        ref::unary_backward(op, x, y, gy, gx);
}

void gather_rows(const Tensor& x, const std::vector<int>& idx, Tensor& y) {
    require_shape(y, static_cast<int>(idx.size()), x.n_cols, "gather out");
    for (int i : idx)
        if (i < 0 || i >= x.n_rows) throw ShapeError("gather_rows: index out of range");
    if (parallel_active())
        omp::gather_rows(x, idx, y);
    else
        ref::gather_rows(x, idx, y);
}

void segment_sum_rows(const Tensor& src, const ScatterPlan& plan, Tensor& out, bool accumulate) {
    if (plan.offsets.empty() || out.n_rows != static_cast<int>(plan.offsets.size()) - 1 ||
        out.n_cols != src.n_cols)
        throw ShapeError("segment_sum_rows: shape mismatch");
    const int gathered = plan.offsets.back();
    if (plan.perm.empty()) {
        if (gathered != src.n_rows) throw ShapeError("segment_sum_rows: offsets span != rows");
    } else if (static_cast<int>(plan.perm.size()) != gathered) {
        throw ShapeError("segment_sum_rows: perm length != offsets span");
    }
    if (parallel_active())
        omp::segment_sum_rows(src, plan, out, accumulate);
    else
        ref::segment_sum_rows(src, plan, out, accumulate);
}

void segment_mean_rows_sorted(const Tensor& src, const std::vector<int>& offsets, Tensor& out) {
    check_segments(offsets, src.n_rows, "segment_mean");
    require_shape(out, static_cast<int>(offsets.size()) - 1, src.n_cols, "segment_mean out");
    if (parallel_active())
        omp::segment_mean_rows_sorted(src, offsets, out);
    else
        ref::segment_mean_rows_sorted(src, offsets, out);
}

void segment_mean_backward(const Tensor& gout, const std::vector<int>& offsets, Tensor& gx) {
    check_segments(offsets, gx.n_rows, "segment_mean_backward");
    if (gout.n_cols != gx.n_cols) throw ShapeError("segment_mean_backward: column mismatch");
    if (parallel_active())
        omp::segment_mean_backward(gout, offsets, gx);
    else
        ref::segment_mean_backward(gout, offsets, gx);
}

void segment_softmax(const Tensor& scores, const std::vector<int>& offsets, Tensor& alpha) {
    check_segments(offsets, scores.n_rows, "segment_softmax");
    require_shape(alpha, scores.n_rows, scores.n_cols, "segment_softmax out");
    if (parallel_active())
        omp::segment_softmax(scores, offsets, alpha);
    else
        ref::segment_softmax(scores, offsets, alpha);
}

void segment_softmax_backward(const Tensor& alpha, const Tensor& galpha,
                              const std::vector<int>& offsets, Tensor& gs) {
    check_segments(offsets, alpha.n_rows, "segment_softmax_backward");
    require_shape(gs, alpha.n_rows, alpha.n_cols, "segment_softmax grad");
    if (parallel_active())
        omp::segment_softmax_backward(alpha, galpha, offsets, gs);
    else
        ref::segment_softmax_backward(alpha, galpha, offsets, gs);
}

void head_scale(const Tensor& alpha, const Tensor& v, Tensor& out) {
    if (alpha.n_rows != v.n_rows || alpha.n_cols <= 0 || v.n_cols % alpha.n_cols != 0)
        throw ShapeError("head_scale: value width not a multiple of head count");
    require_shape(out, v.n_rows, v.n_cols, "head_scale out");
    if (parallel_active())
        omp::head_scale(alpha, v, out);
    else
        ref::head_scale(alpha, v, out);
}

void head_scale_backward(const Tensor& alpha, const Tensor& v, const Tensor& gout, Tensor& galpha,
                         Tensor& gv) {
    if (alpha.n_rows != v.n_rows || v.n_cols % alpha.n_cols != 0)
        throw ShapeError("head_scale_backward: shape mismatch");
    if (parallel_active())
        omp::head_scale_backward(alpha, v, gout, galpha, gv);
    else
        ref::head_scale_backward(alpha, v, gout, galpha, gv);
}

void head_dot(const Tensor& a, const Tensor& x, Tensor& out) {
    if (x.n_cols != a.n_rows * a.n_cols) throw ShapeError("head_dot: width != heads * head_dim");
    require_shape(out, x.n_rows, a.n_rows, "head_dot out");
    if (parallel_active())
        omp::head_dot(a, x, out);
    else
        ref::head_dot(a, x, out);
}

void head_dot_backward(const Tensor& a, const Tensor& x, const Tensor& gout, Tensor& ga,
                       Tensor& gx) {
    if (x.n_cols != a.n_rows * a.n_cols)
        throw ShapeError("head_dot_backward: width != heads * head_dim");
    if (parallel_active())
        omp::head_dot_backward(a, x, gout, ga, gx);
    else
        ref::head_dot_backward(a, x, gout, ga, gx);
}

void add(const Tensor& x, const Tensor& y, Tensor& out) {
    if (!x.same_shape(y)) throw ShapeError("add: shape mismatch");
    require_shape(out, x.n_rows, x.n_cols, "add out");
    if (parallel_active())
        omp::add(x, y, out);
    else
        ref::add(x, y, out);
}

void axpy(double a, const Tensor& x, Tensor& y) {
    if (!x.same_shape(y)) throw ShapeError("axpy: shape mismatch");
    if (parallel_active())
        omp::axpy(a, x, y);
    else
        ref::axpy(a, x, y);
}

void scale(const Tensor& x, double a, Tensor& out) {
    require_shape(out, x.n_rows, x.n_cols, "scale out");
    if (parallel_active())
        omp::scale(x, a, out);
    else
        ref::scale(x, a, out);
}

void crps_gaussian_batch(const double* mu, const double* sigma, const double* y, int n,
                         double* crps, double* dmu, double* dsigma) {
    if (parallel_active())
        omp::crps_gaussian_batch(mu, sigma, y, n, crps, dmu, dsigma);
    else
        ref::crps_gaussian_batch(mu, sigma, y, n, crps, dmu, dsigma);
}

}  // namespace gnnpp::kernels
