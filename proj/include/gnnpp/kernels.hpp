#pragma once

#include <vector>

#include "gnnpp/tensor.hpp"

// Compute kernels used by the network and the metrics. Every kernel exists
// twice: kernels::ref is the plain serial implementation, kernels::omp the
// OpenMP one. The omp variants partition work by output element and keep
// the per-element accumulation order identical to ref, so both produce
// bitwise-equal results for any thread count. The un-namespaced wrappers
// dispatch between them; tests compare ref against omp directly.
namespace gnnpp::kernels {

enum class Unary { Softplus, LeakyRelu02, Elu, Exp };

// Scatter plan for gather backward: for target row r, the gathered output
// rows that read r are perm[offsets[r] .. offsets[r+1]). Empty perm means
// the identity permutation.
struct ScatterPlan {
    std::vector<int> offsets;
    std::vector<int> perm;
};

int thread_count();
void set_thread_count(int n);
bool openmp_compiled();
// True when the dispatch wrappers would take the parallel path right now.
bool parallel_active();

// Sorts ascending, then sums; order-independent accumulation for inputs
// that are permutations of each other. Clobbers the scratch buffer.
double sorted_sum(std::vector<double>& scratch);

#define GNNPP_KERNEL_DECLS                                                                        \
    /* c (+)= a * b, a[m,k] b[k,n] */                                                             \
    void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate);                    \
    /* c (+)= a^T * b, a[k,m] b[k,n] */                                                           \
    void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate);                 \
    /* c (+)= a * b^T, a[m,k] b[n,k] */                                                           \
    void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate);                 \
    /* y = x with bias[1,n] added to every row */                                                 \
    void add_row_vector(const Tensor& x, const Tensor& bias, Tensor& y);                          \
    /* out[1,n] (+)= column sums of x */                                                          \
    void col_sum(const Tensor& x, Tensor& out, bool accumulate);                                  \
    void unary_forward(Unary op, const Tensor& x, Tensor& y);                                     \
    /* gx += gy * f'(x); y is the stored forward output */                                        \
    void unary_backward(Unary op, const Tensor& x, const Tensor& y, const Tensor& gy, Tensor& gx); \
    /* y[i,:] = x[idx[i],:] */                                                                    \
    void gather_rows(const Tensor& x, const std::vector<int>& idx, Tensor& y);                    \
    /* out[s,:] (+)= sum of src rows in segment s (rows taken through plan.perm) */               \
    void segment_sum_rows(const Tensor& src, const ScatterPlan& plan, Tensor& out,                \
                          bool accumulate);                                                       \
    /* out[s,:] = mean of src rows in segment s, summed in value order */                         \
    void segment_mean_rows_sorted(const Tensor& src, const std::vector<int>& offsets,             \
                                  Tensor& out);                                                   \
    /* gx[i,:] += gout[s,:]/|s| for each row i of segment s */                                    \
    void segment_mean_backward(const Tensor& gout, const std::vector<int>& offsets, Tensor& gx);  \
    /* per segment and column: alpha = softmax(scores) with max subtraction */                    \
    void segment_softmax(const Tensor& scores, const std::vector<int>& offsets, Tensor& alpha);   \
    /* gs += alpha * (galpha - sum_seg(alpha * galpha)) */                                        \
    void segment_softmax_backward(const Tensor& alpha, const Tensor& galpha,                      \
                                  const std::vector<int>& offsets, Tensor& gs);                   \
    /* out[e, h*d+j] = alpha[e,h] * v[e, h*d+j] */                                                \
    void head_scale(const Tensor& alpha, const Tensor& v, Tensor& out);                           \
    void head_scale_backward(const Tensor& alpha, const Tensor& v, const Tensor& gout,            \
                             Tensor& galpha, Tensor& gv);                                         \
    /* out[e,h] = sum_j a[h,j] * x[e, h*d+j] */                                                   \
    void head_dot(const Tensor& a, const Tensor& x, Tensor& out);                                 \
    void head_dot_backward(const Tensor& a, const Tensor& x, const Tensor& gout, Tensor& ga,      \
                           Tensor& gx);                                                           \
    void add(const Tensor& x, const Tensor& y, Tensor& out);                                      \
    /* y += a * x */                                                                              \
    void axpy(double a, const Tensor& x, Tensor& y);                                              \
    void scale(const Tensor& x, double a, Tensor& out);                                           \
    /* closed-form Gaussian CRPS per element; dmu/dsigma may be null */                           \
    void crps_gaussian_batch(const double* mu, const double* sigma, const double* y, int n,       \
                             double* crps, double* dmu, double* dsigma);

namespace ref {
GNNPP_KERNEL_DECLS
}
namespace omp {
GNNPP_KERNEL_DECLS
}
GNNPP_KERNEL_DECLS

#undef GNNPP_KERNEL_DECLS

}  // namespace gnnpp::kernels
