#pragma once

#include <cmath>

#include "gnnpp/common.hpp"

namespace gnnpp {

inline constexpr double kSqrt2 = 1.4142135623730950488016887242097;
inline constexpr double kSqrt2Pi = 2.5066282746310005024157652848110;
inline constexpr double kInvSqrtPi = 0.56418958354775628694807945156077;

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / kSqrt2Pi; }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

// Acklam's rational approximation with one Halley correction step.
// Accurate to ~1e-15 over (0, 1).
inline double normal_inv_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw NumericError("normal_inv_cdf: p must lie in (0, 1)");

    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double e = normal_cdf(x) - p;
    const double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

// Closed-form CRPS of a Gaussian N(mu, sigma^2) against scalar observation y,
// with optional analytic derivatives w.r.t. mu and sigma.
inline double crps_gaussian(double mu, double sigma, double y, double* dmu = nullptr,
                            double* dsigma = nullptr) {
    if (!(sigma > 0.0)) throw NumericError("crps_gaussian: sigma must be positive");
    const double z = (y - mu) / sigma;
    const double cdf = normal_cdf(z);
    const double pdf = normal_pdf(z);
    const double crps = sigma * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - kInvSqrtPi);
    if (dmu) *dmu = -(2.0 * cdf - 1.0);
    if (dsigma) *dsigma = 2.0 * pdf - kInvSqrtPi;
    return crps;
}

}  // namespace gnnpp
