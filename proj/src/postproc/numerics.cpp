#include "postproc/numerics.hpp"

#include <cmath>

#include "support/util.hpp"

namespace qkd::postproc {

double binary_entropy(double x) {
    if (x < 0.0 || x > 1.0) fail(errc::config_invalid, "binary_entropy domain is [0, 1]");
    if (x == 0.0 || x == 1.0) return 0.0;
    return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

namespace {

// Rational approximation of Phi^-1 (relative error ~1e-9 before refinement).
double quantile_estimate(double p) {
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
    if (p < p_low) {
        double ql = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * ql + c[1]) * ql + c[2]) * ql + c[3]) * ql + c[4]) * ql + c[5]) /
               ((((d[0] * ql + d[1]) * ql + d[2]) * ql + d[3]) * ql + 1.0);
    }
    if (p <= 1.0 - p_low) {
        double qc = p - 0.5;
        double r = qc * qc;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * qc /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    double ql = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * ql + c[1]) * ql + c[2]) * ql + c[3]) * ql + c[4]) * ql + c[5]) /
           ((((d[0] * ql + d[1]) * ql + d[2]) * ql + d[3]) * ql + 1.0);
}

// Halley-refined quantile for a LOWER-tail probability (p <= 0.5), where the
// CDF can be evaluated as 0.5*erfc(-x/sqrt(2)) with full relative accuracy.
double lower_quantile(double p) {
    double x = quantile_estimate(p);
    for (int i = 0; i < 3; ++i) {
        double cdf = 0.5 * std::erfc(-x / std::sqrt(2.0));
        double err = cdf - p;
        if (err == 0.0) break;
        double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        double u = err / pdf;
        x = x - u / (1.0 + 0.5 * x * u); // Halley step
    }
    return x;
}

} // namespace

double normal_quantile(double p) {
    if (!(p > 0.0) || !(p < 1.0))
        fail(errc::config_invalid, "normal_quantile domain is (0, 1)");
    if (p <= 0.5) return lower_quantile(p);
    return -lower_quantile(1.0 - p);
}

double normal_quantile_upper(double tail) {
    if (!(tail > 0.0) || !(tail < 1.0))
        fail(errc::config_invalid, "normal_quantile_upper domain is (0, 1)");
    // P(X > z) = tail  <=>  z = -Phi^-1(tail); evaluate in the lower tail so
    // small tail probabilities never suffer 1-tail cancellation.
    if (tail <= 0.5) return -lower_quantile(tail);
    return lower_quantile(1.0 - tail);
}

double quantile_from_eps(double eps_decoy) {
    if (!(eps_decoy > 0.0) || !(eps_decoy < 7.0))
        fail(errc::config_invalid, "eps_decoy must lie in (0, 7)");
    return normal_quantile_upper(eps_decoy / 7.0);
}

double eps_col(uint64_t len_bits) {
    if (len_bits < 50) fail(errc::config_invalid, "eps_col needs a message of at least 50 bits");
    uint64_t blocks = (len_bits + 48) / 49; // ceil(len/49)
    return double(blocks - 1) / double(polyhash_q);
}

} // namespace qkd::postproc
