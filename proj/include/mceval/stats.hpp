#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "mceval/common.hpp"

namespace mceval::stats {

inline double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Unbiased sample variance (n-1 denominator), two-pass.
inline double sample_variance(std::span<const double> v) {
    if (v.size() < 2) throw Error("sample_variance: need at least 2 values");
    double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

namespace detail {

// Continued fraction for the incomplete beta function, modified Lentz.
inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

} // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double ibeta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw Error("ibeta: a and b must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                   b * std::log(1.0 - x);
    double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * detail::betacf(a, b, x) / a;
    return 1.0 - bt * detail::betacf(b, a, 1.0 - x) / b;
}

// Two-sided p-value of a t statistic with df degrees of freedom:
// p = I_{df/(df+t^2)}(df/2, 1/2).
inline double t_two_sided_p(double t, double df) {
    if (!(df > 0.0)) throw Error("t_two_sided_p: df must be positive");
    if (std::isinf(t)) return 0.0;
    return ibeta(df / 2.0, 0.5, df / (df + t * t));
}

struct PearsonResult {
    double r = 0.0;
    double p = 1.0;
    size_t n = 0;
};

// Sample Pearson correlation with a two-sided p-value from the exact t
// distribution with n-2 degrees of freedom. The denominator is computed as
// one square root of the product so that exactly anticorrelated inputs give
// r = -1.0 exactly.
inline PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error("pearson: length mismatch");
    const size_t n = x.size();
    if (n < 3) throw Error("pearson: need at least 3 points");
    double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw Error("pearson: zero variance");
    PearsonResult out;
    out.n = n;
    out.r = sxy / std::sqrt(sxx * syy);
    if (out.r > 1.0) out.r = 1.0;
    if (out.r < -1.0) out.r = -1.0;
    double df = static_cast<double>(n - 2);
    if (std::fabs(out.r) >= 1.0) {
        out.p = 0.0;
    } else {
        double t = out.r * std::sqrt(df / (1.0 - out.r * out.r));
        out.p = t_two_sided_p(t, df);
    }
    return out;
}

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};

// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of
// freedom, two-sided.
inline WelchResult welch_t_test_full(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw Error("welch_t_test: each group needs >= 2 values");
    double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double va = sample_variance(a), vb = sample_variance(b);
    if (va == 0.0 && vb == 0.0) throw Error("welch_t_test: zero variance in both groups");
    double sea = va / na, seb = vb / nb;
    WelchResult out;
    out.t = (mean(a) - mean(b)) / std::sqrt(sea + seb);
    out.df = (sea + seb) * (sea + seb) /
             (sea * sea / (na - 1.0) + seb * seb / (nb - 1.0));
    out.p = t_two_sided_p(out.t, out.df);
    return out;
}

inline double welch_t_test(std::span<const double> a, std::span<const double> b) {
    return welch_t_test_full(a, b).p;
}

} // namespace mceval::stats
