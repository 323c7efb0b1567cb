#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "agbd/error.hpp"
#include "agbd/numeric.hpp"

namespace agbd::agreement {

struct PairedUnit {
    std::string unit_id;
    double pred_mean = 0.0;
    double pred_var = 0.0;
    double ref_mean = 0.0;
    double ref_var = 0.0;
};

struct RegressionFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::array<double, 2> slope_ci95{0.0, 0.0};
    std::array<double, 2> intercept_ci95{0.0, 0.0};
    double r2 = 0.0;
    std::size_t n = 0;
    double residual_se = 0.0;
    double p_slope = 1.0;
    double p_intercept = 1.0;
};

struct UnitComparison {
    PairedUnit unit;
    double t = 0.0;
    bool significant = false;
};

// Difference of unit means in units of its standard error.
inline double unit_t_statistic(const PairedUnit& u) {
    if (u.pred_var < 0.0 || u.ref_var < 0.0) throw Error("agreement", "negative variance");
    const double denom = u.pred_var + u.ref_var;
    if (denom == 0.0) {
        if (u.pred_mean == u.ref_mean) return 0.0;
        throw Error("agreement", "degenerate denominator: both variances zero with unequal means");
    }
    if (u.pred_mean == u.ref_mean) return 0.0;
    return (u.pred_mean - u.ref_mean) / std::sqrt(denom);
}

inline bool t_significant(double t) { return std::abs(t) > 2.0; }

namespace detail {

// Continued-fraction evaluation of the regularized incomplete beta
// function (Lentz's method).
inline double inc_beta_cf(double a, double b, double x) {
    const double tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 400; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return h;
}

inline double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * inc_beta_cf(a, b, x) / a;
    return 1.0 - front * inc_beta_cf(b, a, 1.0 - x) / b;
}

}  // namespace detail

inline double t_cdf(double x, int df) {
    if (df < 1) throw Error("agreement", "degrees of freedom must be >= 1");
    if (x == 0.0) return 0.5;
    const double v = static_cast<double>(df);
    const double tail = 0.5 * detail::reg_inc_beta(0.5 * v, 0.5, v / (v + x * x));
    return x > 0.0 ? 1.0 - tail : tail;
}

inline double t_quantile(double p, int df) {
    if (df < 1) throw Error("agreement", "degrees of freedom must be >= 1");
    if (!(p > 0.0 && p < 1.0))
        throw Error("agreement", "quantile probability " + format_g9(p) + " outside (0, 1)");
    if (p == 0.5) return 0.0;
    // Symmetry keeps the search one-sided.
    if (p < 0.5) return -t_quantile(1.0 - p, df);
    double lo = 0.0, hi = 1.0;
    while (t_cdf(hi, df) < p) {
        hi *= 2.0;
        if (hi > 1e12) break;
    }
    double mid = 0.5 * (lo + hi);
    for (int iter = 0; iter < 500; ++iter) {
        mid = 0.5 * (lo + hi);
        const double f = t_cdf(mid, df);
        if (std::abs(f - p) < 1e-10 && iter > 20) break;
        if (f < p) lo = mid;
        else hi = mid;
        if (hi - lo < 1e-15 * std::max(1.0, std::abs(mid))) break;
    }
    return mid;
}

namespace detail {

inline void check_pairs(const std::vector<std::array<double, 2>>& pairs, std::size_t min_n) {
    if (pairs.size() < min_n)
        throw Error("agreement", "need at least " + std::to_string(min_n) + " pairs, got " +
                                     std::to_string(pairs.size()));
}

inline double mean_component(const std::vector<std::array<double, 2>>& pairs, int k) {
    NeumaierSum s;
    for (const auto& p : pairs) s.add(p[k]);
    return s.value() / static_cast<double>(pairs.size());
}

}  // namespace detail

// Ordinary least squares of pred (y) on ref (x). Pairs are (ref, pred).
inline RegressionFit ols_fit(const std::vector<std::array<double, 2>>& pairs) {
    detail::check_pairs(pairs, 3);
    const std::size_t n = pairs.size();
    const double mx = detail::mean_component(pairs, 0);
    const double my = detail::mean_component(pairs, 1);
    NeumaierSum sxx_acc, sxy_acc;
    for (const auto& p : pairs) {
        const double dx = p[0] - mx;
        sxx_acc.add(dx * dx);
        sxy_acc.add(dx * (p[1] - my));
    }
    const double sxx = sxx_acc.value();
    if (!(sxx > 0.0)) throw Error("agreement", "reference values have zero variance");

    RegressionFit fit;
    fit.n = n;
    fit.slope = sxy_acc.value() / sxx;
    fit.intercept = my - fit.slope * mx;

    NeumaierSum ssres_acc, sstot_acc;
    for (const auto& p : pairs) {
        const double resid = p[1] - (fit.intercept + fit.slope * p[0]);
        ssres_acc.add(resid * resid);
        const double dy = p[1] - my;
        sstot_acc.add(dy * dy);
    }
    const double ssres = std::max(0.0, ssres_acc.value());
    const double sstot = sstot_acc.value();
    fit.r2 = sstot > 0.0 ? std::clamp(1.0 - ssres / sstot, 0.0, 1.0) : 1.0;
    fit.residual_se = std::sqrt(ssres / static_cast<double>(n - 2));

    const double se_slope = fit.residual_se / std::sqrt(sxx);
    const double se_intercept =
        fit.residual_se * std::sqrt(1.0 / static_cast<double>(n) + mx * mx / sxx);
    const int df = static_cast<int>(n) - 2;
    const double t975 = t_quantile(0.975, df);
    fit.slope_ci95 = {fit.slope - t975 * se_slope, fit.slope + t975 * se_slope};
    fit.intercept_ci95 = {fit.intercept - t975 * se_intercept, fit.intercept + t975 * se_intercept};

    auto two_sided_p = [df](double estimate, double se) {
        if (se == 0.0) return estimate == 0.0 ? 1.0 : 0.0;
        return 2.0 * (1.0 - t_cdf(std::abs(estimate / se), df));
    };
    fit.p_slope = two_sided_p(fit.slope, se_slope);
    fit.p_intercept = two_sided_p(fit.intercept, se_intercept);
    return fit;
}

inline double pearson_r(const std::vector<std::array<double, 2>>& pairs) {
    detail::check_pairs(pairs, 2);
    const double mx = detail::mean_component(pairs, 0);
    const double my = detail::mean_component(pairs, 1);
    NeumaierSum sxx, syy, sxy;
    for (const auto& p : pairs) {
        const double dx = p[0] - mx, dy = p[1] - my;
        sxx.add(dx * dx);
        syy.add(dy * dy);
        sxy.add(dx * dy);
    }
    if (!(sxx.value() > 0.0) || !(syy.value() > 0.0))
        throw Error("agreement", "zero variance in correlation input");
    return std::clamp(sxy.value() / std::sqrt(sxx.value() * syy.value()), -1.0, 1.0);
}

// Root mean square of the direct differences pred - ref, not of regression
// residuals.
inline double rmse(const std::vector<std::array<double, 2>>& pairs) {
    detail::check_pairs(pairs, 1);
    NeumaierSum ss;
    for (const auto& p : pairs) {
        const double d = p[1] - p[0];
        ss.add(d * d);
    }
    return std::sqrt(std::max(0.0, ss.value() / static_cast<double>(pairs.size())));
}

// Refined index of agreement, normalized to [-1, 1]. Pairs are
// (observed/reference, predicted).
inline double index_of_agreement(const std::vector<std::array<double, 2>>& pairs, double c = 2.0) {
    detail::check_pairs(pairs, 2);
    if (!(c > 0.0)) throw Error("agreement", "scaling constant must be > 0");
    const double obar = detail::mean_component(pairs, 0);
    NeumaierSum num_acc, den_acc;
    for (const auto& p : pairs) {
        num_acc.add(std::abs(p[1] - p[0]));
        den_acc.add(std::abs(p[0] - obar));
    }
    const double num = num_acc.value();
    const double den = c * den_acc.value();
    if (den == 0.0) {
        if (num == 0.0) return 1.0;
        throw Error("agreement", "reference has no variability");
    }
    if (num <= den) return 1.0 - num / den;
    return den / num - 1.0;
}

// Linear-interpolation quantile of a sorted sample at probability p.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw Error("agreement", "quantile of empty sample");
    if (sorted.size() == 1) return sorted[0];
    const double h = p * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::clamp(
        std::floor(h), 0.0, static_cast<double>(sorted.size() - 2)));
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

struct QqPoint {
    double p = 0.0;
    double q_a = 0.0;
    double q_b = 0.0;
};

// Matched quantiles of two samples at k evenly spaced probabilities
// j/(k-1), j = 0..k-1.
inline std::vector<QqPoint> qq_pairs(const std::vector<double>& a, const std::vector<double>& b,
                                     std::size_t k) {
    if (a.size() < 2 || b.size() < 2)
        throw Error("agreement", "quantile comparison needs at least 2 values per sample");
    if (k < 2) throw Error("agreement", "need at least 2 quantile points");
    std::vector<double> sa = a, sb = b;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    std::vector<QqPoint> out;
    out.reserve(k);
    for (std::size_t j = 0; j < k; ++j) {
        const double p = static_cast<double>(j) / static_cast<double>(k - 1);
        out.push_back({p, quantile_sorted(sa, p), quantile_sorted(sb, p)});
    }
    return out;
}

struct HistBin {
    double lo = 0.0;
    std::size_t count = 0;
};

// Left-closed right-open bins [origin + i*w, origin + (i+1)*w). Bins between
// the extreme occupied bins are emitted even when empty.
inline std::vector<HistBin> histogram(const std::vector<double>& values, double bin_width = 50.0,
                                      double origin = 0.0) {
    if (!(bin_width > 0.0)) throw Error("agreement", "bin width must be > 0");
    if (values.empty()) return {};
    long i_min = 0, i_max = 0;
    bool first = true;
    std::vector<long> bin_of;
    bin_of.reserve(values.size());
    for (double v : values) {
        if (!std::isfinite(v)) throw Error("agreement", "non-finite value in histogram input");
        const long i = static_cast<long>(std::floor((v - origin) / bin_width));
        bin_of.push_back(i);
        if (first || i < i_min) i_min = i;
        if (first || i > i_max) i_max = i;
        first = false;
    }
    std::vector<HistBin> out(static_cast<std::size_t>(i_max - i_min + 1));
    for (std::size_t b = 0; b < out.size(); ++b)
        out[b].lo = origin + static_cast<double>(i_min + static_cast<long>(b)) * bin_width;
    for (long i : bin_of) ++out[static_cast<std::size_t>(i - i_min)].count;
    return out;
}

struct AgreementSummary {
    RegressionFit fit;
    double pearson = std::numeric_limits<double>::quiet_NaN();
    double rmse = std::numeric_limits<double>::quiet_NaN();
    double d_r = std::numeric_limits<double>::quiet_NaN();
    std::vector<UnitComparison> units;
};

// The whole paired-unit battery over (ref_mean, pred_mean) pairs.
inline AgreementSummary summarize(const std::vector<PairedUnit>& units, double c = 2.0) {
    AgreementSummary out;
    out.units.reserve(units.size());
    std::vector<std::array<double, 2>> pairs;
    pairs.reserve(units.size());
    for (const PairedUnit& u : units) {
        UnitComparison cmp;
        cmp.unit = u;
        cmp.t = unit_t_statistic(u);
        cmp.significant = t_significant(cmp.t);
        out.units.push_back(cmp);
        pairs.push_back({u.ref_mean, u.pred_mean});
    }
    out.fit = ols_fit(pairs);
    out.pearson = pearson_r(pairs);
    out.rmse = rmse(pairs);
    out.d_r = index_of_agreement(pairs, c);
    return out;
}

}  // namespace agbd::agreement
