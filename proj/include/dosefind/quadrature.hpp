#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dosefind {

class QuadratureError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct QuadratureOptions {
    double rel_tol = 1e-10;
    double abs_tol = 0.0;
    int initial_intervals = 8;
    int max_intervals = 2000;
};

template <class Scalar>
struct QuadratureResult {
    Eigen::Array<Scalar, Eigen::Dynamic, 1> value;
    Eigen::Array<Scalar, Eigen::Dynamic, 1> error;
    int intervals = 0;
    int evaluations = 0;
};

namespace detail {

// 15-point Kronrod rule with embedded 7-point Gauss rule (QUADPACK qk15).
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

}  // namespace detail

/// Adaptive Gauss-Kronrod quadrature of a vector-valued integrand on [a, b].
///
/// `f(x, out)` writes the `dim` integrand components at `x` into `out`. The
/// interval with the largest scaled error estimate is bisected until every
/// component satisfies err <= max(abs_tol, rel_tol * |value|).
template <class Scalar, class F>
QuadratureResult<Scalar> integrate_adaptive(F&& f, Scalar a, Scalar b, Eigen::Index dim,
                                            const QuadratureOptions& opts = {}) {
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    struct Segment {
        Scalar lo, hi;
        Array value, error;
    };

    Array fx(dim), sum(dim), gauss(dim), kronrod(dim);
    int evaluations = 0;
    auto rule = [&](Scalar lo, Scalar hi) {
        const Scalar center = (lo + hi) / 2;
        const Scalar half = (hi - lo) / 2;
        f(center, fx);
        kronrod = fx * Scalar(detail::kKronrodWeights[7]);
        gauss = fx * Scalar(detail::kGaussWeights[3]);
        for (int k = 0; k < 7; ++k) {
            const Scalar dx = half * Scalar(detail::kKronrodNodes[k]);
            f(center - dx, fx);
            sum = fx;
            f(center + dx, fx);
            sum += fx;
            kronrod += sum * Scalar(detail::kKronrodWeights[k]);
            if (k % 2 == 1) gauss += sum * Scalar(detail::kGaussWeights[k / 2]);
        }
        evaluations += 15;
        return Segment{lo, hi, kronrod * half, ((kronrod - gauss) * half).abs()};
    };

    std::vector<Segment> segments;
    Array total = Array::Zero(dim), total_err = Array::Zero(dim);
    const int n0 = std::max(1, opts.initial_intervals);
    for (int i = 0; i < n0; ++i) {
        const Scalar lo = a + (b - a) * Scalar(i) / Scalar(n0);
        const Scalar hi = a + (b - a) * Scalar(i + 1) / Scalar(n0);
        segments.push_back(rule(lo, hi));
        total += segments.back().value;
        total_err += segments.back().error;
    }

    while (true) {
        const Array tol = (total.abs() * Scalar(opts.rel_tol)).max(Scalar(opts.abs_tol));
        if ((total_err <= tol).all()) break;
        if (static_cast<int>(segments.size()) >= opts.max_intervals)
            throw QuadratureError("adaptive quadrature did not converge on [" +
                                  std::to_string(double(a)) + ", " + std::to_string(double(b)) +
                                  "] after " + std::to_string(segments.size()) +
                                  " intervals; worst error " +
                                  std::to_string(double(total_err.maxCoeff())));

        const Array scale = tol.max(std::numeric_limits<Scalar>::min());
        std::size_t worst = 0;
        Scalar worst_score = -1;
        for (std::size_t i = 0; i < segments.size(); ++i) {
            const Scalar score = (segments[i].error / scale).maxCoeff();
            if (score > worst_score) {
                worst_score = score;
                worst = i;
            }
        }
        const Segment old = segments[worst];
        const Scalar mid = (old.lo + old.hi) / 2;
        segments[worst] = rule(old.lo, mid);
        segments.push_back(rule(mid, old.hi));
        total += segments[worst].value + segments.back().value - old.value;
        total_err += segments[worst].error + segments.back().error - old.error;
    }

    // Recompute from the leaves to drop accumulated add/subtract rounding.
    QuadratureResult<Scalar> result;
    result.value = Array::Zero(dim);
    result.error = Array::Zero(dim);
    for (const auto& seg : segments) {
        result.value += seg.value;
        result.error += seg.error;
    }
    const int intervals = static_cast<int>(segments.size());
    result.intervals = intervals;
    result.evaluations = evaluations;
    return result;
}

/// Scalar convenience wrapper.
template <class Scalar, class F>
Scalar integrate_adaptive_scalar(F&& f, Scalar a, Scalar b, const QuadratureOptions& opts = {}) {
    auto wrapped = [&](Scalar x, Eigen::Array<Scalar, Eigen::Dynamic, 1>& out) { out[0] = f(x); };
    return integrate_adaptive<Scalar>(wrapped, a, b, 1, opts).value[0];
}

}  // namespace dosefind
