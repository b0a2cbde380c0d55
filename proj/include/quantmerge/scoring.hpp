#ifndef QUANTMERGE_SCORING_HPP
#define QUANTMERGE_SCORING_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "quantmerge/errors.hpp"

// Quantile-loss scoring and the verification measures built on it: the
// pinball loss, mean quantile score, skill scores and frequency
// (calibration) scores. All functions are pure and thread-safe.

namespace quantmerge {

/// Quantile level tau, restricted to the open interval (0, 1).
class QuantileLevel {
public:
    explicit QuantileLevel(double tau) : tau_(tau) {
        if (!(tau > 0.0 && tau < 1.0))
            throw InvariantError("QuantileLevel: tau must lie in (0, 1), got " +
                                 std::to_string(tau));
    }
    double value() const { return tau_; }

    friend bool operator==(QuantileLevel a, QuantileLevel b) { return a.tau_ == b.tau_; }
    friend bool operator<(QuantileLevel a, QuantileLevel b) { return a.tau_ < b.tau_; }

private:
    double tau_;
};

/// rho_tau(u) = u * (I(u >= 0) - tau). Nonnegative, zero iff u == 0.
/// The indicator uses >= at u == 0.
inline double pinball_loss(double u, QuantileLevel tau) {
    if (!std::isfinite(u)) throw InvariantError("pinball_loss: residual must be finite");
    return u * ((u >= 0.0 ? 1.0 : 0.0) - tau.value());
}

/// S_tau(x, y) = rho_tau(x - y): negatively oriented score of predictive
/// quantile x against observation y.
inline double quantile_score(double predicted, double observed, QuantileLevel tau) {
    if (!std::isfinite(predicted) || !std::isfinite(observed))
        throw InvariantError("quantile_score: inputs must be finite");
    return pinball_loss(predicted - observed, tau);
}

inline double mean_quantile_score(std::span<const double> predictions,
                                  std::span<const double> observations,
                                  QuantileLevel tau) {
    if (predictions.size() != observations.size())
        throw InvariantError("mean_quantile_score: length mismatch (" +
                             std::to_string(predictions.size()) + " vs " +
                             std::to_string(observations.size()) + ")");
    if (predictions.empty()) throw InvariantError("mean_quantile_score: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        sum += quantile_score(predictions[i], observations[i], tau);
    return sum / static_cast<double>(predictions.size());
}

/// 1 - candidate/reference. Positive iff the candidate improves on the
/// reference; at most 1. A zero reference makes the score undefined.
inline double quantile_skill_score(double mean_score_candidate, double mean_score_reference) {
    if (!(mean_score_candidate >= 0.0) || !std::isfinite(mean_score_candidate))
        throw InvariantError("quantile_skill_score: candidate mean score must be >= 0");
    if (!std::isfinite(mean_score_reference) || mean_score_reference < 0.0)
        throw InvariantError("quantile_skill_score: reference mean score must be >= 0");
    if (mean_score_reference == 0.0)
        throw UndefinedSkillError("quantile_skill_score: reference mean score is 0");
    return 1.0 - mean_score_candidate / mean_score_reference;
}

/// |empirical coverage - tau| where coverage counts observations <=
/// prediction (ties covered).
inline double frequency_score(std::span<const double> predictions,
                              std::span<const double> observations,
                              QuantileLevel tau) {
    if (predictions.size() != observations.size())
        throw InvariantError("frequency_score: length mismatch");
    if (predictions.empty()) throw InvariantError("frequency_score: empty input");
    std::size_t covered = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (!std::isfinite(predictions[i]) || !std::isfinite(observations[i]))
            throw InvariantError("frequency_score: inputs must be finite");
        if (observations[i] <= predictions[i]) ++covered;
    }
    const double coverage = static_cast<double>(covered) / static_cast<double>(predictions.size());
    return std::fabs(coverage - tau.value());
}

inline double frequency_skill_score(double fr_candidate, double fr_reference) {
    if (!(fr_candidate >= 0.0) || !std::isfinite(fr_candidate))
        throw InvariantError("frequency_skill_score: candidate score must be >= 0");
    if (!std::isfinite(fr_reference) || fr_reference < 0.0)
        throw InvariantError("frequency_skill_score: reference score must be >= 0");
    if (fr_reference == 0.0)
        throw UndefinedSkillError("frequency_skill_score: reference score is 0");
    return 1.0 - fr_candidate / fr_reference;
}

/// The nine evaluation levels used throughout.
inline const std::vector<QuantileLevel>& default_tau_levels() {
    static const std::vector<QuantileLevel> levels = {
        QuantileLevel(0.5),  QuantileLevel(0.6),  QuantileLevel(0.7),
        QuantileLevel(0.8),  QuantileLevel(0.9),  QuantileLevel(0.95),
        QuantileLevel(0.97), QuantileLevel(0.99), QuantileLevel(0.999)};
    return levels;
}

/// Mean quantile score and frequency score of one prediction set at one level.
struct ScoreSummary {
    QuantileLevel tau;
    double mean_quantile_score;
    double frequency_score;
    std::size_t n;
};

inline ScoreSummary summarize_scores(std::span<const double> predictions,
                                     std::span<const double> observations,
                                     QuantileLevel tau) {
    ScoreSummary s{tau, mean_quantile_score(predictions, observations, tau),
                   frequency_score(predictions, observations, tau), predictions.size()};
    const double hi = std::max(tau.value(), 1.0 - tau.value());
    if (s.mean_quantile_score < 0.0 || s.frequency_score > hi + 1e-15)
        throw InvariantError("summarize_scores: invariant violated");
    return s;
}

}  // namespace quantmerge

#endif  // QUANTMERGE_SCORING_HPP
