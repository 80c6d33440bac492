#include "profl/freeze.hpp"

#include <cmath>
#include <string>

#include "profl/errors.hpp"

namespace profl {

EmTracker::EmTracker(std::size_t window) : window_(window) {
    if (window == 0) throw ValueError("EmTracker: window must be positive");
}

void EmTracker::observe(const std::vector<double>& params) {
    if (!snaps_.empty() && snaps_.back().size() != params.size()) {
        throw StateError("EmTracker: parameter count changed mid-step (" +
                         std::to_string(snaps_.back().size()) + " -> " +
                         std::to_string(params.size()) + ")");
    }
    snaps_.push_back(params);
    if (snaps_.size() > window_ + 1) snaps_.pop_front();
    ++rounds_;
    if (snaps_.size() == window_ + 1) {
        // Net displacement over total movement across the H in-window deltas.
        double num = 0.0;
        double den = 0.0;
        const std::size_t dims = params.size();
        const std::size_t h = window_;
        for (std::size_t s = 0; s < dims; ++s) {
            double sum_eps = 0.0;
            double sum_abs = 0.0;
            for (std::size_t k = 0; k < h; ++k) {
                const double eps = snaps_[k + 1][s] - snaps_[k][s];
                sum_eps += eps;
                sum_abs += std::abs(eps);
            }
            num += std::abs(sum_eps);
            den += sum_abs;
        }
        const double em = den == 0.0 ? 0.0 : num / den;
        series_.emplace_back(static_cast<double>(rounds_), em);
    }
}

std::optional<double> EmTracker::latest() const {
    if (series_.empty()) return std::nullopt;
    return series_.back().second;
}

double effective_movement(const std::vector<std::vector<double>>& deltas) {
    if (deltas.empty()) throw ValueError("effective_movement: no deltas");
    const std::size_t dims = deltas.front().size();
    for (const auto& d : deltas) {
        if (d.size() != dims) throw ShapeError("effective_movement: ragged delta rows");
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t s = 0; s < dims; ++s) {
        double sum_eps = 0.0;
        double sum_abs = 0.0;
        for (const auto& d : deltas) {
            sum_eps += d[s];
            sum_abs += std::abs(d[s]);
        }
        num += std::abs(sum_eps);
        den += sum_abs;
    }
    return den == 0.0 ? 0.0 : num / den;
}

double fit_slope(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 2) {
        throw ValueError("fit_slope: need at least two points, got " +
                         std::to_string(points.size()));
    }
    double mean_x = 0.0;
    double mean_y = 0.0;
    for (const auto& [x, y] : points) {
        mean_x += x;
        mean_y += y;
    }
    mean_x /= static_cast<double>(points.size());
    mean_y /= static_cast<double>(points.size());
    double sxy = 0.0;
    double sxx = 0.0;
    for (const auto& [x, y] : points) {
        sxy += (x - mean_x) * (y - mean_y);
        sxx += (x - mean_x) * (x - mean_x);
    }
    if (sxx == 0.0) {
        throw ValueError("fit_slope: all points share one x value, slope undefined");
    }
    return sxy / sxx;
}

FreezeDecision FreezeDecider::feed(double slope) {
    if (!initial_slope_.has_value()) initial_slope_ = slope;
    const double limit = policy_.threshold * std::abs(*initial_slope_);
    // A flat start yields limit 0; |slope| == 0 still counts as quiet then.
    const bool quiet = std::abs(slope) < limit || (limit == 0.0 && slope == 0.0);
    hits_ = quiet ? hits_ + 1 : 0;
    return hits_ >= policy_.patience ? FreezeDecision::Freeze : FreezeDecision::Continue;
}

StepFreezeController::StepFreezeController(const FreezePolicy& policy, std::size_t param_count)
    : policy_(policy), param_count_(param_count), tracker_(policy.window), decider_(policy) {
    if (policy.threshold <= 0.0 || policy.threshold >= 1.0) {
        throw ValueError("FreezePolicy: threshold must sit in (0, 1)");
    }
    if (policy.patience == 0) throw ValueError("FreezePolicy: patience must be positive");
}

FreezeDecision StepFreezeController::observe_and_decide(const std::vector<double>& params) {
    if (params.size() != param_count_) {
        throw StateError("freeze controller: expected " + std::to_string(param_count_) +
                         " parameters, got " + std::to_string(params.size()));
    }
    tracker_.observe(params);
    const auto& series = tracker_.series();
    if (series.size() < 2 || tracker_.rounds_observed() < policy_.min_rounds) {
        return FreezeDecision::Continue;
    }
    double slope;
    if (policy_.slope_fit == SlopeFit::TrailingWindow && series.size() > policy_.trailing_window) {
        std::vector<std::pair<double, double>> tail(series.end() - policy_.trailing_window,
                                                    series.end());
        slope = fit_slope(tail);
    } else {
        slope = fit_slope(series);
    }
    return decider_.feed(slope);
}

std::optional<std::size_t> replay_freeze(const std::vector<std::pair<double, double>>& series,
                                         const FreezePolicy& policy,
                                         std::size_t rounds_before_first_em) {
    FreezeDecider decider(policy);
    for (std::size_t n = 1; n <= series.size(); ++n) {
        const std::size_t round = rounds_before_first_em + n;
        if (n < 2 || round < policy.min_rounds) continue;
        std::vector<std::pair<double, double>> prefix(series.begin(), series.begin() + n);
        double slope;
        if (policy.slope_fit == SlopeFit::TrailingWindow && prefix.size() > policy.trailing_window) {
            std::vector<std::pair<double, double>> tail(prefix.end() - policy.trailing_window,
                                                        prefix.end());
            slope = fit_slope(tail);
        } else {
            slope = fit_slope(prefix);
        }
        if (decider.feed(slope) == FreezeDecision::Freeze) return n;
    }
    return std::nullopt;
}

}  // namespace profl
