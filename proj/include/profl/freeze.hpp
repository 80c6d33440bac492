#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <utility>
#include <vector>

namespace profl {

// Effective movement of a parameter vector over a trailing window of H
// per-round deltas: |net displacement| summed over scalars, divided by the
// total absolute movement. 1 means every step pushed the same way, 0 means
// the steps cancelled out (or nothing moved at all).
class EmTracker {
  public:
    explicit EmTracker(std::size_t window);

    // Feeds the post-aggregation parameters of the watched block. Once H+1
    // snapshots have been seen, each call also appends an EM value.
    void observe(const std::vector<double>& params);

    std::size_t window() const { return window_; }
    std::size_t rounds_observed() const { return rounds_; }
    const std::vector<std::pair<double, double>>& series() const { return series_; }
    std::optional<double> latest() const;

  private:
    std::size_t window_;
    std::size_t rounds_ = 0;
    std::deque<std::vector<double>> snaps_;
    std::vector<std::pair<double, double>> series_;  // (round index, EM)
};

// Computes one EM value from the raw window: deltas[h][s] is the per-scalar
// change at lag h. Exposed for direct verification against hand cases.
double effective_movement(const std::vector<std::vector<double>>& deltas);

// Ordinary least-squares slope of y against x. Throws if fewer than two
// points or if all x coincide.
double fit_slope(const std::vector<std::pair<double, double>>& points);

enum class SlopeFit : std::uint8_t { FullSeries = 0, TrailingWindow = 1 };

struct FreezePolicy {
    std::size_t window = 10;          // H, rounds of movement per EM value
    double threshold = 0.15;          // phi, fraction of the initial slope
    std::size_t patience = 20;        // W, consecutive qualifying rounds required
    std::size_t min_rounds = 15;      // earliest round a freeze may fire
    SlopeFit slope_fit = SlopeFit::FullSeries;
    std::size_t trailing_window = 50; // used when slope_fit == TrailingWindow
};

enum class FreezeDecision : std::uint8_t { Continue = 0, Freeze = 1 };

// Counts consecutive rounds whose slope magnitude sits under
// threshold * |initial slope|; the first slope it sees becomes the initial
// slope. A perfectly flat start (initial slope 0) makes |slope| == 0 qualify,
// so such a block freezes after `patience` evaluations.
class FreezeDecider {
  public:
    explicit FreezeDecider(const FreezePolicy& policy) : policy_(policy) {}

    FreezeDecision feed(double slope);
    std::optional<double> initial_slope() const { return initial_slope_; }
    std::size_t hits() const { return hits_; }

  private:
    FreezePolicy policy_;
    std::optional<double> initial_slope_;
    std::size_t hits_ = 0;
};

// Per-step freeze controller: owns the tracker and the decider, applies the
// warm-up rules. One instance per training step; a new step starts fresh.
class StepFreezeController {
  public:
    StepFreezeController(const FreezePolicy& policy, std::size_t param_count);

    // Observes this round's aggregated block parameters and decides.
    FreezeDecision observe_and_decide(const std::vector<double>& params);

    const EmTracker& tracker() const { return tracker_; }
    std::optional<double> latest_em() const { return tracker_.latest(); }

  private:
    FreezePolicy policy_;
    std::size_t param_count_;
    EmTracker tracker_;
    FreezeDecider decider_;
};

// Replays a recorded EM series through the warm-up and patience rules;
// returns the 1-based position at which the freeze fires, if it does.
// `rounds_before_first_em` tells the replay how many observation rounds
// passed before the first series entry (window size in the live setup).
std::optional<std::size_t> replay_freeze(const std::vector<std::pair<double, double>>& series,
                                         const FreezePolicy& policy,
                                         std::size_t rounds_before_first_em);

}  // namespace profl
