#pragma once

#include <span>
#include <vector>

namespace survloco {

// Hazards are clipped into [kHazardClip, 1 - kHazardClip] before any log.
inline constexpr double kHazardClip = 1e-6;

double clip_hazard(double h);

// Per-interval conditional hazards h[0..d) for one subject. Entry s is the
// probability of the event in interval s given survival to its start. Raw
// values in [0, 1] are stored unchanged; clipping happens at evaluation.
class HazardCurve {
public:
  HazardCurve() = default;
  explicit HazardCurve(std::vector<double> h);
  explicit HazardCurve(std::size_t intervals) : h_(intervals, 0.0) {}

  std::size_t size() const { return h_.size(); }
  double operator[](std::size_t s) const { return h_[s]; }
  double& operator[](std::size_t s) { return h_[s]; }
  std::span<const double> values() const { return h_; }
  std::span<double> values() { return h_; }

private:
  std::vector<double> h_;
};

// Discretized outcome: `interval` is the 0-based index of the interval the
// observed time falls in; `event` is 1 when progression was observed.
struct ObservedOutcome {
  int interval = 0;
  bool event = false;
};

// Which flag value selects the event branch of the loss. `event_indicator`
// treats event == true as observed; `censoring_indicator` reads the flag as a
// censoring indicator C with C = 0 selecting the event branch.
enum class LossConvention { event_indicator, censoring_indicator };

// Probability of surviving the first `intervals_survived` intervals:
// prod_{s < k} (1 - h[s]). k ranges over [0, d]; survival(curve, 0) == 1.
double survival(std::span<const double> h, int intervals_survived);
inline double survival(const HazardCurve& c, int intervals_survived) { return survival(c.values(), intervals_survived); }

// Negative log-likelihood of one discretized observation:
//   event at q:     -log h[q] - log S(q)
//   censored at q:  -log S(q + 1)
// where S(k) is survival() above.
double nll(std::span<const double> h, ObservedOutcome obs, LossConvention conv = LossConvention::event_indicator);
inline double nll(const HazardCurve& c, ObservedOutcome obs, LossConvention conv = LossConvention::event_indicator) {
  return nll(c.values(), obs, conv);
}

double mean_nll(std::span<const HazardCurve> curves, std::span<const ObservedOutcome> obs,
                LossConvention conv = LossConvention::event_indicator);

}  // namespace survloco
