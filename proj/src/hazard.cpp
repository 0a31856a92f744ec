#include "survloco/hazard.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "survloco/error.hpp"

namespace survloco {

double clip_hazard(double h) { return std::clamp(h, kHazardClip, 1.0 - kHazardClip); }

HazardCurve::HazardCurve(std::vector<double> h) : h_(std::move(h)) {
  for (double v : h_)
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("hazard values must lie in [0, 1]");
}

double survival(std::span<const double> h, int intervals_survived) {
  if (intervals_survived < 0 || static_cast<std::size_t>(intervals_survived) > h.size())
    throw ValidationError("survival: interval " + std::to_string(intervals_survived) + " out of range [0, " +
                          std::to_string(h.size()) + "]");
  double log_s = 0.0;
  for (int s = 0; s < intervals_survived; ++s) log_s += std::log1p(-clip_hazard(h[std::size_t(s)]));
  return std::exp(log_s);
}

double nll(std::span<const double> h, ObservedOutcome obs, LossConvention conv) {
  const int d = static_cast<int>(h.size());
  if (obs.interval < 0 || obs.interval >= d)
    throw ValidationError("nll: interval " + std::to_string(obs.interval) + " out of range");
  const bool event_branch = conv == LossConvention::event_indicator ? obs.event : !obs.event;
  const int survived = event_branch ? obs.interval : obs.interval + 1;
  double loss = 0.0;
  for (int s = 0; s < survived; ++s) loss -= std::log1p(-clip_hazard(h[std::size_t(s)]));
  if (event_branch) loss -= std::log(clip_hazard(h[std::size_t(obs.interval)]));
  return loss;
}

double mean_nll(std::span<const HazardCurve> curves, std::span<const ObservedOutcome> obs, LossConvention conv) {
  if (curves.size() != obs.size()) throw ValidationError("mean_nll: length mismatch");
  if (curves.empty()) throw ValidationError("mean_nll: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < curves.size(); ++i) total += nll(curves[i], obs[i], conv);
  return total / static_cast<double>(curves.size());
}

}  // namespace survloco
