#include "flowcast/patterns.hpp"

#include <algorithm>

#include "flowcast/errors.hpp"
#include "flowcast/kshape.hpp"

namespace flowcast {

std::vector<std::vector<double>> extract_windows(const TrafficTensor& tensor, long window,
                                                 long channel, long step_limit) {
  if (window < 2) throw ConfigError("extract_windows: window must be >= 2");
  if (channel < 0 || channel >= tensor.channels()) {
    throw ConfigError("extract_windows: channel " + std::to_string(channel) + " out of range");
  }
  const long limit = std::min(step_limit, tensor.steps());
  if (limit < window) {
    throw DataError("extract_windows: " + std::to_string(limit) +
                    " steps cannot fit a window of " + std::to_string(window));
  }
  std::vector<std::vector<double>> out;
  std::vector<double> buf(static_cast<size_t>(window));
  for (long n = 0; n < tensor.nodes(); ++n) {
    for (long start = 0; start + window <= limit; ++start) {
      bool valid = true;
      for (long j = 0; j < window && valid; ++j) {
        if (tensor.is_missing(start + j, n, channel)) valid = false;
      }
      if (!valid) continue;
      for (long j = 0; j < window; ++j) {
        buf[static_cast<size_t>(j)] = tensor.values.at(start + j, n, channel);
      }
      std::vector<double> w = buf;
      znormalize(w);
      out.push_back(std::move(w));
    }
  }
  if (out.empty()) throw DataError("extract_windows: no window is free of missing values");
  return out;
}

std::vector<std::vector<double>> mean_daily_profiles(const TrafficTensor& tensor,
                                                     long step_limit) {
  const long spd = tensor.slots_per_day();
  const long limit = std::min(step_limit, tensor.steps());
  const long c = tensor.channels();
  std::vector<std::vector<double>> profiles(
      static_cast<size_t>(tensor.nodes()),
      std::vector<double>(static_cast<size_t>(spd * c), 0.0));
  std::vector<long> counts(static_cast<size_t>(spd), 0);
  for (long n = 0; n < tensor.nodes(); ++n) {
    auto& profile = profiles[static_cast<size_t>(n)];
    for (long ch = 0; ch < c; ++ch) {
      std::fill(counts.begin(), counts.end(), 0);
      for (long t = 0; t < limit; ++t) {
        if (tensor.is_missing(t, n, ch)) continue;
        const long slot = tensor.day_slot(t);
        profile[static_cast<size_t>(ch * spd + slot)] += tensor.values.at(t, n, ch);
        ++counts[static_cast<size_t>(slot)];
      }
      for (long slot = 0; slot < spd; ++slot) {
        if (counts[static_cast<size_t>(slot)] > 0) {
          profile[static_cast<size_t>(ch * spd + slot)] /=
              static_cast<double>(counts[static_cast<size_t>(slot)]);
        }
      }
    }
  }
  return profiles;
}

}  // namespace flowcast
