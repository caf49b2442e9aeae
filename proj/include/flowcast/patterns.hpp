#pragma once

#include <vector>

#include "flowcast/data.hpp"

namespace flowcast {

/// All stride-1 length-S windows over every node for one channel within
/// the leading step_limit steps, z-normalized per window. Windows touching
/// missing values are dropped; all-constant windows become zero series.
std::vector<std::vector<double>> extract_windows(const TrafficTensor& tensor, long window,
                                                 long channel, long step_limit);

/// Per-node representative series for DTW neighbour selection: the mean
/// daily profile over the leading step_limit steps, one profile per
/// channel, concatenated. Slots with no observations fall back to 0.
std::vector<std::vector<double>> mean_daily_profiles(const TrafficTensor& tensor,
                                                     long step_limit);

}  // namespace flowcast
