#pragma once

#include "flowcast/data.hpp"
#include "flowcast/model.hpp"
#include "flowcast/params.hpp"
#include "flowcast/tensor.hpp"

namespace flowcast::testing {

/// Straight-line re-implementation of the full forward pass (embedding,
/// masked spatial heads with delay-shifted keys, temporal heads, fusion,
/// FFN/norms, skips, output head) using plain loops. Shares only the
/// weight values with the production path, never its operators.
Tensor reference_forward(const ModelConfig& cfg, const ParamStore& params,
                         const PreprocessArtifacts& artifacts, const Sample& sample);

}  // namespace flowcast::testing
