#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowcast/config.hpp"

namespace flowcast {

inline constexpr const char* kToolVersion = "0.1.0";

std::uint64_t fnv1a64_bytes(const std::string& bytes);
std::uint64_t fnv1a64_file(const std::string& path);

/// Run manifest: config snapshot plus content digests of every input and
/// produced artifact. Deterministic bytes for identical runs.
void write_manifest(const std::string& path, const std::string& command, const Config& config,
                    unsigned long seed, const std::vector<std::string>& input_paths,
                    const std::vector<std::string>& artifact_paths);

}  // namespace flowcast
