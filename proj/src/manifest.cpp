#include "flowcast/manifest.hpp"

#include <fstream>
#include <sstream>

#include "flowcast/errors.hpp"

#include <json.hpp>

namespace flowcast {

std::uint64_t fnv1a64_bytes(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("digest: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a64_bytes(buf.str());
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace

void write_manifest(const std::string& path, const std::string& command, const Config& config,
                    unsigned long seed, const std::vector<std::string>& input_paths,
                    const std::vector<std::string>& artifact_paths) {
  nlohmann::json j;
  j["tool_version"] = kToolVersion;
  j["command"] = command;
  j["seed"] = seed;
  j["digest_algorithm"] = "fnv1a64";
  j["config"] = nlohmann::json::object();
  for (const auto& [key, value] : config.entries()) j["config"][key] = value;
  auto digest_list = [](const std::vector<std::string>& paths) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : paths) arr.push_back({{"path", p}, {"digest", hex64(fnv1a64_file(p))}});
    return arr;
  };
  j["inputs"] = digest_list(input_paths);
  j["artifacts"] = digest_list(artifact_paths);
  std::ofstream out(path);
  if (!out) throw DataError("manifest: cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace flowcast
