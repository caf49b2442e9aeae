#include "flowcast/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "flowcast/errors.hpp"

namespace flowcast {

namespace {

constexpr char kMagic[4] = {'P', 'D', 'F', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError("checkpoint: truncated file " + path);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

float read_f32(std::istream& in, const std::string& path) {
  const std::uint32_t bits = read_u32(in, path);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, 4);
  write_u32(out, static_cast<std::uint32_t>(params.count()));
  for (const auto& p : params.all()) {
    write_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_u32(out, static_cast<std::uint32_t>(p->value.rank()));
    for (long d : p->value.shape()) write_u32(out, static_cast<std::uint32_t>(d));
    for (long i = 0; i < p->value.size(); ++i) {
      write_f32(out, static_cast<float>(p->value[i]));
    }
  }
  if (!out) throw DataError("checkpoint: write failed for " + path);
}

void load_checkpoint(ParamStore& params, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("checkpoint: bad magic in " + path);
  }
  const std::uint32_t count = read_u32(in, path);
  if (static_cast<long>(count) != params.count()) {
    throw DataError("checkpoint: " + path + " holds " + std::to_string(count) +
                    " parameters, expected " + std::to_string(params.count()));
  }
  for (std::uint32_t pi = 0; pi < count; ++pi) {
    const std::uint32_t name_len = read_u32(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw DataError("checkpoint: truncated file " + path);
    Parameter* p = params.find(name);
    if (!p) throw DataError("checkpoint: unknown parameter '" + name + "' in " + path);
    const std::uint32_t rank = read_u32(in, path);
    std::vector<long> dims;
    for (std::uint32_t r = 0; r < rank; ++r) dims.push_back(static_cast<long>(read_u32(in, path)));
    if (dims != p->value.shape()) {
      throw DataError("checkpoint: shape mismatch for '" + name + "' in " + path + ": file " +
                      Tensor::shape_str(dims) + " vs model " + p->value.shape_str());
    }
    for (long i = 0; i < p->value.size(); ++i) {
      p->value[i] = static_cast<double>(read_f32(in, path));
    }
  }
}

}  // namespace flowcast
