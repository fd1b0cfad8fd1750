#include "attnmask/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace attnmask {

namespace {

constexpr char kMagic[8] = {'A', 'T', 'M', 'K', 'C', 'K', 'P', '1'};

void put_u64(std::ofstream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t get_u64(std::ifstream& in, const std::string& path) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("truncated checkpoint " + path);
  return v;
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kMagic, sizeof kMagic);
  put_u64(out, params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.name(ParamId{i});
    const Tensor& t = params.value(ParamId{i});
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, t.shape().size());
    for (int d : t.shape()) put_u64(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

void load_checkpoint(ParamStore& params, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error(path + ": not a checkpoint");
  }
  if (get_u64(in, path) != params.size()) throw std::runtime_error(path + ": parameter count differs from model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::uint64_t len = get_u64(in, path);
    if (len > 4096) throw std::runtime_error(path + ": corrupt parameter name");
    std::string name(len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(len))) throw std::runtime_error("truncated checkpoint " + path);
    if (name != params.name(ParamId{i})) {
      throw std::runtime_error(path + ": expected parameter " + params.name(ParamId{i}) + ", found " + name);
    }
    Tensor& t = params.value(ParamId{i});
    const std::uint64_t rank = get_u64(in, path);
    Shape shape;
    for (std::uint64_t k = 0; k < rank && k < 8; ++k) shape.push_back(static_cast<int>(get_u64(in, path)));
    if (shape != t.shape()) throw std::runtime_error(path + ": shape mismatch for " + name);
    if (!in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)))) {
      throw std::runtime_error("truncated checkpoint " + path);
    }
  }
}

}  // namespace attnmask
