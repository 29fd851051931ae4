#include "recam/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "recam/errors.hpp"

namespace recam::ckpt {

namespace {

constexpr char kMagic[4] = {'R', 'C', 'K', 'P'};

void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_f64(std::ostream& out, double v) {
  static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559);
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw ParseError("checkpoint: truncated while reading u32");
  }
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw ParseError("checkpoint: truncated while reading u64");
  }
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  const uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save(const std::string& path, const nlohmann::json& meta,
          const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("checkpoint: cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  put_u32(out, kFormatVersion);
  const std::string meta_text = meta.dump();
  put_u32(out, static_cast<uint32_t>(meta_text.size()));
  out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
  put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<uint32_t>(t.ndim()));
    for (int64_t dim : t.shape()) put_u64(out, static_cast<uint64_t>(dim));
    for (double v : t.data()) put_f64(out, v);
  }
  if (!out) throw ParseError("checkpoint: write failed for '" + path + "'");
}

const Tensor* Loaded::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

Loaded load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError("checkpoint: '" + path + "' is not a checkpoint file");
  }
  const uint32_t version = get_u32(in);
  if (version != kFormatVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  }
  const uint32_t meta_len = get_u32(in);
  std::string meta_text(meta_len, '\0');
  if (!in.read(meta_text.data(), meta_len)) {
    throw ParseError("checkpoint: truncated metadata");
  }
  Loaded result;
  try {
    result.meta = nlohmann::json::parse(meta_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: bad metadata JSON: ") + e.what());
  }
  const uint32_t count = get_u32(in);
  result.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw ParseError("checkpoint: truncated tensor name");
    }
    const uint32_t ndim = get_u32(in);
    std::vector<int64_t> shape(ndim);
    int64_t numel = 1;
    for (uint32_t k = 0; k < ndim; ++k) {
      shape[k] = static_cast<int64_t>(get_u64(in));
      if (shape[k] < 0) throw ParseError("checkpoint: negative dimension");
      numel *= shape[k];
    }
    std::vector<double> data(static_cast<size_t>(numel));
    for (int64_t k = 0; k < numel; ++k) data[static_cast<size_t>(k)] = get_f64(in);
    result.tensors.emplace_back(std::move(name),
                                Tensor::from_data(std::move(shape), std::move(data)));
  }
  return result;
}

}  // namespace recam::ckpt
