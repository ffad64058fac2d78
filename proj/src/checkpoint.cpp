#include "prophet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace prophet {

namespace {

template <class T>
void put(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw std::runtime_error(std::string("checkpoint truncated while reading ") + what);
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& params) {
  params.validate();
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  const auto& d = params.dims;
  for (std::uint64_t v : {d.vocab, d.embed, d.feature, d.hidden, d.attention}) put<std::uint64_t>(out, v);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ModelParams::kTensorCount));
  for (const Tensor* t : params.tensors()) {
    put<std::uint64_t>(out, t->rows());
    put<std::uint64_t>(out, t->cols());
    for (double v : t->data()) put<double>(out, v);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

ModelParams read_checkpoint(std::istream& in) {
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw std::runtime_error("not a checkpoint file (bad magic)");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  ModelParams p;
  p.dims.vocab = get<std::uint64_t>(in, "vocab");
  p.dims.embed = get<std::uint64_t>(in, "embed");
  p.dims.feature = get<std::uint64_t>(in, "feature");
  p.dims.hidden = get<std::uint64_t>(in, "hidden");
  p.dims.attention = get<std::uint64_t>(in, "attention");
  const auto count = get<std::uint32_t>(in, "tensor count");
  if (count != ModelParams::kTensorCount) {
    throw std::runtime_error("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                             std::to_string(ModelParams::kTensorCount));
  }
  const auto expected = ModelParams::shapes_for(p.dims);
  const auto list = p.tensors();
  for (std::size_t i = 0; i < ModelParams::kTensorCount; ++i) {
    const Shape s{get<std::uint64_t>(in, "rows"), get<std::uint64_t>(in, "cols")};
    if (s != expected[i]) {
      throw std::runtime_error("checkpoint tensor " + std::string(ModelParams::names()[i]) +
                               " has shape " + to_string(s) + ", expected " + to_string(expected[i]));
    }
    std::vector<double> data(s.numel());
    for (auto& v : data) v = get<double>(in, "tensor data");
    *list[i] = Tensor(s, std::move(data));
  }
  p.validate();
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(out, params);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace prophet
