#pragma once

// Binary checkpoint layout (all integers and floats little-endian):
//
//   bytes 0..7   magic "PRPHCKPT"
//   u32          format version (1)
//   u64 x 5      vocab, embed, feature, hidden, attention
//   u32          tensor count (31)
//   per tensor, in ModelParams::names() order:
//     u64 rows, u64 cols, rows * cols f64 values (row-major)

#include <filesystem>
#include <iosfwd>

#include "prophet/captioner.hpp"

namespace prophet {

inline constexpr char kCheckpointMagic[8] = {'P', 'R', 'P', 'H', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace prophet
