#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "dprl/nnet.hpp"

namespace dprl::nnet {

// Layout (all integers little-endian):
//   "DPRLNET1"                 8 bytes
//   version                    u32
//   layer count                u32
//   per layer: in u32, out u32, activation u8
//   parameter count            u64
//   parameters                 f64 IEEE-754 each
inline constexpr std::string_view kCheckpointMagic = "DPRLNET1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        detail_(what),
        offset_(offset) {}

  const std::string& detail() const { return detail_; }

  // Position of the first byte that could not be accepted.
  std::size_t offset() const { return offset_; }

 private:
  std::string detail_;
  std::size_t offset_;
};

std::string encode_checkpoint(const Mlp& net);
Mlp decode_checkpoint(std::string_view bytes);

// 64-bit FNV-1a over raw bytes; used to detect payload corruption that the
// layout alone cannot reveal.
std::uint64_t fnv1a64(std::string_view bytes);

std::string read_file_bytes(const std::filesystem::path& path);

void save_checkpoint(const Mlp& net, const std::filesystem::path& path);
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace dprl::nnet
