#include "dprl/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

namespace dprl::nnet {
namespace {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw CheckpointError(std::string("truncated checkpoint while reading ") +
                                what + ": expected " + std::to_string(n) +
                                " more bytes, " + std::to_string(remaining()) +
                                " available",
                            bytes_.size());
    }
  }

  template <typename T>
  T get_le(const char* what) {
    need(sizeof(T), what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i]))
               << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Mlp& net) {
  std::string out(kCheckpointMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.input_dim));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.output_dim));
    out.push_back(static_cast<char>(l.activation));
  }
  put_le<std::uint64_t>(out, net.params().size());
  out.reserve(out.size() + 8 * net.params().size());
  for (double v : net.params()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Mlp decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  const auto magic = r.take(std::min(bytes.size(), kCheckpointMagic.size()), "magic");
  for (std::size_t i = 0; i < kCheckpointMagic.size(); ++i) {
    if (i >= magic.size()) {
      throw CheckpointError("truncated checkpoint: expected " +
                                std::to_string(kCheckpointMagic.size()) +
                                " magic bytes, file has " +
                                std::to_string(bytes.size()),
                            bytes.size());
    }
    if (magic[i] != kCheckpointMagic[i]) {
      throw CheckpointError("bad magic, not a DPRLNET1 checkpoint", i);
    }
  }

  const std::size_t version_at = r.pos();
  const auto version = r.get_le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " +
                              std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion),
                          version_at);
  }

  const std::size_t count_at = r.pos();
  const auto n_layers = r.get_le<std::uint32_t>("layer count");
  if (n_layers == 0) throw CheckpointError("checkpoint declares zero layers", count_at);
  // Each layer record is 9 bytes; reject absurd counts before allocating.
  r.need(static_cast<std::size_t>(n_layers) * 9, "layer table");

  std::vector<LayerSpec> layers;
  layers.reserve(n_layers);
  for (std::uint32_t k = 0; k < n_layers; ++k) {
    const std::size_t at = r.pos();
    LayerSpec l;
    l.input_dim = r.get_le<std::uint32_t>("layer input dim");
    l.output_dim = r.get_le<std::uint32_t>("layer output dim");
    if (l.input_dim == 0 || l.output_dim == 0) {
      throw CheckpointError("layer " + std::to_string(k) + " has a zero dimension", at);
    }
    if (k > 0 && l.input_dim != layers.back().output_dim) {
      throw CheckpointError("layer " + std::to_string(k) +
                                " input dim does not match previous output dim",
                            at);
    }
    const std::size_t act_at = r.pos();
    const auto act = r.get_le<std::uint8_t>("activation");
    if (act > static_cast<std::uint8_t>(Activation::Tanh)) {
      throw CheckpointError("unknown activation code " + std::to_string(act), act_at);
    }
    l.activation = static_cast<Activation>(act);
    layers.push_back(l);
  }

  const std::size_t pc_at = r.pos();
  const auto n_params = r.get_le<std::uint64_t>("parameter count");
  const std::size_t expected = param_count(layers);
  if (n_params != expected) {
    throw CheckpointError("parameter count " + std::to_string(n_params) +
                              " does not match layer table (" +
                              std::to_string(expected) + ")",
                          pc_at);
  }
  if (r.remaining() != 8 * expected) {
    const std::size_t want = r.pos() + 8 * expected;
    if (r.remaining() < 8 * expected) {
      throw CheckpointError("truncated checkpoint: expected " + std::to_string(want) +
                                " bytes, file has " + std::to_string(bytes.size()),
                            bytes.size());
    }
    throw CheckpointError("trailing data: expected " + std::to_string(want) +
                              " bytes, file has " + std::to_string(bytes.size()),
                          want);
  }

  ParamVector params(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    const std::size_t at = r.pos();
    params[i] = std::bit_cast<double>(r.get_le<std::uint64_t>("parameter"));
    if (!std::isfinite(params[i])) {
      throw CheckpointError("parameter " + std::to_string(i) + " is not finite", at);
    }
  }
  return Mlp(std::move(layers), std::move(params));
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void save_checkpoint(const Mlp& net, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.detail(), e.offset());
  }
}

}  // namespace dprl::nnet
