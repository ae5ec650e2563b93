#pragma once

// Learnable parameters of the session encoder, aggregation and prediction
// layers, plus the binary checkpoint format.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "muse/autograd.hpp"
#include "muse/common.hpp"
#include "muse/random.hpp"

namespace muse {

/// Row-vector convention throughout: a weight of shape (out x in) maps a
/// 1 x in row r to r * W^T.
struct ModelParams {
  Matrix embedding;  // |V| x d

  // gated graph layer
  Matrix w_in, b_in;    // d x d, 1 x d: incoming-edge messages
  Matrix w_out, b_out;  // d x d, 1 x d: outgoing-edge messages
  Matrix w_update, u_update, b_update;  // d x 2d, d x d, 1 x d
  Matrix w_reset, u_reset, b_reset;
  Matrix w_cand, u_cand, b_cand;

  // attention aggregation and fusion
  Matrix att_w1;  // 1 x d
  Matrix att_w2;  // d x d, applied to each track
  Matrix att_w3;  // d x d, applied to the last track
  Matrix att_b;   // 1 x d
  Matrix w_fuse;  // d x 2d over [local, global]

  std::size_t vocab_size() const { return static_cast<std::size_t>(embedding.rows()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(embedding.cols()); }

  /// Every tensor with its checkpoint name, in a fixed order.
  template <typename Self>
  static auto tensors_of(Self& p) {
    using M = std::conditional_t<std::is_const_v<Self>, const Matrix, Matrix>;
    return std::array<std::pair<std::string_view, M*>, 19>{{
        {"embedding", &p.embedding}, {"w_in", &p.w_in},         {"b_in", &p.b_in},
        {"w_out", &p.w_out},         {"b_out", &p.b_out},       {"w_update", &p.w_update},
        {"u_update", &p.u_update},   {"b_update", &p.b_update}, {"w_reset", &p.w_reset},
        {"u_reset", &p.u_reset},     {"b_reset", &p.b_reset},   {"w_cand", &p.w_cand},
        {"u_cand", &p.u_cand},       {"b_cand", &p.b_cand},     {"att_w1", &p.att_w1},
        {"att_w2", &p.att_w2},       {"att_w3", &p.att_w3},     {"att_b", &p.att_b},
        {"w_fuse", &p.w_fuse},
    }};
  }
  auto tensors() { return tensors_of(*this); }
  auto tensors() const { return tensors_of(*this); }

  /// All-zero parameters of the right shapes.
  static ModelParams zeros(std::size_t vocab_size, std::size_t d) {
    const auto n = static_cast<Eigen::Index>(d);
    ModelParams p;
    p.embedding = Matrix::Zero(static_cast<Eigen::Index>(vocab_size), n);
    for (Matrix* m : {&p.w_in, &p.w_out, &p.u_update, &p.u_reset, &p.u_cand, &p.att_w2, &p.att_w3}) {
      *m = Matrix::Zero(n, n);
    }
    for (Matrix* m : {&p.b_in, &p.b_out, &p.b_update, &p.b_reset, &p.b_cand, &p.att_w1, &p.att_b}) {
      *m = Matrix::Zero(1, n);
    }
    for (Matrix* m : {&p.w_update, &p.w_reset, &p.w_cand, &p.w_fuse}) *m = Matrix::Zero(n, 2 * n);
    return p;
  }

  /// Uniform(-1/sqrt(d), 1/sqrt(d)) initialization.
  static ModelParams random(std::size_t vocab_size, std::size_t d, std::uint64_t seed) {
    if (d == 0) throw config_error("hidden dimension must be positive");
    ModelParams p = zeros(vocab_size, d);
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& [name, m] : p.tensors()) {
      for (Eigen::Index r = 0; r < m->rows(); ++r) {
        for (Eigen::Index c = 0; c < m->cols(); ++c) (*m)(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
      }
    }
    return p;
  }

  ModelParams zeros_like() const { return zeros(vocab_size(), hidden_dim()); }

  void set_zero() {
    for (auto& [name, m] : tensors()) m->setZero();
  }

  bool all_finite() const {
    for (const auto& [name, m] : tensors()) {
      if (!m->allFinite()) return false;
    }
    return true;
  }

  bool operator==(const ModelParams& other) const {
    auto a = tensors();
    auto b = other.tensors();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const Matrix& x = *a[i].second;
      const Matrix& y = *b[i].second;
      if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
      if (std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) != 0) return false;
    }
    return true;
  }
};

// ---------------------------------------------------------------------------
// Checkpoint: "MUSECKPT", u32 version, u64 |V|, u64 d, then per tensor
// u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64 row-major.
// All integers and floats little-endian.

inline constexpr std::array<char, 8> kCheckpointMagic{'M', 'U', 'S', 'E', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw parse_error(std::string("truncated checkpoint while reading ") + what);
  }
  return v;
}

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const ModelParams& p) {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::write_pod<std::uint32_t>(out, kCheckpointVersion);
  detail::write_pod<std::uint64_t>(out, p.vocab_size());
  detail::write_pod<std::uint64_t>(out, p.hidden_dim());
  for (const auto& [name, m] : p.tensors()) {
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m->rows()));
    detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m->cols()));
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) detail::write_pod<double>(out, (*m)(r, c));
    }
  }
  if (!out) throw error("failed writing checkpoint");
}

inline ModelParams load_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kCheckpointMagic) {
    throw parse_error("not a checkpoint (bad magic bytes)");
  }
  auto version = detail::read_pod<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw parse_error("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  auto vocab = detail::read_pod<std::uint64_t>(in, "vocabulary size");
  auto d = detail::read_pod<std::uint64_t>(in, "hidden dimension");
  if (d == 0 || d > (1u << 16) || vocab > (1ull << 32)) throw parse_error("implausible checkpoint dimensions");
  ModelParams p = ModelParams::zeros(vocab, d);
  for (auto& [name, m] : p.tensors()) {
    auto len = detail::read_pod<std::uint32_t>(in, "tensor name length");
    if (len != name.size()) throw parse_error("checkpoint tensor order mismatch at " + std::string(name));
    std::string got(len, '\0');
    in.read(got.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len)) throw parse_error("truncated checkpoint in tensor name");
    if (got != name) throw parse_error("expected tensor " + std::string(name) + ", found " + got);
    auto rows = detail::read_pod<std::uint64_t>(in, "row count");
    auto cols = detail::read_pod<std::uint64_t>(in, "column count");
    if (rows != static_cast<std::uint64_t>(m->rows()) || cols != static_cast<std::uint64_t>(m->cols())) {
      throw parse_error("tensor " + std::string(name) + " has unexpected shape");
    }
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) (*m)(r, c) = detail::read_pod<double>(in, "tensor data");
    }
  }
  return p;
}

inline void save_checkpoint(const std::string& path, const ModelParams& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot open " + path + " for writing");
  save_checkpoint(out, p);
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open checkpoint " + path);
  return load_checkpoint(in);
}

}  // namespace muse
