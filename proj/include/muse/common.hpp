#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace muse {

using TrackId = std::uint32_t;

/// Longest session the model sees; MSSD caps sessions at 20 plays.
inline constexpr std::size_t kMaxLen = 20;

/// Base class for every error raised by the library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input (bad TSV row, bad checkpoint bytes).
class parse_error : public error {
 public:
  using error::error;
};

/// Input that parses but violates a data invariant.
class validation_error : public error {
 public:
  using error::error;
};

/// Invalid user-supplied configuration.
class config_error : public error {
 public:
  using error::error;
};

/// Out-of-range track id or tensor index.
class index_error : public error {
 public:
  using error::error;
};

/// Numerical divergence during training.
class divergence_error : public error {
 public:
  using error::error;
};

}  // namespace muse
