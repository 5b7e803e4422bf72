#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qgrom {

/// Error kinds mirrored by the C API status codes.
enum class ErrorKind : int {
  invalid_argument = 1,
  numeric = 2,
  io = 3,
  format = 4,
  internal = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& msg)
      : Error(ErrorKind::invalid_argument, msg) {}
};

/// Solver non-convergence, field blow-up, training divergence.
struct NumericError : Error {
  explicit NumericError(const std::string& msg)
      : Error(ErrorKind::numeric, msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(ErrorKind::io, msg) {}
};

/// Malformed binary archives: bad magic, truncation, checksum mismatch.
struct FormatError : Error {
  explicit FormatError(const std::string& msg)
      : Error(ErrorKind::format, msg) {}
};

/// Deterministic 64-bit generator (xoshiro256**). Behaviour is pinned by this
/// implementation, not by the standard library, so archives that record a seed
/// replay identically on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double next_double();
  /// Standard normal via Box-Muller.
  double next_gaussian();
  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// FNV-1a 64-bit running hash; used for archive checksums and sweep
/// fingerprints.
class Fnv1a {
 public:
  void update(const void* data, std::size_t len);
  void update_u64(std::uint64_t v);
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 1469598103934665603ull;
};

/// Shortest decimal that round-trips a double (17 significant digits).
std::string format_full(double v);

}  // namespace qgrom
