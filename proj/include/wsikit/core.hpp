#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wsikit {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorKind {
  MissingLevel,
  DimensionMismatch,
  CorruptRaster,
  IoFailure,
  ParseError,
  UnknownClass,
  DegeneratePolygon,
  DepthExceedsLevels,
  OutOfBounds,
  NotALeaf,
  MissingClass,
  Exhausted,
  UntrainedExpert,
  ShapeMismatch,
  EmptyDataset,
  LengthMismatch,
  EmptyMatrix,
  EmptyCounts,
  SingleClass,
  InvalidSpec,
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::MissingLevel: return "MissingLevel";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::CorruptRaster: return "CorruptRaster";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::UnknownClass: return "UnknownClass";
    case ErrorKind::DegeneratePolygon: return "DegeneratePolygon";
    case ErrorKind::DepthExceedsLevels: return "DepthExceedsLevels";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::NotALeaf: return "NotALeaf";
    case ErrorKind::MissingClass: return "MissingClass";
    case ErrorKind::Exhausted: return "Exhausted";
    case ErrorKind::UntrainedExpert: return "UntrainedExpert";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyMatrix: return "EmptyMatrix";
    case ErrorKind::EmptyCounts: return "EmptyCounts";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

// ---------------------------------------------------------------------------
// Tissue classes
// ---------------------------------------------------------------------------

// Fixed severity order: Normal < Benign < InSitu < Invasive. Label policies
// break ties toward the later (more severe) class.
enum class TumorClass : int {
  Normal = 0,
  Benign = 1,
  InSitu = 2,
  Invasive = 3,
};

inline constexpr int kTumorClassCount = 4;

inline const char* class_token(TumorClass c) {
  switch (c) {
    case TumorClass::Normal: return "normal";
    case TumorClass::Benign: return "benign";
    case TumorClass::InSitu: return "insitu";
    case TumorClass::Invasive: return "invasive";
  }
  return "?";
}

// Tokens are case-sensitive; anything else is UnknownClass.
inline TumorClass class_from_token(std::string_view token) {
  if (token == "normal") return TumorClass::Normal;
  if (token == "benign") return TumorClass::Benign;
  if (token == "insitu") return TumorClass::InSitu;
  if (token == "invasive") return TumorClass::Invasive;
  fail(ErrorKind::UnknownClass, std::string(token));
}

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Stateless position hash for procedural textures and noise.
inline std::uint64_t hash_coords(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b, std::uint64_t c = 0) {
  std::uint64_t s = seed ^ (a * 0x9E3779B97F4A7C15ULL) ^
                    (b * 0xC2B2AE3D27D4EB4FULL) ^ (c * 0x165667B19E3779F9ULL);
  return splitmix64(s);
}

// Small deterministic generator. All randomized behavior in the library goes
// through this type so results are reproducible across platforms (std
// distributions are not pinned by the standard).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double next_double(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    next_below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derive an independent stream; used for per-class / per-epoch substreams.
  Rng fork(std::uint64_t tag) const {
    std::uint64_t s = state_ ^ (0xD6E8FEB86659FD93ULL * (tag + 1));
    return Rng(splitmix64(s));
  }

 private:
  std::uint64_t state_;
};

}  // namespace wsikit
