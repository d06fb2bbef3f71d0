#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace spill {

/// Input that fails validation (bad file, bad field, unknown name). Maps to exit code 2.
class ValidationError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Failure while computing (solver breakdown, empty neighborhood). Maps to exit code 3.
class RuntimeError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct Vec2
{
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline constexpr const char* kVersion = "0.1.0";

inline constexpr double kSecondsPerDay = 86400.0;
inline constexpr double kCubicMetersPerBarrel = 0.158987294928;

/// SplitMix64 step. Used to derive independent seeds and as the per-parcel
/// stream generator (8 bytes of state, so one stream per parcel is cheap).
constexpr std::uint64_t splitmix64(std::uint64_t& state)
{
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Order-sensitive mix of a seed with a sequence of keys.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t key)
{
  std::uint64_t s = base ^ (key * 0xD6E8FEB86659FD93ull);
  splitmix64(s);
  return splitmix64(s);
}

template <typename... Keys>
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t key, Keys... rest)
{
  return derive_seed(derive_seed(base, key), static_cast<std::uint64_t>(rest)...);
}

/// UniformRandomBitGenerator over SplitMix64.
class StreamRng
{
public:
  using result_type = std::uint64_t;

  constexpr explicit StreamRng(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  constexpr result_type operator()() { return splitmix64(state_); }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
  std::uint64_t state_;
};

/// FNV-1a 64-bit digest, rendered as 16 hex digits. Used for input checksums in manifests.
std::string fnv1a_hex(const void* data, std::size_t size);
std::string file_checksum(const std::string& path);

} // namespace spill
