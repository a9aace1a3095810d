#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace cap {

[[noreturn]] void fail(const std::string& msg);

/// Shortest exact round-trip formatting for doubles (%.17g).
std::string format_double(double v);

/// SplitMix64 mixing step.
std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic sub-seed derivation: mixes a base seed with a tag and two indices.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a = 0,
                          std::uint64_t b = 0);

std::vector<std::string> split(const std::string& s, char delim);
std::string join(const std::vector<std::string>& parts, const std::string& sep);
std::string lower_ascii(std::string s);
std::string trim(const std::string& s);

/// FNV-1a over a byte buffer; used for artifact fingerprints in tests and logs.
std::uint64_t fnv1a(const void* data, std::size_t n);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

/// Deterministic RNG with stdlib-independent integer/real draws, so that
/// sampling decisions inside artifacts never depend on the C++ runtime.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    if (hi < lo) fail("rng: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
  }

  /// Uniform in [0, 1).
  double uniform_real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(engine_() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cap
