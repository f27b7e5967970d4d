#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace udaseg {

// Configuration problems: bad keys, invalid values, unparsable files. Exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Data problems: missing files, malformed images, manifest violations. Exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss. Exit code 4.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  // splitmix64 finalizer over the combined word; used to derive substreams.
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace udaseg
