#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace killchain {

// Error hierarchy. The CLI maps each subclass to a distinct exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Query budget would be overrun; nothing was consumed.
struct BudgetExhausted : Error {
  using Error::Error;
};

// Remote oracle unreachable or spoke a broken protocol; budget not charged.
struct TransportError : Error {
  using Error::Error;
};

struct ArtifactMissing : Error {
  using Error::Error;
};

// Dataset ingestion failure (missing path, malformed annotation row, ...).
struct IngestError : Error {
  using Error::Error;
};

// A persisted report or model file violates its schema/invariants.
struct ValidationError : Error {
  using Error::Error;
};

// FNV-1a, used for config hashes and model fingerprints. Stable across
// platforms, unlike std::hash.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

}  // namespace killchain
