#include <cstdlib>
#include <string>
#include <thread>

#include "lssa/error.hpp"
#include "lssa/parallel.hpp"
#include "lssa/rng.hpp"

namespace lssa {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) {
  // FNV-1a over the label, then mixed with the parent.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return splitmix64(splitmix64(parent) ^ h);
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return splitmix64(splitmix64(parent) + 0x632BE59BD9B4E019ULL * (index + 1));
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kSingularity: return "singularity";
    case ErrorCode::kMissingManifest: return "missing_manifest";
    case ErrorCode::kChecksumMismatch: return "checksum_mismatch";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kVocabularyMismatch: return "vocabulary_mismatch";
    case ErrorCode::kMissingArtifact: return "missing_artifact";
    case ErrorCode::kNumericalFailure: return "numerical_failure";
    case ErrorCode::kConfig: return "config_error";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kUnknownPipeline: return "unknown_pipeline";
  }
  return "unknown";
}

int default_workers() {
  if (const char* env = std::getenv("LSSA_WORKERS"); env != nullptr && *env != '\0') {
    try {
      const int n = std::stoi(env);
      require(n >= 1, ErrorCode::kConfig, "LSSA_WORKERS must be at least 1");
      return n;
    } catch (const std::logic_error&) {
      fail(ErrorCode::kConfig, std::string("LSSA_WORKERS is not an integer: '") + env + "'");
    }
  }
  return static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
}

}  // namespace lssa
