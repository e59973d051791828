#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sogmix {

// Error categories map 1:1 onto CLI exit codes (2/3/4).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fixed covariate layout shared by every model stage. Continuous features
// occupy columns 0..7 (standardized), integer-coded categoricals 8..9.
inline constexpr int kNumFeatures = 10;
inline constexpr int kNumContinuous = 8;
inline constexpr int kVesselGroupFeature = 8;
inline constexpr int kStatusFeature = 9;

inline constexpr std::array<const char*, kNumFeatures> kFeatureNames = {
    "scaled_icec",          "scaled_wind_along", "scaled_wind_cross",
    "scaled_dist_to_coast", "scaled_bathy",      "scaled_cog_sin",
    "scaled_cog_cos",       "scaled_delta_cog",  "vessel_group_idx",
    "status_idx"};

// Categorical levels unseen at fit time encode as -1. Tree routing compares
// "value <= threshold" and all trained thresholds are >= 0 for categorical
// columns, so the reserved index always routes to the left branch.
inline constexpr double kUnknownCategory = -1.0;

inline bool is_categorical_feature(int feature) {
  return feature == kVesselGroupFeature || feature == kStatusFeature;
}

// FNV-1a, used for config hashes and input digests in run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

}  // namespace sogmix
