#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ringqkd {

/// Bad user-supplied configuration (schema, ranges, unresolved names). CLI exit code 1.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad or missing input data (unreadable files, corrupt rows, unsorted tag
/// streams, ill-posed reconstructions). CLI exit code 2.
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Broken internal invariant. CLI exit code 3.
struct internal_error : std::logic_error {
    using std::logic_error::logic_error;
};

inline constexpr double kPi = std::numbers::pi_v<double>;
inline constexpr double kTsirelson = 2.8284271247461903;  // 2*sqrt(2)

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

/// Normalize an analyzer angle to [0, 180). Polarizer axes are pi-periodic.
inline double normalize_angle_deg(double deg) {
    double a = std::fmod(deg, 180.0);
    if (a < 0.0) a += 180.0;
    return a;
}

/// FNV-1a, used for config hashes in run manifests.
inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace ringqkd
