#pragma once

#include <Eigen/Dense>
#include <random>
#include <stdexcept>
#include <string>

namespace stefan {

/// Spatial point. Two-dimensional problems keep the third coordinate at zero,
/// so norms and dot products need no dimension switch.
using Vec3 = Eigen::Vector3d;

using Rng = std::mt19937_64;

/// Invalid or out-of-scope configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable, unwritable or corrupt file (CLI exit code 3).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a normal direction is requested where the gradient vanishes.
class DegenerateGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stefan
