#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace guidance {

/// Thrown when a guarded trigonometric denominator or the range collapses
/// below its configured epsilon in the engagement kinematics.
class SingularGeometry : public std::runtime_error {
 public:
  explicit SingularGeometry(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when tensor dimensions disagree with the network layout.
class ShapeMismatch : public std::runtime_error {
 public:
  explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

class EmptyDataset : public std::runtime_error {
 public:
  explicit EmptyDataset(const std::string& what) : std::runtime_error(what) {}
};

class EmptyBuffer : public std::runtime_error {
 public:
  explicit EmptyBuffer(const std::string& what) : std::runtime_error(what) {}
};

/// File is unreadable, truncated, or fails structural validation.
class CorruptFile : public std::runtime_error {
 public:
  explicit CorruptFile(const std::string& what) : std::runtime_error(what) {}
};

/// File magic or format version does not match what this build writes.
class VersionMismatch : public std::runtime_error {
 public:
  explicit VersionMismatch(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

}  // namespace guidance
