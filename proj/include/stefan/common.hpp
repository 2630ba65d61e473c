#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace stefan {

// Space dimension. Formulas keep (kDim - 1) explicit so the axisymmetric
// n >= 3 extension only has to swap the angular calculus.
inline constexpr int kDim = 2;

inline constexpr double kPi = std::numbers::pi;

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

enum class ErrorKind {
  GraphViolation,
  MapDegenerate,
  ClearanceViolation,
  OutsidePureRegion,
  StepUnstable,
  SolverFailed,
  SingularRegularization,
  ModulationSingular,
  RecenterDiverged,
  StopOnBlowup,
  EigenFailed,
  FitDegenerate,
  MissingData,
  ConfigError,
};

inline const char* error_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::GraphViolation: return "GraphViolation";
    case ErrorKind::MapDegenerate: return "MapDegenerate";
    case ErrorKind::ClearanceViolation: return "ClearanceViolation";
    case ErrorKind::OutsidePureRegion: return "OutsidePureRegion";
    case ErrorKind::StepUnstable: return "StepUnstable";
    case ErrorKind::SolverFailed: return "SolverFailed";
    case ErrorKind::SingularRegularization: return "SingularRegularization";
    case ErrorKind::ModulationSingular: return "ModulationSingular";
    case ErrorKind::RecenterDiverged: return "RecenterDiverged";
    case ErrorKind::StopOnBlowup: return "StopOnBlowup";
    case ErrorKind::EigenFailed: return "EigenFailed";
    case ErrorKind::FitDegenerate: return "FitDegenerate";
    case ErrorKind::MissingData: return "MissingData";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, double magnitude = 0.0)
      : std::runtime_error(std::string(error_name(kind)) + ": " + what),
        kind_(kind),
        magnitude_(magnitude) {}

  ErrorKind kind() const { return kind_; }
  // Diagnostic size attached to the failure (a determinant, a norm, ...).
  double magnitude() const { return magnitude_; }

 private:
  ErrorKind kind_;
  double magnitude_;
};

// Quintic smoothstep 6u^5 - 15u^4 + 10u^3 and its first two derivatives,
// clamped to [0, 1] outside the unit interval.
struct Smooth {
  double v, d1, d2;
};

inline Smooth smoothstep5(double u) {
  if (u <= 0.0) return {0.0, 0.0, 0.0};
  if (u >= 1.0) return {1.0, 0.0, 0.0};
  const double u2 = u * u, u3 = u2 * u;
  return {u3 * (10.0 - 15.0 * u + 6.0 * u2), 30.0 * u2 * (1.0 - u) * (1.0 - u),
          60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)};
}

// Antiderivative of smoothstep5 on [0, 1] with value 0 at u = 0.
inline double smoothstep5_integral(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 0.5 + (u - 1.0);
  const double u2 = u * u, u4 = u2 * u2;
  return u4 * (u2 - 3.0 * u + 2.5);
}

}  // namespace stefan
