#pragma once

// Closed-form two-level algebra for a single avoided crossing.
//
// In the bare basis {|b1>, |b2>} the static Hamiltonian (E/h, MHz) is
//
//   H = (B - B0) diag(mu1, mu2) + (omega / 2) sigma_x
//
// so the eigenvalue gap is sqrt(delta^2 + omega^2) with
// delta = (mu2 - mu1)(B - B0), and the minimal splitting equals omega.

#include <cmath>
#include <vector>

#include "rfcruise/error.hpp"
#include "rfcruise/manifold.hpp"
#include "rfcruise/units.hpp"

namespace rfcruise {

struct CrossingFrame {
  double omega = 0.0; // coupling, MHz (also the minimal splitting)
  double mu1 = 0.0;   // moment of |b1>, MHz/G
  double mu2 = 0.0;   // moment of |b2>, MHz/G
  double b0 = 0.0;    // G
  double delta = 0.0; // detuning at the frame's field, MHz

  double dmu() const { return mu2 - mu1; }
  double detuning_at(double field_g) const { return dmu() * (field_g - b0); }
  double field() const { return b0 + delta / dmu(); }

  /// Same crossing, evaluated at another field.
  CrossingFrame at(double field_g) const {
    CrossingFrame f = *this;
    f.delta = detuning_at(field_g);
    return f;
  }

  static CrossingFrame make(double omega, double mu1, double mu2, double b0, double field_g) {
    if (mu1 == mu2) throw ValidationError("crossing-model", "mu1 == mu2: levels never cross");
    if (!(omega >= 0.0)) throw ValidationError("crossing-model", "coupling must be >= 0");
    CrossingFrame f{omega, mu1, mu2, b0, 0.0};
    f.delta = f.detuning_at(field_g);
    return f;
  }
};

/// Frame of a manifold crossing: |b1> is the `lower` level, |b2> the `upper`.
inline CrossingFrame frame_for(const LevelManifold& m, const AvoidedCrossing& c,
                               double field_g) {
  const auto& lo = m.level(c.level_lower);
  const auto& up = m.level(c.level_upper);
  return CrossingFrame::make(c.coupling_omega, lo.magnetic_moment, up.magnetic_moment, c.b0,
                             field_g);
}

inline CrossingFrame frame_for(const LevelManifold& m, const AvoidedCrossing& c) {
  return frame_for(m, c, c.b0);
}

namespace detail {
inline void require_coupled(const CrossingFrame& f) {
  if (!(f.omega > 0.0)) throw ValidationError("crossing-model", "coupling omega must be > 0");
  if (f.mu1 == f.mu2) throw ValidationError("crossing-model", "mu1 == mu2");
}
} // namespace detail

inline double splitting(const CrossingFrame& f) { return std::hypot(f.delta, f.omega); }

/// theta = arctan((delta + sqrt(delta^2 + omega^2)) / omega), in (0, pi/2).
inline double mixing_angle(const CrossingFrame& f) {
  detail::require_coupled(f);
  const double r = std::hypot(f.delta, f.omega);
  // For delta << 0 the numerator cancels; use the conjugate form.
  const double num = f.delta >= 0.0 ? f.delta + r : f.omega * f.omega / (r - f.delta);
  return std::atan(num / f.omega);
}

struct DressedPair {
  double e_upper = 0.0; // MHz
  double e_lower = 0.0; // MHz
  double theta = 0.0;
  double upper[2] = {0.0, 0.0}; // bare-basis components (b1, b2)
  double lower[2] = {0.0, 0.0};
};

/// Eigenpairs of the static Hamiltonian (no rf) with energies measured from
/// the bare crossing point, i.e. for H = (B - B0) diag(mu1, mu2) + omega/2 sigma_x.
inline DressedPair dressed_pair(const CrossingFrame& f) {
  detail::require_coupled(f);
  const double x = f.delta / f.dmu(); // B - B0
  const double mean = 0.5 * (f.mu1 + f.mu2) * x;
  const double half_gap = 0.5 * std::hypot(f.delta, f.omega);
  DressedPair p;
  p.theta = mixing_angle(f);
  p.e_upper = mean + half_gap;
  p.e_lower = mean - half_gap;
  const double c = std::cos(p.theta), s = std::sin(p.theta);
  p.upper[0] = c;
  p.upper[1] = s;
  p.lower[0] = -s;
  p.lower[1] = c;
  return p;
}

/// Closed form (mu2 - mu1) sin(2 theta) = (mu2 - mu1) omega / sqrt(delta^2 + omega^2).
/// Peaks at mu2 - mu1 for delta = 0 with a FWHM in delta of 2 sqrt(3) omega.
inline double transition_moment(const CrossingFrame& f) {
  detail::require_coupled(f);
  return f.dmu() * f.omega / std::hypot(f.delta, f.omega);
}

/// The same moment written through the mixing angle,
/// 2 (mu2 - mu1) omega t / (omega^2 + t^2) with t = delta + sqrt(delta^2 + omega^2).
inline double transition_moment_angle_form(const CrossingFrame& f) {
  detail::require_coupled(f);
  const double t = std::tan(mixing_angle(f)) * f.omega;
  return 2.0 * f.dmu() * f.omega * t / (f.omega * f.omega + t * t);
}

/// <u| diag(mu1, mu2) |l> evaluated from the eigenvectors. This equals
/// transition_moment / 2 and is the element that couples the branches in the
/// driven Hamiltonian.
inline double braket_transition_moment(const CrossingFrame& f) {
  const DressedPair p = dressed_pair(f);
  return p.upper[0] * f.mu1 * p.lower[0] + p.upper[1] * f.mu2 * p.lower[1];
}

/// omega_R = 2 pi B_rf mu_ul in rad/us for a given branch-coupling moment (MHz/G).
inline double rabi_frequency(double moment_mhz_per_g, double b_rf_g) {
  if (b_rf_g < 0.0) throw ValidationError("crossing-model", "rf amplitude must be >= 0");
  return units::two_pi * b_rf_g * std::abs(moment_mhz_per_g);
}

/// Rabi frequency of the branch-to-branch transition driven by a longitudinal
/// rf field of amplitude b_rf_g, in rad/us. This is the frequency at which
/// populations actually oscillate on resonance.
inline double rabi_frequency(const CrossingFrame& f, double b_rf_g) {
  return rabi_frequency(braket_transition_moment(f), b_rf_g);
}

/// Fields where the branch splitting equals f_rf (the rf-induced crossings),
/// in ascending order.
inline std::vector<double> rf_induced_crossings(const CrossingFrame& f, double f_rf_mhz) {
  detail::require_coupled(f);
  if (!(f_rf_mhz > 0.0)) throw ValidationError("crossing-model", "rf frequency must be > 0");
  if (f_rf_mhz < f.omega) return {};
  if (f_rf_mhz == f.omega) return {f.b0};
  const double w = std::sqrt((f_rf_mhz - f.omega) * (f_rf_mhz + f.omega)) / std::abs(f.dmu());
  return {f.b0 - w, f.b0 + w};
}

/// Field offset |B - B0| of the rf-induced crossings (0 when f_rf <= omega).
inline double rf_crossing_offset(const CrossingFrame& f, double f_rf_mhz) {
  if (f_rf_mhz <= f.omega) return 0.0;
  return std::sqrt((f_rf_mhz - f.omega) * (f_rf_mhz + f.omega)) / std::abs(f.dmu());
}

/// |d(splitting)/dB| at the rf-induced crossing: the differential moment of
/// the two dressed branches there (MHz/G).
inline double branch_slope_at_rf_crossing(const CrossingFrame& f, double f_rf_mhz) {
  if (f_rf_mhz <= f.omega) return 0.0;
  return std::abs(f.dmu()) * std::sqrt((f_rf_mhz - f.omega) * (f_rf_mhz + f.omega)) / f_rf_mhz;
}

} // namespace rfcruise
