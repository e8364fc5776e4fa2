#pragma once

// Unit system used throughout rfcruise.
//
//   magnetic field     gauss (G)
//   energy             E/h in MHz
//   magnetic moment    MHz/G (slope dE/dB in E/h units)
//   schedule time      ms
//   dynamics time      us
//   angular frequency  rad/us
//
// With energies in MHz and times in us the accumulated phase of a level is
// simply 2*pi*E*t, so hbar never appears explicitly.

#include <numbers>

namespace rfcruise::units {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Bohr magneton over Planck's constant.
inline constexpr double bohr_magneton_mhz_per_g = 1.399624;

inline constexpr double us_per_ms = 1000.0;

constexpr double ms_to_us(double ms) { return ms * us_per_ms; }
constexpr double us_to_ms(double us) { return us / us_per_ms; }

/// G/ms -> G/us
constexpr double ramp_to_g_per_us(double g_per_ms) { return g_per_ms / us_per_ms; }

/// Cyclic frequency in MHz to angular frequency in rad/us.
constexpr double mhz_to_angular(double mhz) { return two_pi * mhz; }
constexpr double angular_to_mhz(double rad_per_us) { return rad_per_us / two_pi; }

inline constexpr double mhz_per_khz = 1e-3;
inline constexpr double g_per_mg = 1e-3;

} // namespace rfcruise::units
