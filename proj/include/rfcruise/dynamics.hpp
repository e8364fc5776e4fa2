#pragma once

// Time-dependent two-level dynamics across an avoided crossing driven by
// programmed field ramps and a longitudinal rf field.
//
// Lab frame (default). In the bare basis the Hamiltonian is (E/h, MHz)
//
//   H(t) = (B(t) - B0 + b_rf(t) cos(2 pi f tau + phase)) diag(mu1, mu2)
//          + (omega / 2) sigma_x
//
// and i d(psi)/dt = 2 pi H(t) psi with t in us. The identity part of H only
// contributes a global phase and is dropped.
//
// Rotating-wave mode. The state is expanded on the instantaneous branches
// |u(B)>, |l(B)> in a frame rotating at the rf frequency; counter-rotating
// terms and the motional coupling d(theta)/dt are neglected. Valid for slow
// ramps and rf frequencies well above the Rabi frequency.
//
// Integrator: fourth-order Magnus step (two Gauss-Legendre nodes) with the
// exact SU(2) exponential, so each step is unitary to rounding. Step size is
// controlled by step doubling against the requested local tolerance.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "rfcruise/crossing_model.hpp"
#include "rfcruise/error.hpp"
#include "rfcruise/least_squares.hpp"
#include "rfcruise/units.hpp"

namespace rfcruise {

using cplx = std::complex<double>;

struct QuantumState {
  std::array<cplx, 2> amplitudes{cplx{1.0, 0.0}, cplx{0.0, 0.0}}; // bare basis (b1, b2)
  double time_us = 0.0;
  double norm_drift = 0.0;

  double norm() const { return std::norm(amplitudes[0]) + std::norm(amplitudes[1]); }
  double population(int i) const { return std::norm(amplitudes[static_cast<std::size_t>(i)]); }

  static QuantumState bare(int index) {
    QuantumState s;
    s.amplitudes = index == 0 ? std::array<cplx, 2>{1.0, 0.0} : std::array<cplx, 2>{0.0, 1.0};
    return s;
  }
};

enum class Branch { upper, lower };

inline Branch other(Branch b) { return b == Branch::upper ? Branch::lower : Branch::upper; }

/// (cos theta, sin theta) of the upper branch at the frame's field. Handles
/// the uncoupled case, where the branches are the bare states ordered by energy.
inline std::array<double, 2> upper_branch_vector(const CrossingFrame& f) {
  double theta;
  if (f.omega > 0.0) {
    theta = mixing_angle(f);
  } else {
    theta = f.delta >= 0.0 ? units::pi / 2.0 : 0.0;
  }
  return {std::cos(theta), std::sin(theta)};
}

/// Pure state on one static branch at the frame's field.
inline QuantumState branch_state(const CrossingFrame& f, Branch b) {
  const auto u = upper_branch_vector(f);
  QuantumState s;
  if (b == Branch::upper)
    s.amplitudes = {cplx{u[0], 0.0}, cplx{u[1], 0.0}};
  else
    s.amplitudes = {cplx{-u[1], 0.0}, cplx{u[0], 0.0}};
  return s;
}

inline double branch_population(const QuantumState& s, const CrossingFrame& f, Branch b) {
  const auto u = upper_branch_vector(f);
  const cplx pu = u[0] * s.amplitudes[0] + u[1] * s.amplitudes[1];
  const cplx pl = -u[1] * s.amplitudes[0] + u[0] * s.amplitudes[1];
  return b == Branch::upper ? std::norm(pu) : std::norm(pl);
}

// ---------------------------------------------------------------------------
// Schedules

enum class Envelope { rectangular, linear_ramp };

struct RfDrive {
  double amplitude_g = 0.0;
  double frequency_mhz = 0.0;
  double phase_rad = 0.0; // phase at the start of the segment
  Envelope envelope = Envelope::rectangular;
  double rise_time_us = 10.0;
  bool ramp_in = true;  // linear_ramp only: rise at the segment start
  bool ramp_out = true; // linear_ramp only: fall at the segment end

  /// Envelope factor in [0, 1] at time tau (us) into a segment of length d.
  double envelope_at(double tau, double d) const {
    if (envelope == Envelope::rectangular || rise_time_us <= 0.0) return 1.0;
    double e = 1.0;
    if (ramp_in) e = std::min(e, tau / rise_time_us);
    if (ramp_out) e = std::min(e, (d - tau) / rise_time_us);
    return std::clamp(e, 0.0, 1.0);
  }
};

struct RampSegment {
  double duration_ms = 0.0;
  double b_start = 0.0;
  double b_end = 0.0;
  std::optional<RfDrive> rf;

  double field_at(double tau_us) const {
    const double d = units::ms_to_us(duration_ms);
    return b_start + (b_end - b_start) * (tau_us / d);
  }
};

struct PulseSchedule {
  double b_initial = 0.0;
  std::vector<RampSegment> segments;

  double total_duration_ms() const {
    double t = 0.0;
    for (const auto& s : segments) t += s.duration_ms;
    return t;
  }

  double b_final() const { return segments.empty() ? b_initial : segments.back().b_end; }

  /// Appends a segment that starts where the schedule currently ends.
  PulseSchedule& ramp_to(double b_end, double duration_ms, std::optional<RfDrive> rf = {}) {
    segments.push_back({duration_ms, b_final(), b_end, rf});
    return *this;
  }

  void validate() const {
    double b = b_initial;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const auto& s = segments[i];
      const std::string where = "schedule segment " + std::to_string(i);
      if (!(s.duration_ms > 0.0)) throw ValidationError("dynamics", where + ": duration must be > 0");
      if (s.b_start != b)
        throw ValidationError("dynamics", where + ": field discontinuity at segment start");
      if (s.rf) {
        if (!(s.rf->amplitude_g >= 0.0))
          throw ValidationError("dynamics", where + ": rf amplitude must be >= 0");
        if (!(s.rf->frequency_mhz >= 0.0))
          throw ValidationError("dynamics", where + ": rf frequency must be >= 0");
        if (s.rf->envelope == Envelope::linear_ramp && !(s.rf->rise_time_us >= 0.0))
          throw ValidationError("dynamics", where + ": rise time must be >= 0");
      }
      b = s.b_end;
    }
  }

  /// The time-mirrored schedule: segments in reverse order, field ramps
  /// reversed and each rf waveform mirrored in time.
  PulseSchedule reversed() const {
    PulseSchedule r;
    r.b_initial = b_final();
    for (auto it = segments.rbegin(); it != segments.rend(); ++it) {
      RampSegment s = *it;
      std::swap(s.b_start, s.b_end);
      if (s.rf) {
        const double d = units::ms_to_us(s.duration_ms);
        s.rf->phase_rad = -(units::two_pi * s.rf->frequency_mhz * d + s.rf->phase_rad);
        std::swap(s.rf->ramp_in, s.rf->ramp_out);
      }
      r.segments.push_back(s);
    }
    return r;
  }

  void append(const PulseSchedule& other) {
    if (other.b_initial != b_final())
      throw ValidationError("dynamics", "appended schedule does not start at the current field");
    segments.insert(segments.end(), other.segments.begin(), other.segments.end());
  }
};

// ---------------------------------------------------------------------------
// Propagation

enum class Frame { lab, rotating_wave };

struct PropagateOptions {
  double tol = 1e-9;              // local error per step
  double sample_interval_us = 0.0; // 0: sample at segment boundaries only
  Frame frame = Frame::lab;
  double min_step_us = 1e-9;
  std::size_t max_steps = 200'000'000;
};

struct TraceSample {
  double time_us = 0.0;
  double b_gauss = 0.0;
  double pop_b1 = 0.0;
  double pop_b2 = 0.0;
  double pop_upper = 0.0;
  double pop_lower = 0.0;
  double norm = 1.0;
};

struct PropagationResult {
  QuantumState final_state;
  std::vector<TraceSample> trace;
  std::size_t steps = 0;
  std::size_t rejected = 0;
};

namespace detail {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

/// psi <- exp(-i m.sigma) psi
inline std::array<cplx, 2> apply_su2(const Vec3& m, const std::array<cplx, 2>& psi) {
  const double a = std::sqrt(m.x * m.x + m.y * m.y + m.z * m.z);
  if (a == 0.0) return psi;
  const double c = std::cos(a);
  const double s = std::sin(a) / a;
  const cplx mi{0.0, -1.0};
  // (m.sigma) psi
  const cplx t0 = m.z * psi[0] + cplx{m.x, -m.y} * psi[1];
  const cplx t1 = cplx{m.x, m.y} * psi[0] - m.z * psi[1];
  return {c * psi[0] + mi * s * t0, c * psi[1] + mi * s * t1};
}

/// Traceless Hermitian generator h.sigma (MHz) as a function of schedule time.
class Generator {
public:
  Generator(const CrossingFrame& frame, const PulseSchedule& sched, Frame mode)
      : frame_(frame), sched_(sched), mode_(mode) {
    double t = 0.0;
    for (const auto& s : sched_.segments) {
      starts_.push_back(t);
      t += units::ms_to_us(s.duration_ms);
    }
    total_ = t;
    if (mode_ == Frame::rotating_wave) {
      if (!(frame_.omega > 0.0))
        throw ValidationError("dynamics", "rotating-wave mode requires a coupled crossing");
      std::optional<double> f;
      for (const auto& s : sched_.segments) {
        if (!s.rf) continue;
        if (f && *f != s.rf->frequency_mhz)
          throw ValidationError("dynamics",
                                "rotating-wave mode requires a single rf frequency per schedule");
        f = s.rf->frequency_mhz;
      }
      f_ref_ = f.value_or(0.0);
    }
  }

  double total_us() const { return total_; }
  double segment_start(std::size_t k) const { return starts_[k]; }
  double segment_end(std::size_t k) const {
    return starts_[k] + units::ms_to_us(sched_.segments[k].duration_ms);
  }
  double f_ref() const { return f_ref_; }

  double field(std::size_t k, double t) const {
    return sched_.segments[k].field_at(t - starts_[k]);
  }

  Vec3 operator()(std::size_t k, double t) const {
    const auto& seg = sched_.segments[k];
    const double tau = t - starts_[k];
    const double b = seg.field_at(tau);
    double amp = 0.0, ph = 0.0;
    if (seg.rf) {
      const double d = units::ms_to_us(seg.duration_ms);
      amp = seg.rf->amplitude_g * seg.rf->envelope_at(tau, d);
      ph = seg.rf->phase_rad;
    }
    if (mode_ == Frame::lab) {
      double s = b - frame_.b0;
      if (amp != 0.0) s += amp * std::cos(units::two_pi * seg.rf->frequency_mhz * tau + ph);
      return {0.5 * frame_.omega, 0.0, 0.5 * s * (frame_.mu1 - frame_.mu2)};
    }
    const CrossingFrame fb = frame_.at(b);
    const double r = std::hypot(fb.delta, fb.omega);
    Vec3 h{0.0, 0.0, 0.5 * (r - f_ref_)};
    if (amp != 0.0) {
      const double m = braket_transition_moment(fb);
      const double phi_abs = ph - units::two_pi * seg.rf->frequency_mhz * starts_[k];
      h.x = 0.5 * amp * m * std::cos(phi_abs);
      h.y = 0.5 * amp * m * std::sin(phi_abs);
    }
    return h;
  }

private:
  CrossingFrame frame_;
  const PulseSchedule& sched_;
  Frame mode_;
  std::vector<double> starts_;
  double total_ = 0.0;
  double f_ref_ = 0.0;
};

/// One fourth-order Magnus step over [t, t + h] inside segment k.
inline std::array<cplx, 2> magnus4(const Generator& g, std::size_t k, double t, double h,
                                   const std::array<cplx, 2>& psi) {
  constexpr double c1 = 0.5 - 0.28867513459481288225; // 1/2 - sqrt(3)/6
  constexpr double c2 = 0.5 + 0.28867513459481288225;
  constexpr double k2 = 1.15470053837925152902 * units::pi * units::pi; // (2 sqrt(3)/3) pi^2
  const Vec3 h1 = g(k, t + c1 * h);
  const Vec3 h2 = g(k, t + c2 * h);
  const Vec3 cr = cross(h2, h1);
  const double a = units::pi * h;
  const double b = k2 * h * h;
  const Vec3 m{a * (h1.x + h2.x) + b * cr.x, a * (h1.y + h2.y) + b * cr.y,
               a * (h1.z + h2.z) + b * cr.z};
  return apply_su2(m, psi);
}

/// Rotating-frame branch amplitudes from bare amplitudes at schedule time t.
inline std::array<cplx, 2> to_rotating(const CrossingFrame& fb, double f_ref, double t,
                                       const std::array<cplx, 2>& bare) {
  const auto u = upper_branch_vector(fb);
  const cplx au = u[0] * bare[0] + u[1] * bare[1];
  const cplx al = -u[1] * bare[0] + u[0] * bare[1];
  const double ph = units::pi * f_ref * t;
  return {au * std::polar(1.0, ph), al * std::polar(1.0, -ph)};
}

inline std::array<cplx, 2> from_rotating(const CrossingFrame& fb, double f_ref, double t,
                                         const std::array<cplx, 2>& rot) {
  const auto u = upper_branch_vector(fb);
  const double ph = units::pi * f_ref * t;
  const cplx au = rot[0] * std::polar(1.0, -ph);
  const cplx al = rot[1] * std::polar(1.0, ph);
  return {u[0] * au - u[1] * al, u[1] * au + u[0] * al};
}

} // namespace detail

/// Integrates the state through the schedule. The returned trace always holds
/// the initial and final samples; see PropagateOptions for intermediate ones.
inline PropagationResult propagate(const QuantumState& initial, const CrossingFrame& frame,
                                   const PulseSchedule& schedule,
                                   const PropagateOptions& opt = {}) {
  if (!(opt.tol >= 1e-12 && opt.tol <= 1e-4))
    throw ValidationError("dynamics", "tolerance must lie in [1e-12, 1e-4]");
  if (frame.mu1 == frame.mu2) throw ValidationError("dynamics", "mu1 == mu2");
  schedule.validate();

  const detail::Generator gen(frame, schedule, opt.frame);
  const bool rwa = opt.frame == Frame::rotating_wave;
  const double f_ref = gen.f_ref();

  PropagationResult res;
  const double norm0 = initial.norm();
  std::array<cplx, 2> psi = initial.amplitudes;
  if (rwa) psi = detail::to_rotating(frame.at(schedule.b_initial), f_ref, 0.0, psi);

  auto sample = [&](double t, double b, const std::array<cplx, 2>& state) {
    const CrossingFrame fb = frame.at(b);
    std::array<cplx, 2> bare = rwa ? detail::from_rotating(fb, f_ref, t, state) : state;
    QuantumState q;
    q.amplitudes = bare;
    TraceSample s;
    s.time_us = initial.time_us + t;
    s.b_gauss = b;
    s.pop_b1 = std::norm(bare[0]);
    s.pop_b2 = std::norm(bare[1]);
    if (rwa) {
      s.pop_upper = std::norm(state[0]);
      s.pop_lower = std::norm(state[1]);
    } else {
      s.pop_upper = branch_population(q, fb, Branch::upper);
      s.pop_lower = branch_population(q, fb, Branch::lower);
    }
    s.norm = s.pop_b1 + s.pop_b2;
    if (std::abs(s.norm - norm0) > 100.0 * opt.tol)
      throw PropagationError("norm drift " + std::to_string(std::abs(s.norm - norm0)) +
                                 " exceeds 100*tol",
                             s.time_us);
    res.trace.push_back(s);
  };

  sample(0.0, schedule.b_initial, psi);

  double h = 0.0;
  for (std::size_t k = 0; k < schedule.segments.size(); ++k) {
    const double t0 = gen.segment_start(k);
    const double t1 = gen.segment_end(k);

    // Breakpoints: envelope corners and samples.
    std::vector<double> stops;
    if (const auto& rf = schedule.segments[k].rf; rf && rf->envelope == Envelope::linear_ramp) {
      const double d = t1 - t0;
      if (rf->ramp_in && rf->rise_time_us > 0 && rf->rise_time_us < d) stops.push_back(t0 + rf->rise_time_us);
      if (rf->ramp_out && rf->rise_time_us > 0 && rf->rise_time_us < d) stops.push_back(t1 - rf->rise_time_us);
    }
    if (opt.sample_interval_us > 0.0) {
      const double first = std::ceil(t0 / opt.sample_interval_us) * opt.sample_interval_us;
      for (double ts = first; ts < t1; ts += opt.sample_interval_us)
        if (ts > t0) stops.push_back(ts);
    }
    stops.push_back(t1);
    std::sort(stops.begin(), stops.end());

    // Initial step guess from the largest rate in the segment.
    {
      const auto& seg = schedule.segments[k];
      const double bmax = std::max(std::abs(seg.b_start - frame.b0), std::abs(seg.b_end - frame.b0)) +
                          (seg.rf ? seg.rf->amplitude_g : 0.0);
      double rate = frame.omega + bmax * std::abs(frame.dmu());
      if (seg.rf && !rwa) rate += seg.rf->frequency_mhz;
      if (rwa) rate = frame.omega + std::abs(f_ref) + bmax * std::abs(frame.dmu());
      const double guess = 0.05 / std::max(rate, 1e-6);
      h = h > 0.0 ? std::min(h, guess * 20.0) : guess;
    }

    double t = t0;
    for (double stop : stops) {
      while (t < stop) {
        const double remaining = stop - t;
        const bool last = h >= remaining;
        const double hs = last ? remaining : h;
        const auto full = detail::magnus4(gen, k, t, hs, psi);
        const auto mid = detail::magnus4(gen, k, t, 0.5 * hs, psi);
        const auto half = detail::magnus4(gen, k, t + 0.5 * hs, 0.5 * hs, mid);
        const double err = std::sqrt(std::norm(full[0] - half[0]) + std::norm(full[1] - half[1]));
        if (err <= opt.tol) {
          psi = half;
          t = last ? stop : t + hs;
          ++res.steps;
          if (res.steps > opt.max_steps)
            throw PropagationError("step budget exhausted", initial.time_us + t);
        } else {
          ++res.rejected;
        }
        const double fac = err > 0.0 ? 0.9 * std::pow(opt.tol / err, 0.2) : 5.0;
        const double hn = hs * std::clamp(fac, 0.2, 5.0);
        // Do not let a short final step collapse the step size.
        h = (last && err <= opt.tol) ? std::max(h, hn) : hn;
        if (h < opt.min_step_us)
          throw PropagationError("step size underflow (stiff Hamiltonian)", initial.time_us + t);
      }
      const bool boundary = stop == t1;
      if (opt.sample_interval_us > 0.0 || boundary) sample(t, gen.field(k, t), psi);
    }
  }

  const double t_end = gen.total_us();
  std::array<cplx, 2> bare =
      rwa ? detail::from_rotating(frame.at(schedule.b_final()), f_ref, t_end, psi) : psi;
  res.final_state.amplitudes = bare;
  res.final_state.time_us = initial.time_us + t_end;
  res.final_state.norm_drift = initial.norm_drift + std::abs(res.final_state.norm() - norm0);
  return res;
}

// ---------------------------------------------------------------------------
// Landau-Zener

/// Probability of following the rf-dressed branch through a single crossing,
///
///   P = 1 - exp(-pi hbar omega_R^2 / (2 |dB/dt| |mu2 - mu1|)).
///
/// With omega_R in rad/us, |dB/dt| in G/us and |mu2 - mu1| in MHz/G the energy
/// sweep rate over hbar is 2 pi |dmu| |dB/dt| rad/us^2, so the exponent is
/// omega_R^2 / (4 |dmu| |dB/dt|), which is dimensionless.
inline double landau_zener_exponent(double omega_r_rad_per_us, double ramp_g_per_ms,
                                    double dmu_mhz_per_g) {
  if (!(ramp_g_per_ms > 0.0)) throw ValidationError("dynamics", "ramp speed must be > 0");
  if (dmu_mhz_per_g == 0.0) throw ValidationError("dynamics", "dmu must be nonzero");
  const double bdot = units::ramp_to_g_per_us(ramp_g_per_ms);
  return omega_r_rad_per_us * omega_r_rad_per_us / (4.0 * std::abs(dmu_mhz_per_g) * bdot);
}

inline double landau_zener_probability(double omega_r_rad_per_us, double ramp_g_per_ms,
                                       double dmu_mhz_per_g) {
  return -std::expm1(-landau_zener_exponent(omega_r_rad_per_us, ramp_g_per_ms, dmu_mhz_per_g));
}

/// Probability that a linear sweep through the bare crossing keeps the bare
/// character (a diabatic jump): the static coupling plays the role of omega_R.
inline double diabatic_jump_probability(const CrossingFrame& f, double ramp_g_per_ms) {
  return std::exp(-landau_zener_exponent(units::mhz_to_angular(f.omega), ramp_g_per_ms, f.dmu()));
}

/// Prediction for an ATAC sweep through the rf-induced crossing at f_rf: the
/// Rabi frequency and the branch slope are both evaluated at that crossing.
inline double atac_predicted_success(const CrossingFrame& f, double b_rf_g, double f_rf_mhz,
                                     double ramp_g_per_ms) {
  if (b_rf_g == 0.0) return 0.0;
  const double w = rf_crossing_offset(f, f_rf_mhz);
  if (w == 0.0) return 0.0;
  const double omega_r = rabi_frequency(f.at(f.b0 - w), b_rf_g);
  return landau_zener_probability(omega_r, ramp_g_per_ms, branch_slope_at_rf_crossing(f, f_rf_mhz));
}

// ---------------------------------------------------------------------------
// ATAC

struct AtacOptions {
  Envelope envelope = Envelope::linear_ramp;
  double rise_time_us = 10.0;
  Branch start_branch = Branch::upper;
  PropagateOptions propagate{};
  std::optional<double> approach_from_g; // point i: travel to b_from with rf off first
  double approach_ramp_g_per_ms = 1.3;
};

struct TransferResult {
  double efficiency = 0.0;
  QuantumState final_state;
  std::vector<TraceSample> population_trace;
  PulseSchedule schedule;
  double duration_ms = 0.0;
};

/// Lifetime loss applied to a reported efficiency.
inline double with_lifetime(double efficiency, double duration_ms, std::optional<double> tau_ms) {
  if (!tau_ms) return efficiency;
  return efficiency * std::exp(-duration_ms / *tau_ms);
}

/// Builds the i -> ii -> iii schedule: optional rf-off approach to b_from, then
/// a linear ramp b_from -> b_to with the rf on.
inline PulseSchedule atac_schedule(const CrossingFrame& frame, double b_rf, double f_rf,
                                   double b_from, double b_to, double ramp_g_per_ms,
                                   const AtacOptions& opt = {}) {
  if (!(ramp_g_per_ms > 0.0)) throw ValidationError("dynamics", "ramp speed must be > 0");
  if (b_from == b_to) throw GeometryError("dynamics", "ATAC ramp has zero length");
  const auto rf_fields = rf_induced_crossings(frame, f_rf);
  if (rf_fields.size() < 2)
    throw GeometryError("dynamics", "rf at " + std::to_string(f_rf) +
                                        " MHz is not blue detuned: no rf-induced crossings");
  const double lo = std::min(b_from, b_to), hi = std::max(b_from, b_to);
  int inside = 0;
  for (double b : rf_fields) inside += (b > lo && b < hi) ? 1 : 0;
  if (inside == 0)
    throw GeometryError("dynamics", "no rf-induced crossing lies between the ramp endpoints");
  if (inside == 2)
    throw GeometryError("dynamics", "ramp passes both rf-induced crossings; transfer would undo itself");

  PulseSchedule s;
  if (opt.approach_from_g && *opt.approach_from_g != b_from) {
    s.b_initial = *opt.approach_from_g;
    s.ramp_to(b_from, std::abs(b_from - *opt.approach_from_g) / opt.approach_ramp_g_per_ms);
  } else {
    s.b_initial = b_from;
  }
  RfDrive rf;
  rf.amplitude_g = b_rf;
  rf.frequency_mhz = f_rf;
  rf.envelope = opt.envelope;
  rf.rise_time_us = opt.rise_time_us;
  s.ramp_to(b_to, std::abs(b_to - b_from) / ramp_g_per_ms, rf);
  return s;
}

inline TransferResult run_transfer(const CrossingFrame& frame, const PulseSchedule& sched,
                                   Branch start, const PropagateOptions& popt) {
  const QuantumState psi0 = branch_state(frame.at(sched.b_initial), start);
  auto pr = propagate(psi0, frame, sched, popt);
  TransferResult r;
  r.efficiency = branch_population(pr.final_state, frame.at(sched.b_final()), other(start));
  r.final_state = pr.final_state;
  r.population_trace = std::move(pr.trace);
  r.schedule = sched;
  r.duration_ms = sched.total_duration_ms();
  return r;
}

/// Adiabatic transfer across an avoided crossing. Efficiency is the population
/// of the other static branch at the end of the schedule.
inline TransferResult atac_transfer(const CrossingFrame& frame, double b_rf, double f_rf,
                                    double b_from, double b_to, double ramp_g_per_ms,
                                    const AtacOptions& opt = {}) {
  const auto sched = atac_schedule(frame, b_rf, f_rf, b_from, b_to, ramp_g_per_ms, opt);
  return run_transfer(frame, sched, opt.start_branch, opt.propagate);
}

/// Forward ATAC followed by its time-mirrored schedule. Efficiency is the
/// population returned to the starting branch.
inline TransferResult atac_round_trip(const CrossingFrame& frame, double b_rf, double f_rf,
                                      double b_from, double b_to, double ramp_g_per_ms,
                                      const AtacOptions& opt = {}) {
  auto sched = atac_schedule(frame, b_rf, f_rf, b_from, b_to, ramp_g_per_ms, opt);
  sched.append(sched.reversed());
  auto r = run_transfer(frame, sched, opt.start_branch, opt.propagate);
  r.efficiency = 1.0 - r.efficiency;
  return r;
}

// ---------------------------------------------------------------------------
// Landau-Zener fit of efficiency vs rf amplitude

struct LzFitResult {
  double moment = 0.0;        // MHz/G, omega_R = 2 pi B_rf moment
  double moment_stderr = 0.0; // MHz/G
  double residual_norm = 0.0;
  int iterations = 0;

  double efficiency(double b_rf, double ramp_g_per_ms, double dmu) const {
    return landau_zener_probability(rabi_frequency(moment, b_rf), ramp_g_per_ms, dmu);
  }
};

/// Least-squares fit of P(B_rf) = 1 - exp(-(2 pi B_rf mu)^2 / (4 |dmu| |dB/dt|)).
inline LzFitResult extract_lz_fit(const std::vector<double>& b_rf,
                                  const std::vector<double>& efficiency, double ramp_g_per_ms,
                                  double dmu) {
  if (b_rf.size() != efficiency.size())
    throw FitError("dynamics", "lz fit: amplitude and efficiency series differ in length");
  if (b_rf.size() < 5) throw FitError("dynamics", "lz fit: need at least 5 points");
  bool any_mid = false;
  for (double e : efficiency) any_mid = any_mid || (e > 1e-6 && e < 1.0 - 1e-6);
  if (!any_mid)
    throw FitError("dynamics", "lz fit: degenerate data (all efficiencies zero or saturated)");

  const double bdot = units::ramp_to_g_per_us(ramp_g_per_ms);
  const double scale = units::pi * units::pi / (std::abs(dmu) * bdot);
  // initial guess: median of the per-point inversions in the informative range
  std::vector<double> guesses;
  for (std::size_t i = 0; i < b_rf.size(); ++i) {
    const double e = efficiency[i];
    if (b_rf[i] > 0.0 && e > 0.02 && e < 0.98)
      guesses.push_back(std::sqrt(-std::log1p(-e) / scale) / b_rf[i]);
  }
  if (guesses.empty())
    for (std::size_t i = 0; i < b_rf.size(); ++i)
      if (b_rf[i] > 0.0 && efficiency[i] > 0.0 && efficiency[i] < 1.0)
        guesses.push_back(std::sqrt(-std::log1p(-efficiency[i]) / scale) / b_rf[i]);
  std::nth_element(guesses.begin(), guesses.begin() + guesses.size() / 2, guesses.end());
  Eigen::VectorXd p0(1);
  p0[0] = guesses[guesses.size() / 2];

  const auto n = static_cast<Eigen::Index>(b_rf.size());
  auto resid = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = scale * p[0] * p[0] * b_rf[static_cast<std::size_t>(i)] * b_rf[static_cast<std::size_t>(i)];
      r[i] = -std::expm1(-x) - efficiency[static_cast<std::size_t>(i)];
    }
    return r;
  };
  const auto fit = levenberg_marquardt(resid, p0);
  if (!fit.converged) throw FitError("dynamics", "lz fit did not converge");
  LzFitResult out;
  out.moment = std::abs(fit.params[0]);
  out.moment_stderr = std::sqrt(std::max(0.0, fit.scaled_covariance()(0, 0)));
  out.residual_norm = std::sqrt(fit.rss);
  out.iterations = fit.iterations;
  return out;
}

} // namespace rfcruise
