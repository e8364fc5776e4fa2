#pragma once

// Splitting measurements at an avoided crossing: resonant-transfer scans
// (single rf pulse, peak search) and Ramsey interferometry (two pi/2 pulses
// around a free hold), plus hyperbola fitting and the field-noise averaging
// model that shifts the apparent minimum of the splitting curve.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "rfcruise/crossing_model.hpp"
#include "rfcruise/dynamics.hpp"
#include "rfcruise/error.hpp"
#include "rfcruise/least_squares.hpp"
#include "rfcruise/parallel.hpp"
#include "rfcruise/units.hpp"

namespace rfcruise {

// ---------------------------------------------------------------------------
// Method 1: resonant transfer scan

struct ResonanceScan {
  double b_gauss = 0.0;
  std::vector<double> frequencies_mhz;
  double pulse_length_ms = 0.0;
  double b_rf_g = 0.0;
  std::vector<double> transfer;
};

struct ScanOptions {
  PropagateOptions propagate{};
  unsigned threads = 0;
};

/// Transferred population (upper -> lower branch) after a rectangular rf pulse
/// at each grid frequency, with the field held at b_gauss.
inline ResonanceScan simulate_resonance_scan(const CrossingFrame& frame, double b_gauss,
                                             double pulse_length_ms, double b_rf_g,
                                             const std::vector<double>& freq_grid_mhz,
                                             const ScanOptions& opt = {}) {
  if (freq_grid_mhz.size() < 2) throw ValidationError("spectroscopy", "scan grid needs >= 2 points");
  for (std::size_t i = 1; i < freq_grid_mhz.size(); ++i)
    if (!(freq_grid_mhz[i] > freq_grid_mhz[i - 1]))
      throw ValidationError("spectroscopy", "scan frequencies must be strictly increasing");
  const CrossingFrame fb = frame.at(b_gauss);
  const double split = splitting(fb);
  if (!(freq_grid_mhz.front() < split && freq_grid_mhz.back() > split))
    throw ValidationError("spectroscopy", "scan grid does not bracket the local splitting");
  if (!(pulse_length_ms > 0.0)) throw ValidationError("spectroscopy", "pulse length must be > 0");

  ResonanceScan scan{b_gauss, freq_grid_mhz, pulse_length_ms, b_rf_g,
                     std::vector<double>(freq_grid_mhz.size(), 0.0)};
  const QuantumState psi0 = branch_state(fb, Branch::upper);
  parallel_for(
      freq_grid_mhz.size(),
      [&](std::size_t i) {
        RfDrive rf;
        rf.amplitude_g = b_rf_g;
        rf.frequency_mhz = freq_grid_mhz[i];
        PulseSchedule s;
        s.b_initial = b_gauss;
        s.ramp_to(b_gauss, pulse_length_ms, rf);
        const auto r = propagate(psi0, frame, s, opt.propagate);
        scan.transfer[i] = branch_population(r.final_state, fb, Branch::lower);
      },
      opt.threads);
  return scan;
}

/// Resonant Rabi lineshape: transfer after a pulse of length t_us at detuning
/// detuning_mhz for a Rabi frequency omega_r (rad/us).
inline double rabi_lineshape(double detuning_mhz, double omega_r, double t_us) {
  const double d = units::mhz_to_angular(detuning_mhz);
  const double w2 = omega_r * omega_r + d * d;
  if (w2 == 0.0) return 0.0;
  const double s = std::sin(0.5 * std::sqrt(w2) * t_us);
  return omega_r * omega_r / w2 * s * s;
}

struct PeakEstimate {
  double frequency_mhz = 0.0;
  double uncertainty_mhz = 0.0;
};

enum class PeakMethod { parabolic, rabi_lineshape };

namespace detail {

inline double parabola_vertex(double x0, double x1, double x2, double y0, double y1, double y2) {
  const double d01 = x0 - x1, d02 = x0 - x2, d12 = x1 - x2;
  const double a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / (d01 * d02 * d12);
  const double b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) /
                   (d01 * d02 * d12);
  return -b / (2.0 * a);
}

} // namespace detail

/// Frequency of maximal transfer. Parabolic interpolation through the top
/// three points; the uncertainty propagates the scatter of the neighbouring
/// points about that parabola through the vertex formula.
inline PeakEstimate peak_frequency(const ResonanceScan& scan, PeakMethod method = PeakMethod::parabolic) {
  const auto& x = scan.frequencies_mhz;
  const auto& y = scan.transfer;
  if (x.size() != y.size()) throw FitError("spectroscopy", "scan arrays differ in length");
  if (x.size() < 5) throw FitError("spectroscopy", "peak search needs at least 5 points");
  const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
  if (*mx - *mn <= 1e-12) throw FitError("spectroscopy", "flat scan: no maximum");
  const auto i = static_cast<std::size_t>(mx - y.begin());
  if (i == 0 || i + 1 == y.size()) throw FitError("spectroscopy", "maximum lies at the grid edge");

  PeakEstimate pe;
  pe.frequency_mhz = detail::parabola_vertex(x[i - 1], x[i], x[i + 1], y[i - 1], y[i], y[i + 1]);

  // Scatter of the next-outer points about the three-point parabola.
  const double d01 = x[i - 1] - x[i], d02 = x[i - 1] - x[i + 1], d12 = x[i] - x[i + 1];
  auto lagrange = [&](double t) {
    return y[i - 1] * (t - x[i]) * (t - x[i + 1]) / (d01 * d02) -
           y[i] * (t - x[i - 1]) * (t - x[i + 1]) / (d01 * d12) +
           y[i + 1] * (t - x[i - 1]) * (t - x[i]) / (d02 * d12);
  };
  double ss = 0.0;
  int m = 0;
  for (std::size_t j : {i >= 2 ? i - 2 : y.size(), i + 2}) {
    if (j >= y.size()) continue;
    const double r = y[j] - lagrange(x[j]);
    ss += r * r;
    ++m;
  }
  const double s = m ? std::sqrt(ss / m) : 0.0;
  const double h = 1e-6 * std::max({std::abs(y[i]), 1e-12});
  double g2 = 0.0;
  for (int k = -1; k <= 1; ++k) {
    double yy[3] = {y[i - 1], y[i], y[i + 1]};
    yy[k + 1] += h;
    const double v = detail::parabola_vertex(x[i - 1], x[i], x[i + 1], yy[0], yy[1], yy[2]);
    const double gk = (v - pe.frequency_mhz) / h;
    g2 += gk * gk;
  }
  pe.uncertainty_mhz = s * std::sqrt(g2);

  if (method == PeakMethod::rabi_lineshape) {
    const double t_us = units::ms_to_us(scan.pulse_length_ms);
    Eigen::VectorXd p0(3);
    p0 << pe.frequency_mhz, units::pi / t_us, *mx;
    const auto n = static_cast<Eigen::Index>(x.size());
    auto resid = [&](const Eigen::VectorXd& p) {
      Eigen::VectorXd r(n);
      for (Eigen::Index k = 0; k < n; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        r[k] = p[2] * rabi_lineshape(x[kk] - p[0], p[1], t_us) - y[kk];
      }
      return r;
    };
    const auto fit = levenberg_marquardt(resid, p0);
    if (!fit.converged) throw FitError("spectroscopy", "Rabi lineshape fit did not converge");
    pe.frequency_mhz = fit.params[0];
    pe.uncertainty_mhz = std::sqrt(std::max(0.0, fit.scaled_covariance()(0, 0)));
  }
  return pe;
}

// ---------------------------------------------------------------------------
// Field noise

enum class NoiseDistribution { gaussian, uniform_gaussian };

struct NoiseModel {
  double gradient_g_per_mm = 0.0;
  double cloud_diameter_mm = 0.0;
  double fluctuation_sigma_g = 0.0;
  NoiseDistribution distribution = NoiseDistribution::uniform_gaussian;

  void validate() const {
    if (gradient_g_per_mm < 0.0 || cloud_diameter_mm < 0.0 || fluctuation_sigma_g < 0.0)
      throw ValidationError("spectroscopy", "noise parameters must be >= 0");
  }

  double spatial_width_g() const { return gradient_g_per_mm * cloud_diameter_mm; }

  /// Spatial (uniform across the cloud) and temporal terms in quadrature.
  double sigma_eff() const {
    const double w = spatial_width_g();
    return std::sqrt(w * w / 12.0 + fluctuation_sigma_g * fluctuation_sigma_g);
  }

  bool is_zero() const { return sigma_eff() == 0.0; }
};

struct Hyperbola {
  double delta_min = 0.0; // MHz
  double b0 = 0.0;        // G
  double k = 0.0;         // MHz/G

  double operator()(double b) const { return std::hypot(delta_min, k * (b - b0)); }
};

namespace detail {

struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights; // sum to 1
};

// Golub-Welsch for the probabilists' Hermite weight exp(-x^2/2).
inline Quadrature gauss_hermite(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(i));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Quadrature q;
  for (int i = 0; i < n; ++i) {
    q.nodes.push_back(es.eigenvalues()[i]);
    const double v = es.eigenvectors()(0, i);
    q.weights.push_back(v * v);
  }
  return q;
}

inline Quadrature gauss_legendre(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double di = i;
    J(i, i - 1) = J(i - 1, i) = di / std::sqrt(4.0 * di * di - 1.0);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Quadrature q;
  for (int i = 0; i < n; ++i) {
    q.nodes.push_back(es.eigenvalues()[i]);
    const double v = es.eigenvectors()(0, i);
    q.weights.push_back(v * v);
  }
  return q;
}

/// Discrete field-offset distribution equivalent to the noise model.
inline Quadrature noise_quadrature(const NoiseModel& noise, int order = 24) {
  if (noise.is_zero()) return {{0.0}, {1.0}};
  if (noise.distribution == NoiseDistribution::gaussian) {
    auto q = gauss_hermite(order);
    for (auto& x : q.nodes) x *= noise.sigma_eff();
    return q;
  }
  const double half = 0.5 * noise.spatial_width_g();
  const double sig = noise.fluctuation_sigma_g;
  const Quadrature gl = half > 0 ? gauss_legendre(order) : Quadrature{{0.0}, {1.0}};
  const Quadrature gh = sig > 0 ? gauss_hermite(order) : Quadrature{{0.0}, {1.0}};
  Quadrature q;
  for (std::size_t i = 0; i < gl.nodes.size(); ++i)
    for (std::size_t j = 0; j < gh.nodes.size(); ++j) {
      q.nodes.push_back(half * gl.nodes[i] + sig * gh.nodes[j]);
      q.weights.push_back(gl.weights[i] * gh.weights[j]);
    }
  return q;
}

inline double sample_offset(const NoiseModel& noise, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  if (noise.distribution == NoiseDistribution::gaussian) return noise.sigma_eff() * gauss(rng);
  return noise.spatial_width_g() * unif(rng) + noise.fluctuation_sigma_g * gauss(rng);
}

} // namespace detail

/// Monte-Carlo expectation of the hyperbola over field offsets drawn from the
/// noise model. Offsets are drawn in antithetic pairs (+d, -d).
inline double noise_averaged_splitting(double b_gauss, const Hyperbola& h, const NoiseModel& noise,
                                       std::size_t n_samples, std::uint64_t seed) {
  noise.validate();
  if (noise.is_zero()) return h(b_gauss);
  if (n_samples < 2) throw ValidationError("spectroscopy", "need at least 2 Monte-Carlo samples");
  std::mt19937_64 rng(seed);
  const std::size_t pairs = n_samples / 2;
  double acc = 0.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const double d = detail::sample_offset(noise, rng);
    acc += 0.5 * (h(b_gauss + d) + h(b_gauss - d));
  }
  return acc / static_cast<double>(pairs);
}

/// The same expectation by tensor-product Gauss quadrature (deterministic and
/// smooth in the hyperbola parameters; used inside fits).
inline double noise_averaged_splitting_quadrature(double b_gauss, const Hyperbola& h,
                                                  const NoiseModel& noise) {
  noise.validate();
  static thread_local NoiseModel cached_noise{-1.0, -1.0, -1.0};
  static thread_local detail::Quadrature q;
  if (cached_noise.gradient_g_per_mm != noise.gradient_g_per_mm ||
      cached_noise.cloud_diameter_mm != noise.cloud_diameter_mm ||
      cached_noise.fluctuation_sigma_g != noise.fluctuation_sigma_g ||
      cached_noise.distribution != noise.distribution) {
    q = detail::noise_quadrature(noise);
    cached_noise = noise;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) acc += q.weights[i] * h(b_gauss + q.nodes[i]);
  return acc;
}

/// Small-noise upshift of the minimum, k^2 sigma_eff^2 / (2 delta_min).
inline double analytic_upshift(const Hyperbola& h, const NoiseModel& noise) {
  const double s = noise.sigma_eff();
  return h.k * h.k * s * s / (2.0 * h.delta_min);
}

/// Slope k for which the small-noise upshift equals `upshift_mhz`.
inline double slope_for_upshift(double delta_min, double upshift_mhz, const NoiseModel& noise) {
  const double s = noise.sigma_eff();
  if (!(s > 0.0)) throw ValidationError("spectroscopy", "noise model has zero width");
  return std::sqrt(2.0 * delta_min * upshift_mhz) / s;
}

// ---------------------------------------------------------------------------
// Hyperbola fit

struct FitResult {
  Hyperbola params;
  Hyperbola sigma; // 1-sigma uncertainties
  std::array<std::array<double, 3>, 3> covariance{};
  double residual_norm = 0.0;
  int iterations = 0;
  std::size_t n_points = 0;
  bool ill_conditioned = false;
  double noise_upshift = 0.0; // model minimum minus ideal minimum (Ramsey estimate only)
};

struct SplittingPoint {
  double b_gauss = 0.0;
  double splitting_mhz = 0.0;
};

namespace detail {

inline FitResult fit_splitting_model(const std::vector<SplittingPoint>& pts,
                                     const std::vector<double>& weights, const Hyperbola& init,
                                     const NoiseModel* noise) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  std::vector<double> sw(pts.size(), 1.0);
  for (std::size_t i = 0; i < weights.size() && i < pts.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw FitError("spectroscopy", "weights must be >= 0");
    sw[i] = std::sqrt(weights[i]);
  }
  auto model = [&](const Eigen::VectorXd& p, double b) {
    const Hyperbola h{p[0], p[1], p[2]};
    return noise ? noise_averaged_splitting_quadrature(b, h, *noise) : h(b);
  };
  auto resid = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& q = pts[static_cast<std::size_t>(i)];
      r[i] = sw[static_cast<std::size_t>(i)] * (model(p, q.b_gauss) - q.splitting_mhz);
    }
    return r;
  };
  Eigen::VectorXd p0(3);
  p0 << init.delta_min, init.b0, init.k;
  const auto fit = levenberg_marquardt(resid, p0);
  if (!fit.converged)
    throw FitError("spectroscopy", "hyperbola fit did not converge in " +
                                       std::to_string(fit.iterations) + " iterations");
  FitResult out;
  out.params = {std::abs(fit.params[0]), fit.params[1], std::abs(fit.params[2])};
  const Eigen::MatrixXd cov = weights.empty() ? fit.scaled_covariance() : fit.scaled_covariance();
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) out.covariance[a][b] = cov(a, b);
  out.sigma = {std::sqrt(std::max(0.0, cov(0, 0))), std::sqrt(std::max(0.0, cov(1, 1))),
               std::sqrt(std::max(0.0, cov(2, 2)))};
  out.residual_norm = std::sqrt(fit.rss);
  out.iterations = fit.iterations;
  out.n_points = pts.size();
  bool below = false, above = false;
  for (const auto& q : pts) {
    below = below || q.b_gauss < out.params.b0;
    above = above || q.b_gauss > out.params.b0;
  }
  out.ill_conditioned = fit.rank_deficient || !(below && above);
  if (out.ill_conditioned && out.sigma.b0 < std::abs(out.params.b0)) {
    // one-sided data does not pin the vertex
    out.sigma.b0 = std::max(out.sigma.b0, std::abs(out.params.delta_min / std::max(out.params.k, 1e-300)));
  }
  return out;
}

inline Hyperbola hyperbola_initial_guess(const std::vector<SplittingPoint>& pts) {
  const auto mn = std::min_element(pts.begin(), pts.end(), [](auto& a, auto& b) {
    return a.splitting_mhz < b.splitting_mhz;
  });
  Hyperbola h{mn->splitting_mhz, mn->b_gauss, 0.0};
  const auto [lo, hi] = std::minmax_element(pts.begin(), pts.end(), [](auto& a, auto& b) {
    return a.b_gauss < b.b_gauss;
  });
  for (const auto* e : {&*lo, &*hi}) {
    const double dx = std::abs(e->b_gauss - h.b0);
    if (dx > 0.0) {
      const double dy2 = e->splitting_mhz * e->splitting_mhz - h.delta_min * h.delta_min;
      h.k = std::max(h.k, std::sqrt(std::max(dy2, 0.0)) / dx);
    }
  }
  if (h.k == 0.0) {
    const double span = hi->b_gauss - lo->b_gauss;
    h.k = span > 0 ? 1e-3 * std::max(h.delta_min, 1e-9) / span : 1.0;
  }
  return h;
}

} // namespace detail

/// Weighted least-squares fit of sqrt(delta_min^2 + k^2 (B - B0)^2).
inline FitResult hyperbola_fit(const std::vector<SplittingPoint>& points,
                               const std::vector<double>& weights = {}) {
  if (points.size() < 4) throw FitError("spectroscopy", "hyperbola fit needs at least 4 points");
  if (!weights.empty() && weights.size() != points.size())
    throw FitError("spectroscopy", "weights and points differ in length");
  return detail::fit_splitting_model(points, weights, detail::hyperbola_initial_guess(points), nullptr);
}

/// Fits the noise-averaged hyperbola and returns the parameters of the
/// underlying ideal curve; noise_upshift is the model minimum minus delta_min.
inline FitResult noise_averaged_fit(const std::vector<SplittingPoint>& points,
                                    const std::vector<double>& weights, const NoiseModel& noise) {
  noise.validate();
  FitResult ideal = hyperbola_fit(points, weights);
  if (noise.is_zero()) return ideal;
  FitResult out = detail::fit_splitting_model(points, weights, ideal.params, &noise);
  out.noise_upshift =
      noise_averaged_splitting_quadrature(out.params.b0, out.params, noise) - out.params.delta_min;
  return out;
}

// ---------------------------------------------------------------------------
// Method 2: Ramsey interferometry

struct RamseyRecord {
  double b_gauss = 0.0;
  double f_rf_mhz = 0.0;
  std::vector<double> hold_times_ms;
  std::vector<double> remaining_fraction;
  std::optional<double> fitted_fringe_frequency_mhz;
  bool rf_above_splitting = true; // sign of f_rf - splitting, known from the setup
};

struct RamseyOptions {
  std::size_t molecules_per_shot = 32; // noise samples averaged per hold time
  PropagateOptions propagate{};
  unsigned threads = 0;
  bool fit_fringe = true;
};

struct FringeFit {
  double frequency_mhz = 0.0;
  double uncertainty_mhz = 0.0;
  double amplitude = 0.0;
  double phase_rad = 0.0;
  double decay_time_ms = 0.0; // infinity when undamped
  double offset = 0.0;
  double residual_norm = 0.0;
};

/// Damped-cosine fit A cos(2 pi f t + phi) exp(-t / tau) + C of a Ramsey record.
inline FringeFit fringe_frequency(const RamseyRecord& rec) {
  const auto& t = rec.hold_times_ms;
  const auto& y = rec.remaining_fraction;
  if (t.size() != y.size()) throw FitError("spectroscopy", "Ramsey arrays differ in length");
  if (t.size() < 6) throw FitError("spectroscopy", "Ramsey record too short to fit");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) throw FitError("spectroscopy", "hold times must be increasing");
  const double span = t.back() - t.front();
  double max_gap = 0.0, min_gap = span;
  for (std::size_t i = 1; i < t.size(); ++i) {
    max_gap = std::max(max_gap, t[i] - t[i - 1]);
    min_gap = std::min(min_gap, t[i] - t[i - 1]);
  }
  const auto n = static_cast<Eigen::Index>(t.size());

  // Least-squares periodogram (frequencies in kHz, times in ms).
  const double f_lo = 0.5 / span, f_hi = 0.5 / min_gap, df = 0.02 / span;
  double best_f = f_lo, best_rss = std::numeric_limits<double>::infinity();
  Eigen::Vector3d best_coef = Eigen::Vector3d::Zero();
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd Y(n);
  for (Eigen::Index i = 0; i < n; ++i) Y[i] = y[static_cast<std::size_t>(i)];
  for (double f = f_lo; f <= f_hi; f += df) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ph = units::two_pi * f * t[static_cast<std::size_t>(i)];
      X(i, 0) = std::cos(ph);
      X(i, 1) = std::sin(ph);
      X(i, 2) = 1.0;
    }
    const Eigen::Vector3d c = X.colPivHouseholderQr().solve(Y);
    const double rss = (X * c - Y).squaredNorm();
    if (rss < best_rss) {
      best_rss = rss;
      best_f = f;
      best_coef = c;
    }
  }
  if (best_f * span < 2.0)
    throw FitError("spectroscopy", "undersampled Ramsey record: fewer than 2 fringe periods");

  Eigen::VectorXd p0(5);
  p0 << std::hypot(best_coef[0], best_coef[1]), best_f, std::atan2(-best_coef[1], best_coef[0]), 0.0,
      best_coef[2];
  auto resid = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = t[static_cast<std::size_t>(i)];
      r[i] = p[0] * std::cos(units::two_pi * p[1] * ti + p[2]) * std::exp(-p[3] * ti) + p[4] - Y[i];
    }
    return r;
  };
  const auto fit = levenberg_marquardt(resid, p0);
  if (!fit.converged) throw FitError("spectroscopy", "fringe fit did not converge");

  const double f_khz = std::abs(fit.params[1]);
  if (f_khz * span < 2.0)
    throw FitError("spectroscopy", "undersampled Ramsey record: fewer than 2 fringe periods");
  if (f_khz * max_gap > 0.5)
    throw FitError("spectroscopy", "undersampled Ramsey record: sampling below Nyquist");

  FringeFit out;
  out.frequency_mhz = f_khz * units::mhz_per_khz;
  out.uncertainty_mhz = std::sqrt(std::max(0.0, fit.scaled_covariance()(1, 1))) * units::mhz_per_khz;
  out.amplitude = fit.params[0];
  out.phase_rad = fit.params[2];
  out.decay_time_ms = fit.params[3] > 0 ? 1.0 / fit.params[3] : std::numeric_limits<double>::infinity();
  out.offset = fit.params[4];
  out.residual_norm = std::sqrt(fit.rss);
  return out;
}

/// Remaining upper-branch fraction after pi/2 - hold - pi/2. The rf source runs
/// freely, so the second pulse starts with phase 2 pi f (t_pulse + t_hold).
/// With a noise model every hold time is one shot: a temporal offset shared by
/// the shot plus a spatial offset per molecule (uniform_gaussian), or an
/// independent gaussian offset per molecule (gaussian).
inline RamseyRecord simulate_ramsey(const CrossingFrame& frame, double b_gauss, double f_rf_mhz,
                                    double omega_r, const std::vector<double>& hold_times_ms,
                                    const std::optional<NoiseModel>& noise = std::nullopt,
                                    std::uint64_t seed = 0, const RamseyOptions& opt = {}) {
  if (!(omega_r > 0.0)) throw ValidationError("spectroscopy", "Rabi frequency must be > 0");
  if (noise) noise->validate();
  const CrossingFrame fb = frame.at(b_gauss);
  const double moment = braket_transition_moment(fb);
  const double b_rf = omega_r / (units::two_pi * std::abs(moment));
  const double t_pulse_us = units::pi / (2.0 * omega_r);

  RamseyRecord rec;
  rec.b_gauss = b_gauss;
  rec.f_rf_mhz = f_rf_mhz;
  rec.hold_times_ms = hold_times_ms;
  rec.remaining_fraction.assign(hold_times_ms.size(), 0.0);
  rec.rf_above_splitting = f_rf_mhz > splitting(fb);

  const bool noisy = noise && !noise->is_zero();
  const std::size_t per_shot = noisy ? std::max<std::size_t>(1, opt.molecules_per_shot) : 1;
  std::vector<double> offsets(hold_times_ms.size() * per_shot, 0.0);
  if (noisy) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(-0.5, 0.5);
    for (std::size_t s = 0; s < hold_times_ms.size(); ++s) {
      const double shot = noise->distribution == NoiseDistribution::uniform_gaussian
                              ? noise->fluctuation_sigma_g * gauss(rng)
                              : 0.0;
      for (std::size_t m = 0; m < per_shot; ++m) {
        offsets[s * per_shot + m] =
            noise->distribution == NoiseDistribution::uniform_gaussian
                ? shot + noise->spatial_width_g() * unif(rng)
                : noise->sigma_eff() * gauss(rng);
      }
    }
  }

  parallel_for(
      offsets.size(),
      [&](std::size_t idx) {
        const std::size_t s = idx / per_shot;
        const double b = b_gauss + offsets[idx];
        const double hold_us = units::ms_to_us(hold_times_ms[s]);
        RfDrive p1;
        p1.amplitude_g = b_rf;
        p1.frequency_mhz = f_rf_mhz;
        RfDrive p2 = p1;
        p2.phase_rad = std::fmod(units::two_pi * f_rf_mhz * (t_pulse_us + hold_us), units::two_pi);
        PulseSchedule sched;
        sched.b_initial = b;
        sched.ramp_to(b, units::us_to_ms(t_pulse_us), p1);
        if (hold_us > 0.0) sched.ramp_to(b, units::us_to_ms(hold_us));
        sched.ramp_to(b, units::us_to_ms(t_pulse_us), p2);
        const CrossingFrame fl = frame.at(b);
        const auto r = propagate(branch_state(fl, Branch::upper), frame, sched, opt.propagate);
        offsets[idx] = branch_population(r.final_state, fl, Branch::upper);
      },
      opt.threads);
  for (std::size_t s = 0; s < hold_times_ms.size(); ++s) {
    double acc = 0.0;
    for (std::size_t m = 0; m < per_shot; ++m) acc += offsets[s * per_shot + m];
    rec.remaining_fraction[s] = acc / static_cast<double>(per_shot);
  }

  if (opt.fit_fringe) {
    try {
      rec.fitted_fringe_frequency_mhz = fringe_frequency(rec).frequency_mhz;
    } catch (const FitError&) {
      rec.fitted_fringe_frequency_mhz.reset();
    }
  }
  return rec;
}

/// Splitting implied by a Ramsey record: f_rf -/+ fringe frequency.
inline SplittingPoint ramsey_splitting(const RamseyRecord& rec, double fringe_mhz) {
  return {rec.b_gauss, rec.rf_above_splitting ? rec.f_rf_mhz - fringe_mhz : rec.f_rf_mhz + fringe_mhz};
}

/// Fits the noise-averaged hyperbola to fringe-derived splittings and returns
/// the parameters of the underlying ideal hyperbola.
inline FitResult ramsey_minimum_estimate(const std::vector<RamseyRecord>& records,
                                         const NoiseModel& noise) {
  noise.validate();
  if (records.size() < 4) throw FitError("spectroscopy", "need at least 4 Ramsey records");
  std::vector<SplittingPoint> pts;
  std::vector<double> w;
  std::vector<double> sig;
  for (const auto& r : records) {
    const FringeFit ff = fringe_frequency(r);
    pts.push_back(ramsey_splitting(r, ff.frequency_mhz));
    sig.push_back(ff.uncertainty_mhz);
  }
  // Weights from the fringe-fit uncertainties, floored at a fraction of the median.
  std::vector<double> sorted = sig;
  std::sort(sorted.begin(), sorted.end());
  const double floor = std::max(0.1 * sorted[sorted.size() / 2], 1e-12);
  for (double s : sig) {
    const double e = std::max(s, floor);
    w.push_back(1.0 / (e * e));
  }
  return noise_averaged_fit(pts, w, noise);
}

} // namespace rfcruise
