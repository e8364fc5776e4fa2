#include <random>

#include <gtest/gtest.h>

#include "rfcruise/spectroscopy.hpp"

using namespace rfcruise;

namespace {

const CrossingFrame crossing_a = CrossingFrame::make(13.3321, 0.2, 3.0, 1001.4, 1001.4);
const CrossingFrame crossing_e = CrossingFrame::make(2.36, 3.8, 1.8, 466.1, 466.1);

// noise parameters: 2 G/mm across a 20 um cloud, 20 mG temporal
const NoiseModel lab_noise{2.0, 0.02, 0.02, NoiseDistribution::uniform_gaussian};

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(a + (b - a) * i / (n - 1));
  return v;
}

RamseyOptions rwa_options() {
  RamseyOptions o;
  o.propagate.frame = Frame::rotating_wave;
  return o;
}

// Synthetic fringe record, optionally with additive gaussian noise.
RamseyRecord cosine_record(double f_mhz, double t_max_ms, int n, double noise, std::uint64_t seed) {
  RamseyRecord r;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, noise);
  for (double t : linspace(0.0, t_max_ms, n)) {
    r.hold_times_ms.push_back(t);
    const double y = 0.5 + 0.45 * std::cos(units::two_pi * f_mhz * units::ms_to_us(t) + 0.3);
    r.remaining_fraction.push_back(y + (noise > 0 ? g(rng) : 0.0));
  }
  return r;
}

} // namespace

TEST(Scan, PiPulseOnResonanceTransfersAll) {
  const double brf = 0.002;
  const double omega_r = rabi_frequency(crossing_a, brf);
  const double pulse_ms = units::us_to_ms(units::pi / omega_r);
  const double f0 = splitting(crossing_a);
  const double df = units::angular_to_mhz(omega_r); // detuning equal to the Rabi frequency
  const auto s = simulate_resonance_scan(crossing_a, crossing_a.b0, pulse_ms, brf, {f0 - df, f0, f0 + df});
  EXPECT_GT(s.transfer[1], 0.999);
  const double expect = rabi_lineshape(df, omega_r, units::pi / omega_r);
  EXPECT_NEAR(expect, 0.5 * std::pow(std::sin(units::pi / std::sqrt(2.0)), 2), 1e-12);
  EXPECT_NEAR(s.transfer[0], expect, 5e-3);
  EXPECT_NEAR(s.transfer[2], expect, 5e-3);
}

TEST(Scan, GridValidation) {
  EXPECT_THROW(simulate_resonance_scan(crossing_a, 1001.4, 0.01, 0.002, {13.4}), ValidationError);
  EXPECT_THROW(simulate_resonance_scan(crossing_a, 1001.4, 0.01, 0.002, {13.4, 13.3}), ValidationError);
  EXPECT_THROW(simulate_resonance_scan(crossing_a, 1001.4, 0.01, 0.002, {14.0, 14.1}), ValidationError);
}

TEST(Peak, SymmetricLineshapeGivesExactCenter) {
  ResonanceScan s;
  const double f0 = 7.25, omega_r = 0.3, t = units::pi / omega_r;
  s.pulse_length_ms = units::us_to_ms(t);
  for (int i = -10; i <= 10; ++i) {
    s.frequencies_mhz.push_back(f0 + 0.004 * i);
    s.transfer.push_back(rabi_lineshape(0.004 * i, omega_r, t));
  }
  for (auto m : {PeakMethod::parabolic, PeakMethod::rabi_lineshape})
    EXPECT_NEAR(peak_frequency(s, m).frequency_mhz, f0, 1e-9);
}

TEST(Peak, Errors) {
  ResonanceScan s;
  s.frequencies_mhz = {1, 2, 3, 4};
  s.transfer = {0.1, 0.5, 0.4, 0.1};
  EXPECT_THROW(peak_frequency(s), FitError);
  s.frequencies_mhz = {1, 2, 3, 4, 5, 6};
  s.transfer = {0.9, 0.5, 0.4, 0.3, 0.2, 0.1};
  EXPECT_THROW(peak_frequency(s), FitError);
  s.transfer.assign(6, 0.2);
  EXPECT_THROW(peak_frequency(s), FitError);
}

TEST(Scan, RecoversCrossingESplitting) {
  const double brf = 0.002;
  const double omega_r = rabi_frequency(crossing_e, brf);
  const double t_us = units::pi / omega_r;
  const auto grid = linspace(2.36 - 4.0 / t_us, 2.36 + 4.0 / t_us, 41);
  const auto scan = simulate_resonance_scan(crossing_e, crossing_e.b0, units::us_to_ms(t_us), brf, grid);
  const auto p = peak_frequency(scan);
  EXPECT_NEAR(p.frequency_mhz, 2.36, 0.01);
  EXPECT_GT(p.uncertainty_mhz, 0.0);
}

TEST(Hyperbola, NoiselessFitRecoversParameters) {
  const Hyperbola truth{13.3321, 1001.4, 2.8};
  std::vector<SplittingPoint> pts;
  for (double b : linspace(996.0, 1006.0, 15)) pts.push_back({b, truth(b)});
  const auto fit = hyperbola_fit(pts);
  EXPECT_NEAR(fit.params.delta_min / truth.delta_min, 1.0, 1e-6);
  EXPECT_NEAR(fit.params.b0 / truth.b0, 1.0, 1e-6);
  EXPECT_NEAR(std::abs(fit.params.k) / truth.k, 1.0, 1e-6);
  EXPECT_FALSE(fit.ill_conditioned);
}

TEST(Hyperbola, TooFewPoints) {
  const Hyperbola h{1.0, 10.0, 1.0};
  EXPECT_THROW(hyperbola_fit({{9, h(9)}, {10, h(10)}, {11, h(11)}}), FitError);
}

TEST(Hyperbola, OneSidedDataFlagsIllConditioned) {
  const Hyperbola truth{1.0, 100.0, 2.0};
  std::vector<SplittingPoint> pts;
  for (double b : linspace(103.0, 110.0, 8)) pts.push_back({b, truth(b)});
  const auto fit = hyperbola_fit(pts);
  EXPECT_TRUE(fit.ill_conditioned);
}

TEST(Hyperbola, ScaleEquivariant) {
  const Hyperbola truth{2.36, 466.1, 2.0};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.002);
  std::vector<SplittingPoint> g_pts, mg_pts;
  for (double b : linspace(462.0, 470.0, 13)) {
    const double y = truth(b) + g(rng);
    g_pts.push_back({b, y});
    mg_pts.push_back({b * 1000.0, y});
  }
  const auto a = hyperbola_fit(g_pts);
  const auto b = hyperbola_fit(mg_pts);
  EXPECT_NEAR(b.params.delta_min / a.params.delta_min, 1.0, 1e-9);
  EXPECT_NEAR(b.params.b0 / (1000.0 * a.params.b0), 1.0, 1e-9);
  EXPECT_NEAR(std::abs(b.params.k) * 1000.0 / std::abs(a.params.k), 1.0, 1e-9);
}

TEST(Noise, SigmaEffCombinesInQuadrature) {
  EXPECT_NEAR(lab_noise.sigma_eff(), std::sqrt(0.04 * 0.04 / 12.0 + 0.02 * 0.02), 1e-15);
  EXPECT_THROW((NoiseModel{-1.0, 0.0, 0.0}.validate()), ValidationError);
}

TEST(Noise, AveragedCurveDominatesIdeal) {
  const Hyperbola h{13.3321, 1001.4, 2.8};
  for (double b : linspace(995.0, 1008.0, 53)) {
    EXPECT_GE(noise_averaged_splitting_quadrature(b, h, lab_noise), h(b)) << b;
    EXPECT_GE(noise_averaged_splitting(b, h, lab_noise, 64, 11), h(b)) << b;
  }
}

TEST(Noise, QuadratureMatchesMonteCarlo) {
  const Hyperbola h{1.0, 50.0, 3.0};
  const NoiseModel n{5.0, 0.02, 0.05};
  for (double b : {49.9, 50.0, 50.3}) {
    const double q = noise_averaged_splitting_quadrature(b, h, n);
    const double mc = noise_averaged_splitting(b, h, n, 400000, 5);
    EXPECT_NEAR(q, mc, 2e-4);
  }
}

TEST(Noise, MonteCarloUpshiftMatchesAnalyticForSmallNoise) {
  const Hyperbola h{13.3321, 1001.4, 2.8};
  for (double frac : {0.02, 0.05, 0.1}) {
    for (auto dist : {NoiseDistribution::gaussian, NoiseDistribution::uniform_gaussian}) {
      const double sigma = frac * h.delta_min / h.k;
      // split the width equally between the spatial and temporal terms
      const double s_t = sigma / std::sqrt(2.0);
      const NoiseModel n{s_t * std::sqrt(12.0) / 0.02, 0.02, s_t, dist};
      ASSERT_NEAR(n.sigma_eff() * h.k, frac * h.delta_min, 1e-9);
      const double mc = noise_averaged_splitting(h.b0, h, n, 200000, 42) - h.delta_min;
      EXPECT_NEAR(mc / analytic_upshift(h, n), 1.0, 0.1) << frac;
    }
  }
}

TEST(Noise, UpshiftOfAbout150HzIsProducible) {
  const double k = slope_for_upshift(13.3321, 150e-6, lab_noise);
  const Hyperbola h{13.3321, 1001.4, k};
  EXPECT_GT(k, 1.0);
  EXPECT_LT(k, 10.0); // a plausible differential moment in MHz/G
  const double up = noise_averaged_splitting(h.b0, h, lab_noise, 200000, 1) - h.delta_min;
  EXPECT_GT(up, 50e-6);
  EXPECT_LT(up, 450e-6);
}

TEST(Noise, NoiseAveragedFitUndoesUpshift) {
  const Hyperbola truth{13.3321, 1001.4, 2.8};
  std::vector<SplittingPoint> pts;
  for (double b : linspace(997.0, 1006.0, 19))
    pts.push_back({b, noise_averaged_splitting_quadrature(b, truth, lab_noise)});
  const auto ideal = hyperbola_fit(pts);
  const auto avg = noise_averaged_fit(pts, {}, lab_noise);
  EXPECT_GT(ideal.params.delta_min - truth.delta_min, 50e-6);
  EXPECT_NEAR(avg.params.delta_min, truth.delta_min, 1e-7);
  EXPECT_NEAR(avg.noise_upshift, analytic_upshift(truth, lab_noise), 0.1 * analytic_upshift(truth, lab_noise));
}

TEST(Fringe, SyntheticCosine) {
  const double f = 5e-3; // 5 kHz
  const auto fit = fringe_frequency(cosine_record(f, 1.0, 81, 0.0, 0));
  EXPECT_NEAR(fit.frequency_mhz / f, 1.0, 1e-3);
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto r = fringe_frequency(cosine_record(f, 1.0, 81, 0.05, seed));
    EXPECT_NEAR(r.frequency_mhz / f, 1.0, 0.02) << seed;
    mean += r.frequency_mhz / 50.0;
  }
  EXPECT_NEAR(mean / f, 1.0, 5e-3);
}

TEST(Fringe, UndersampledRecordsRejected) {
  EXPECT_THROW(fringe_frequency(cosine_record(5e-3, 0.15, 30, 0.0, 0)), FitError); // under one period
  EXPECT_THROW(fringe_frequency(cosine_record(5e-3, 0.3, 25, 0.0, 0)), FitError);  // 1.5 periods
  EXPECT_THROW(fringe_frequency(cosine_record(5e-3, 1.0, 5, 0.0, 0)), FitError);   // too few points
}

TEST(Ramsey, FringeEqualsDetuningAcrossDecades) {
  for (double det_khz : {1.0, 3.0, 10.0, 30.0, 100.0}) {
    for (double sign : {1.0, -1.0}) {
      const double det = sign * det_khz * units::mhz_per_khz;
      const double rabi = units::mhz_to_angular(std::max(20.0, 4 * det_khz) * units::mhz_per_khz);
      const auto holds = linspace(0.0, 4.0 / det_khz, 61);
      const auto rec =
          simulate_ramsey(crossing_a, 1001.4, 13.3321 + det, rabi, holds, std::nullopt, 0, rwa_options());
      ASSERT_TRUE(rec.fitted_fringe_frequency_mhz);
      EXPECT_NEAR(*rec.fitted_fringe_frequency_mhz / std::abs(det), 1.0, 1e-3) << det_khz << " kHz, " << sign;
      EXPECT_EQ(rec.rf_above_splitting, sign > 0);
      EXPECT_NEAR(ramsey_splitting(rec, *rec.fitted_fringe_frequency_mhz).splitting_mhz, 13.3321, 1e-3 * det_khz * 1e-3);
    }
  }
}

TEST(Ramsey, LabFrameAgreesWithRwa) {
  const auto holds = linspace(0.0, 0.8, 41);
  const double rabi = units::mhz_to_angular(0.02);
  RamseyOptions lab;
  lab.propagate.tol = 1e-8;
  const auto a = simulate_ramsey(crossing_a, 1001.4, 13.3371, rabi, holds, std::nullopt, 0, lab);
  const auto b = simulate_ramsey(crossing_a, 1001.4, 13.3371, rabi, holds, std::nullopt, 0, rwa_options());
  for (std::size_t i = 0; i < holds.size(); ++i) EXPECT_NEAR(a.remaining_fraction[i], b.remaining_fraction[i], 5e-3);
}

TEST(Ramsey, SeededNoiseIsReproducible) {
  const auto holds = linspace(0.0, 0.8, 41);
  RamseyOptions o = rwa_options();
  o.molecules_per_shot = 8;
  const double rabi = units::mhz_to_angular(0.02);
  const auto a = simulate_ramsey(crossing_a, 1001.0, 13.9, rabi, holds, lab_noise, 9, o);
  const auto b = simulate_ramsey(crossing_a, 1001.0, 13.9, rabi, holds, lab_noise, 9, o);
  const auto c = simulate_ramsey(crossing_a, 1001.0, 13.9, rabi, holds, lab_noise, 10, o);
  EXPECT_EQ(a.remaining_fraction, b.remaining_fraction);
  EXPECT_NE(a.remaining_fraction, c.remaining_fraction);
}

TEST(Methods, ScanAndRamseyAgree) {
  const double b = crossing_e.b0 + 0.3;
  const CrossingFrame fb = crossing_e.at(b);
  const double brf = 0.002, omega_r = rabi_frequency(fb, brf), t_us = units::pi / omega_r;
  const double f0 = splitting(fb);
  const auto scan = simulate_resonance_scan(crossing_e, b, units::us_to_ms(t_us), brf,
                                            linspace(f0 - 4.0 / t_us, f0 + 4.0 / t_us, 41));
  const auto m1 = peak_frequency(scan);
  const auto rec = simulate_ramsey(crossing_e, b, f0 + 5e-3, units::mhz_to_angular(0.02), linspace(0.0, 1.0, 61),
                                   std::nullopt, 0, rwa_options());
  const auto ff = fringe_frequency(rec);
  const double m2 = ramsey_splitting(rec, ff.frequency_mhz).splitting_mhz;
  EXPECT_LE(std::abs(m1.frequency_mhz - m2), 3.0 * std::hypot(m1.uncertainty_mhz, ff.uncertainty_mhz));
}
