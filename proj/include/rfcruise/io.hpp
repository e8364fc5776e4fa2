#pragma once

// Tabular and document output: locale-free number formatting, CSV with a
// config-hash header, schedule CSV round trip, JSON reports and gnuplot data.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "rfcruise/dynamics.hpp"
#include "rfcruise/error.hpp"
#include "rfcruise/planner.hpp"
#include "rfcruise/spectroscopy.hpp"

namespace rfcruise::io {

inline constexpr const char* version = "0.1.0";

/// Shortest round-trip-safe text at 12 significant digits, '.' as separator.
inline std::string fmt(double x) {
  if (x == 0.0) return "0"; // also folds -0
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 12);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\t' || e[-1] == '\r')) --e;
  if (b < e && *b == '+') ++b;
  const auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e) throw ParseError("cli-io", "not a number: '" + s + "'");
  return v;
}

/// 64-bit FNV-1a as 16 hex digits.
inline std::string fnv1a(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xf];
  return out;
}

struct Metadata {
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> entries; // written as "# key: value"
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::pair<std::string, std::string>> meta;

  std::string meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return v;
    throw ParseError("cli-io", "missing metadata '" + key + "'");
  }

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw ParseError("cli-io", "missing column '" + name + "'");
  }

  std::vector<double> values(const std::string& name) const {
    const auto c = column(name);
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r[c]);
    return v;
  }
};

inline std::string write_csv(const Table& t, const Metadata& md) {
  std::ostringstream os;
  os << "# config_hash: " << md.config_hash << "\n";
  for (const auto& [k, v] : md.entries) os << "# " << k << ": " << v << "\n";
  for (const auto& [k, v] : t.meta) os << "# " << k << ": " << v << "\n";
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
  os << "\n";
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << fmt(r[i]);
    os << "\n";
  }
  return os.str();
}

/// Reads a CSV written by write_csv (or any CSV with one header line; lines
/// starting with '#' carry "key: value" metadata).
inline Table read_csv(const std::string& text) {
  Table t;
  std::istringstream is(text);
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        auto key = line.substr(1, colon - 1);
        auto val = line.substr(colon + 1);
        key.erase(0, key.find_first_not_of(' '));
        val.erase(0, val.find_first_not_of(' '));
        t.meta.emplace_back(key, val);
      }
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!have_header) {
      for (auto& c : cells) {
        c.erase(0, c.find_first_not_of(' '));
        c.erase(c.find_last_not_of(' ') + 1);
      }
      t.columns = cells;
      have_header = true;
      continue;
    }
    if (cells.size() != t.columns.size())
      throw ParseError("cli-io", "line " + std::to_string(lineno) + ": expected " +
                                     std::to_string(t.columns.size()) + " fields");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_double(c));
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw ParseError("cli-io", "CSV has no header line");
  return t;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cli-io", "cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cli-io", "cannot write '" + path + "'");
  out << content;
  if (!out) throw ParseError("cli-io", "write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Per-type tables

inline Table scan_table(const ResonanceScan& s) {
  Table t;
  t.columns = {"frequency_mhz", "transfer"};
  t.meta = {{"b_gauss", fmt(s.b_gauss)}, {"pulse_length_ms", fmt(s.pulse_length_ms)}, {"b_rf_g", fmt(s.b_rf_g)}};
  for (std::size_t i = 0; i < s.frequencies_mhz.size(); ++i) t.rows.push_back({s.frequencies_mhz[i], s.transfer[i]});
  return t;
}

inline ResonanceScan scan_from_table(const Table& t) {
  ResonanceScan s;
  s.b_gauss = parse_double(t.meta_value("b_gauss"));
  s.pulse_length_ms = parse_double(t.meta_value("pulse_length_ms"));
  s.b_rf_g = parse_double(t.meta_value("b_rf_g"));
  s.frequencies_mhz = t.values("frequency_mhz");
  s.transfer = t.values("transfer");
  return s;
}

inline Table ramsey_table(const RamseyRecord& r) {
  Table t;
  t.columns = {"hold_time_ms", "remaining_fraction"};
  t.meta = {{"b_gauss", fmt(r.b_gauss)},
            {"f_rf_mhz", fmt(r.f_rf_mhz)},
            {"rf_above_splitting", r.rf_above_splitting ? "1" : "0"}};
  if (r.fitted_fringe_frequency_mhz)
    t.meta.emplace_back("fitted_fringe_frequency_mhz", fmt(*r.fitted_fringe_frequency_mhz));
  for (std::size_t i = 0; i < r.hold_times_ms.size(); ++i)
    t.rows.push_back({r.hold_times_ms[i], r.remaining_fraction[i]});
  return t;
}

inline RamseyRecord ramsey_from_table(const Table& t) {
  RamseyRecord r;
  r.b_gauss = parse_double(t.meta_value("b_gauss"));
  r.f_rf_mhz = parse_double(t.meta_value("f_rf_mhz"));
  r.rf_above_splitting = t.meta_value("rf_above_splitting") != "0";
  r.hold_times_ms = t.values("hold_time_ms");
  r.remaining_fraction = t.values("remaining_fraction");
  for (const auto& [k, v] : t.meta)
    if (k == "fitted_fringe_frequency_mhz") r.fitted_fringe_frequency_mhz = parse_double(v);
  return r;
}

/// Points for fit-hyperbola: columns b_gauss, splitting_mhz and optional weight.
inline std::pair<std::vector<SplittingPoint>, std::vector<double>> points_from_table(const Table& t) {
  std::vector<SplittingPoint> pts;
  const auto b = t.values("b_gauss");
  const auto s = t.values("splitting_mhz");
  for (std::size_t i = 0; i < b.size(); ++i) pts.push_back({b[i], s[i]});
  std::vector<double> w;
  for (const auto& c : t.columns)
    if (c == "weight") w = t.values("weight");
  return {pts, w};
}

// ---------------------------------------------------------------------------
// Flattened schedule: one row per knot. The field and the rf amplitude are
// linear between knots; the rf frequency of a row applies to the interval that
// starts there. The source is free-running, so its phase at any time t is
// 2 pi f t.

inline Table schedule_table(const PulseSchedule& s) {
  Table t;
  t.columns = {"time_ms", "B_gauss", "rf_amplitude_g", "rf_freq_mhz"};
  double t0 = 0.0;
  // A knot repeating the previous one's time, field and amplitude only updates
  // the frequency, so split segments flatten to the same rows as the original.
  auto knot = [&](double tm, double b, double a, double f) {
    if (!t.rows.empty()) {
      auto& last = t.rows.back();
      if (last[0] == tm && last[1] == b && last[2] == a) {
        last[3] = f;
        return;
      }
    }
    t.rows.push_back({tm, b, a, f});
  };
  for (const auto& seg : s.segments) {
    if (!seg.rf || seg.rf->amplitude_g == 0.0) {
      knot(t0, seg.b_start, 0.0, 0.0);
      t0 += seg.duration_ms;
      continue;
    }
    const auto& rf = *seg.rf;
    const double a = rf.amplitude_g, f = rf.frequency_mhz;
    const double d = units::ms_to_us(seg.duration_ms);
    const bool lin = rf.envelope == Envelope::linear_ramp && rf.rise_time_us > 0.0;
    const double r = lin ? std::min(rf.rise_time_us, rf.ramp_in && rf.ramp_out ? 0.5 * d : d) : 0.0;
    const double r_in = lin && rf.ramp_in ? r : 0.0;
    const double r_out = lin && rf.ramp_out ? r : 0.0;
    knot(t0, seg.b_start, r_in > 0.0 ? 0.0 : a, f);
    if (r_in > 0.0) knot(t0 + units::us_to_ms(r_in), seg.field_at(r_in), a, f);
    if (r_out > 0.0) {
      if (d - r_out > r_in) knot(t0 + units::us_to_ms(d - r_out), seg.field_at(d - r_out), a, f);
    } else {
      // full amplitude up to the segment end; a following knot at the same time
      // with another amplitude is a step (zero-length interval on ingestion)
      knot(t0 + seg.duration_ms, seg.b_end, a, f);
    }
    t0 += seg.duration_ms;
  }
  knot(t0, s.b_final(), 0.0, 0.0);
  return t;
}

inline PulseSchedule schedule_from_table(const Table& t) {
  const auto c_t = t.column("time_ms"), c_b = t.column("B_gauss"), c_a = t.column("rf_amplitude_g"),
             c_f = t.column("rf_freq_mhz");
  if (t.rows.empty()) throw ParseError("cli-io", "schedule CSV has no rows");
  PulseSchedule s;
  s.b_initial = t.rows.front()[c_b];
  for (std::size_t i = 0; i + 1 < t.rows.size(); ++i) {
    const auto& r0 = t.rows[i];
    const auto& r1 = t.rows[i + 1];
    const double dur = r1[c_t] - r0[c_t];
    if (dur < 0.0) throw ParseError("cli-io", "schedule times must be non-decreasing");
    if (dur == 0.0) {
      if (r1[c_b] != r0[c_b]) throw ParseError("cli-io", "field step at zero duration");
      continue;
    }
    const double a0 = r0[c_a], a1 = r1[c_a], f = r0[c_f];
    std::optional<RfDrive> rf;
    if (a0 != 0.0 || a1 != 0.0) {
      RfDrive d;
      d.frequency_mhz = f;
      d.amplitude_g = std::max(a0, a1);
      d.phase_rad = std::fmod(units::two_pi * f * units::ms_to_us(r0[c_t]), units::two_pi);
      if (a0 == a1) {
        d.envelope = Envelope::rectangular;
      } else if (a0 == 0.0 || a1 == 0.0) {
        d.envelope = Envelope::linear_ramp;
        d.rise_time_us = units::ms_to_us(dur);
        d.ramp_in = a0 == 0.0;
        d.ramp_out = a1 == 0.0;
      } else {
        throw ParseError("cli-io", "rf amplitude ramps must start or end at zero");
      }
      rf = d;
    }
    s.segments.push_back({dur, s.b_final(), r1[c_b], rf});
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// JSON documents

inline nlohmann::json value_with_error(double v, double e) { return {{"value", v}, {"uncertainty", e}}; }

inline nlohmann::json fit_report(const FitResult& f) {
  nlohmann::json cov = nlohmann::json::array();
  for (const auto& row : f.covariance) cov.push_back(row);
  return {{"delta_min_mhz", value_with_error(f.params.delta_min, f.sigma.delta_min)},
          {"b0_gauss", value_with_error(f.params.b0, f.sigma.b0)},
          {"k_mhz_per_g", value_with_error(f.params.k, f.sigma.k)},
          {"residual_norm", f.residual_norm},
          {"iterations", f.iterations},
          {"n_points", f.n_points},
          {"ill_conditioned", f.ill_conditioned},
          {"noise_upshift_mhz", f.noise_upshift},
          {"covariance", cov}};
}

inline nlohmann::json plan_to_json(const TransportPlan& p) {
  nlohmann::json actions = nlohmann::json::array();
  for (const auto& a : p.actions) {
    nlohmann::json j = {{"crossing", a.crossing_id},
                        {"kind", to_string(a.kind)},
                        {"from", a.from_level},
                        {"to", a.to_level},
                        {"start_branch", a.start_branch == Branch::upper ? "upper" : "lower"},
                        {"b_start_gauss", a.b_start},
                        {"b_end_gauss", a.b_end},
                        {"ramp_g_per_ms", a.ramp_g_per_ms},
                        {"start_time_ms", a.start_time_ms},
                        {"predicted_success", a.predicted_success}};
    if (a.kind == ActionKind::atac) {
      j["b_rf_g"] = a.b_rf_g;
      j["f_rf_mhz"] = a.f_rf_mhz;
      j["window"] = to_string(a.window);
      j["rf_rise_time_us"] = a.rise_time_us;
    }
    actions.push_back(j);
  }
  nlohmann::json doc = {{"start_level", p.start_level},
                        {"goal_level", p.goal_level},
                        {"route", p.route},
                        {"actions", actions},
                        {"n_actions", p.actions.size()},
                        {"total_duration_ms", p.total_duration_ms},
                        {"survival", p.survival},
                        {"timing",
                         {{"travel_ramp_g_per_ms", p.policy.travel_ramp_g_per_ms},
                          {"atac_ramp_g_per_ms", p.policy.atac_ramp_g_per_ms},
                          {"jump_ramp_g_per_ms", p.policy.jump_ramp_g_per_ms},
                          {"hold_between_crossings_ms", 0.0}}}};
  doc["lifetime_ms"] = p.lifetime_ms ? nlohmann::json(*p.lifetime_ms) : nlohmann::json(nullptr);
  return doc;
}

// ---------------------------------------------------------------------------
// Plot data (whitespace separated, '#' header with columns and fit parameters)

inline std::string plot_data(const std::string& title, const std::vector<std::string>& columns,
                             const std::vector<std::vector<double>>& rows,
                             const std::vector<std::pair<std::string, double>>& params,
                             const std::string& config_hash) {
  std::ostringstream os;
  os << "# " << title << "\n# config_hash: " << config_hash << "\n";
  for (const auto& [k, v] : params) os << "# " << k << " = " << fmt(v) << "\n";
  os << "#";
  for (const auto& c : columns) os << " " << c;
  os << "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? " " : "") << fmt(r[i]);
    os << "\n";
  }
  return os.str();
}

/// Efficiency vs rf amplitude with the Landau-Zener fit.
inline std::string plot_efficiency_vs_brf(const std::vector<double>& brf, const std::vector<double>& eff,
                                          const LzFitResult& fit, double ramp, double dmu,
                                          const std::string& hash) {
  if (brf.empty() || brf.size() != eff.size()) throw ValidationError("cli-io", "missing efficiency artifacts");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < brf.size(); ++i) rows.push_back({brf[i], eff[i], fit.efficiency(brf[i], ramp, dmu)});
  return plot_data("efficiency vs rf amplitude", {"brf_g", "efficiency_sim", "efficiency_lz_fit"}, rows,
                   {{"moment_mhz_per_g", fit.moment}, {"moment_stderr_mhz_per_g", fit.moment_stderr},
                    {"ramp_g_per_ms", ramp}, {"dmu_mhz_per_g", dmu}},
                   hash);
}

/// Splitting vs field with the hyperbola fit.
inline std::string plot_splitting(const std::vector<SplittingPoint>& pts, const FitResult& fit,
                                  const std::string& hash) {
  if (pts.empty()) throw ValidationError("cli-io", "missing splitting artifacts");
  std::vector<std::vector<double>> rows;
  for (const auto& p : pts) rows.push_back({p.b_gauss, p.splitting_mhz, fit.params(p.b_gauss)});
  return plot_data("splitting vs field", {"b_gauss", "splitting_mhz", "hyperbola_fit_mhz"}, rows,
                   {{"delta_min_mhz", fit.params.delta_min}, {"b0_gauss", fit.params.b0}, {"k_mhz_per_g", fit.params.k}},
                   hash);
}

/// Splitting vs field with the ideal and the noise-averaged model curves.
inline std::string plot_splitting_noise(const std::vector<SplittingPoint>& pts, const FitResult& fit,
                                        const NoiseModel& noise, const std::string& hash) {
  if (pts.empty()) throw ValidationError("cli-io", "missing splitting artifacts");
  std::vector<std::vector<double>> rows;
  for (const auto& p : pts)
    rows.push_back({p.b_gauss, p.splitting_mhz, fit.params(p.b_gauss),
                    noise_averaged_splitting_quadrature(p.b_gauss, fit.params, noise)});
  return plot_data("splitting vs field, noise-averaged model",
                   {"b_gauss", "splitting_mhz", "ideal_hyperbola_mhz", "noise_averaged_mhz"}, rows,
                   {{"delta_min_mhz", fit.params.delta_min},
                    {"b0_gauss", fit.params.b0},
                    {"k_mhz_per_g", fit.params.k},
                    {"sigma_eff_g", noise.sigma_eff()},
                    {"upshift_mhz", fit.noise_upshift}},
                   hash);
}

/// Ramsey fringe vs hold time with the damped-cosine fit.
inline std::string plot_fringe(const RamseyRecord& r, const FringeFit& f, const std::string& hash) {
  if (r.hold_times_ms.empty()) throw ValidationError("cli-io", "missing Ramsey artifacts");
  std::vector<std::vector<double>> rows;
  const double f_khz = f.frequency_mhz / units::mhz_per_khz;
  for (std::size_t i = 0; i < r.hold_times_ms.size(); ++i) {
    const double t = r.hold_times_ms[i];
    const double decay = std::isinf(f.decay_time_ms) ? 1.0 : std::exp(-t / f.decay_time_ms);
    rows.push_back({t, r.remaining_fraction[i],
                    f.amplitude * std::cos(units::two_pi * f_khz * t + f.phase_rad) * decay + f.offset});
  }
  return plot_data("Ramsey fringe", {"hold_time_ms", "remaining_fraction", "fringe_fit"}, rows,
                   {{"fringe_frequency_mhz", f.frequency_mhz}, {"decay_time_ms", f.decay_time_ms}}, hash);
}

} // namespace rfcruise::io
