// rfcruise: command-line front end.
//
//   rfcruise <command> [options]
//
// Commands: simulate, lz-fit, scan, ramsey, fit-hyperbola, plan, simulate-plan.
// Every run writes its artifacts plus manifest.json into --out (default
// $RFCRUISE_OUTPUT_DIR, else the working directory).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rfcruise/crossing_model.hpp"
#include "rfcruise/dynamics.hpp"
#include "rfcruise/io.hpp"
#include "rfcruise/manifold.hpp"
#include "rfcruise/planner.hpp"
#include "rfcruise/spectroscopy.hpp"

namespace fs = std::filesystem;
using namespace rfcruise;
using nlohmann::json;

namespace {

struct Common {
  std::string manifold;
  std::string crossing;
  std::uint64_t seed = 0;
  std::string out;
  double tol = 1e-9;
  bool lax = false;
  bool plot_data = false;
  std::string frame = "lab";
};

struct Run {
  std::string command;
  std::string hash;
  Common c;
  fs::path dir;
  std::vector<std::string> outputs;
  json summary = json::object();

  io::Metadata meta() const {
    return {hash, {{"command", command}, {"seed", std::to_string(c.seed)}, {"version", io::version}}};
  }

  void write(const std::string& name, const std::string& content) {
    io::write_file((dir / name).string(), content);
    outputs.push_back(name);
  }

  void write_table(const std::string& name, const io::Table& t) { write(name, io::write_csv(t, meta())); }

  void write_json(const std::string& name, json doc) {
    doc["config_hash"] = hash;
    doc["seed"] = c.seed;
    write(name, doc.dump(2) + "\n");
  }

  LevelManifold manifold() const {
    if (c.manifold.empty()) throw ValidationError("cli-io", "--manifold is required for '" + command + "'");
    std::vector<std::string> warnings;
    auto m = load_manifold(c.manifold, LoadOptions{!c.lax}, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    return m;
  }

  PropagateOptions propagate() const {
    PropagateOptions p;
    if (!(c.tol >= 1e-12 && c.tol <= 1e-4)) throw ValidationError("cli-io", "--tol must lie in [1e-12, 1e-4]");
    p.tol = c.tol;
    if (c.frame == "rwa") p.frame = Frame::rotating_wave;
    else if (c.frame != "lab") throw ValidationError("cli-io", "--frame must be lab or rwa");
    return p;
  }
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Canonical option dump: every option of the app and the chosen subcommand
// except output location flags, plus the manifold file content.
std::string config_string(const CLI::App& app, const CLI::App& sub, const Common& c,
                          std::map<std::string, std::string>& options) {
  for (const CLI::App* a : {&app, &sub}) {
    for (const CLI::Option* o : a->get_options()) {
      const std::string name = o->get_name(false, true);
      if (name.empty() || name == "--help" || name == "-h,--help" || name == "--out" || name == "--plot-data")
        continue;
      std::string val;
      if (o->count() > 0) {
        for (const auto& r : o->results()) val += (val.empty() ? "" : ",") + r;
        if (o->get_expected_max() == 0 && val.empty()) val = "true";
      } else {
        val = o->get_default_str();
      }
      options[name] = val;
    }
  }
  std::ostringstream os;
  os << sub.get_name() << "\n";
  for (const auto& [k, v] : options) os << k << "=" << v << "\n";
  if (!c.manifold.empty()) {
    try {
      os << io::read_file(c.manifold);
    } catch (const Error&) {
    }
  }
  return os.str();
}

double parse_rf(const LevelManifold&, const AvoidedCrossing& cr, std::optional<double> frf) {
  return frf ? *frf : cr.coupling_omega * 1.02;
}

// --- simulate -------------------------------------------------------------

struct SimulateArgs {
  std::vector<double> brf{0.05};
  std::optional<double> frf, b_from, b_to;
  double ramp = 1.3;
  bool round_trip = false;
  std::string envelope = "linear";
  double rise_us = 10.0;
};

void cmd_simulate(Run& run, const SimulateArgs& a) {
  const auto m = run.manifold();
  const auto& cr = m.crossing(run.c.crossing);
  const CrossingFrame fr = frame_for(m, cr);
  const double f = parse_rf(m, cr, a.frf);
  const double w = rf_crossing_offset(fr, f);
  const double h = std::min(0.5, w);
  const double b_from = a.b_from.value_or(cr.b0 - w + h);
  const double b_to = a.b_to.value_or(cr.b0 - w - h);
  AtacOptions ao;
  ao.envelope = a.envelope == "rect" ? Envelope::rectangular : Envelope::linear_ramp;
  if (a.envelope != "rect" && a.envelope != "linear") throw ValidationError("cli-io", "--envelope must be rect or linear");
  ao.rise_time_us = a.rise_us;
  ao.propagate = run.propagate();
  if (a.brf.size() == 1) ao.propagate.sample_interval_us = 1.0;

  const double dmu = branch_slope_at_rf_crossing(fr, f);
  std::vector<double> eff(a.brf.size());
  std::vector<TransferResult> results(a.brf.size());
  parallel_for(a.brf.size(), [&](std::size_t i) {
    results[i] = a.round_trip ? atac_round_trip(fr, a.brf[i], f, b_from, b_to, a.ramp, ao)
                              : atac_transfer(fr, a.brf[i], f, b_from, b_to, a.ramp, ao);
    eff[i] = results[i].efficiency;
  });
  io::Table t;
  t.columns = {"brf_g", "efficiency_sim", "efficiency_predicted"};
  t.meta = {{"crossing", cr.id}, {"f_rf_mhz", io::fmt(f)}, {"b_from_g", io::fmt(b_from)},
            {"b_to_g", io::fmt(b_to)}, {"ramp_g_per_ms", io::fmt(a.ramp)},
            {"round_trip", a.round_trip ? "1" : "0"}};
  json rows = json::array();
  for (std::size_t i = 0; i < a.brf.size(); ++i) {
    double pred = atac_predicted_success(fr, a.brf[i], f, a.ramp);
    if (a.round_trip) pred = pred * pred + (1 - pred) * (1 - pred);
    t.rows.push_back({a.brf[i], eff[i], pred});
    rows.push_back({{"brf_g", a.brf[i]}, {"efficiency", eff[i]}, {"predicted", pred}});
    std::printf("brf = %s G  efficiency = %s  (predicted %s)\n", io::fmt(a.brf[i]).c_str(),
                io::fmt(eff[i]).c_str(), io::fmt(pred).c_str());
  }
  run.write_table("simulate.csv", t);
  if (a.brf.size() == 1) {
    io::Table tr;
    tr.columns = {"time_us", "b_gauss", "pop_upper", "pop_lower", "norm"};
    for (const auto& s : results[0].population_trace)
      tr.rows.push_back({s.time_us, s.b_gauss, s.pop_upper, s.pop_lower, s.norm});
    run.write_table("trace.csv", tr);
  }
  run.summary["results"] = rows;
  if (a.brf.size() >= 5 && !a.round_trip) {
    try {
      const auto fit = extract_lz_fit(a.brf, eff, a.ramp, dmu);
      run.write_json("lz_fit.json", {{"moment_mhz_per_g", fit.moment}, {"moment_stderr_mhz_per_g", fit.moment_stderr},
                                     {"residual_norm", fit.residual_norm}, {"ramp_g_per_ms", a.ramp},
                                     {"dmu_mhz_per_g", dmu}});
      if (run.c.plot_data) run.write("fig2c.dat", io::plot_efficiency_vs_brf(a.brf, eff, fit, a.ramp, dmu, run.hash));
    } catch (const FitError& e) {
      std::cerr << "note: LZ fit skipped: " << e.what() << "\n";
    }
  }
}

// --- lz-fit ---------------------------------------------------------------

struct LzArgs {
  std::string input;
  double ramp = 1.3;
  std::optional<double> dmu, frf;
};

void cmd_lz_fit(Run& run, const LzArgs& a) {
  const auto t = io::read_csv(io::read_file(a.input));
  const auto brf = t.values("brf_g");
  const auto eff = t.values(std::find(t.columns.begin(), t.columns.end(), "efficiency_sim") != t.columns.end()
                                ? "efficiency_sim"
                                : "efficiency");
  double dmu;
  if (a.dmu) {
    dmu = *a.dmu;
  } else {
    const auto m = run.manifold();
    const auto& cr = m.crossing(run.c.crossing);
    dmu = branch_slope_at_rf_crossing(frame_for(m, cr), parse_rf(m, cr, a.frf));
  }
  const auto fit = extract_lz_fit(brf, eff, a.ramp, dmu);
  std::printf("moment = %s +- %s MHz/G\n", io::fmt(fit.moment).c_str(), io::fmt(fit.moment_stderr).c_str());
  run.write_json("lz_fit.json", {{"moment_mhz_per_g", fit.moment}, {"moment_stderr_mhz_per_g", fit.moment_stderr},
                                 {"residual_norm", fit.residual_norm}, {"ramp_g_per_ms", a.ramp},
                                 {"dmu_mhz_per_g", dmu}});
  if (run.c.plot_data) run.write("fig2c.dat", io::plot_efficiency_vs_brf(brf, eff, fit, a.ramp, dmu, run.hash));
  run.summary["moment_mhz_per_g"] = fit.moment;
}

// --- scan -----------------------------------------------------------------

struct ScanArgs {
  bool at_b0 = false;
  std::optional<double> b;
  double brf = 0.002;
  std::optional<double> pulse_ms;
  int points = 41;
  std::optional<double> span_mhz;
  std::string method = "parabolic";
};

void cmd_scan(Run& run, const ScanArgs& a) {
  const auto m = run.manifold();
  const auto& cr = m.crossing(run.c.crossing);
  const CrossingFrame fr = frame_for(m, cr);
  if (a.at_b0 == a.b.has_value()) throw ValidationError("cli-io", "give exactly one of --at-b0 and --b");
  const double b = a.b.value_or(cr.b0);
  const CrossingFrame fb = fr.at(b);
  const double omega_r = rabi_frequency(fb, a.brf);
  const double pulse_ms = a.pulse_ms.value_or(units::us_to_ms(units::pi / omega_r));
  const double t_us = units::ms_to_us(pulse_ms);
  const double span = a.span_mhz.value_or(4.0 / t_us);
  if (a.points < 5) throw ValidationError("cli-io", "--points must be >= 5");
  std::vector<double> grid;
  const double center = splitting(fb);
  for (int i = 0; i < a.points; ++i) grid.push_back(center - span + 2.0 * span * i / (a.points - 1));
  ScanOptions so;
  so.propagate = run.propagate();
  const auto scan = simulate_resonance_scan(fr, b, pulse_ms, a.brf, grid, so);
  const auto pe = peak_frequency(scan, a.method == "rabi" ? PeakMethod::rabi_lineshape : PeakMethod::parabolic);
  std::printf("peak frequency = %s +- %s MHz at B = %s G\n", io::fmt(pe.frequency_mhz).c_str(),
              io::fmt(pe.uncertainty_mhz).c_str(), io::fmt(b).c_str());
  run.write_table("scan.csv", io::scan_table(scan));
  run.write_json("peak.json", {{"crossing", cr.id}, {"b_gauss", b},
                               {"peak_frequency_mhz", io::value_with_error(pe.frequency_mhz, pe.uncertainty_mhz)},
                               {"method", a.method}, {"pulse_length_ms", pulse_ms}, {"b_rf_g", a.brf}});
  run.summary["peak_frequency_mhz"] = pe.frequency_mhz;
}

// --- ramsey ---------------------------------------------------------------

struct NoiseArgs {
  double gradient = 0.0, cloud = 0.0, sigma = 0.0;
  std::string dist = "uniform-gaussian";

  std::optional<NoiseModel> model() const {
    if (gradient == 0.0 && cloud == 0.0 && sigma == 0.0) return std::nullopt;
    NoiseModel n{gradient, cloud, sigma,
                 dist == "gaussian" ? NoiseDistribution::gaussian : NoiseDistribution::uniform_gaussian};
    if (dist != "gaussian" && dist != "uniform-gaussian")
      throw ValidationError("cli-io", "--noise-dist must be gaussian or uniform-gaussian");
    n.validate();
    return n;
  }
};

struct RamseyArgs {
  bool at_b0 = false;
  std::optional<double> b;
  double detuning_khz = 5.0;
  double rabi_khz = 20.0;
  int holds = 61;
  double hold_max_ms = 1.0;
  std::size_t molecules = 32;
  NoiseArgs noise;
};

void cmd_ramsey(Run& run, const RamseyArgs& a) {
  const auto m = run.manifold();
  const auto& cr = m.crossing(run.c.crossing);
  const CrossingFrame fr = frame_for(m, cr);
  if (a.at_b0 == a.b.has_value()) throw ValidationError("cli-io", "give exactly one of --at-b0 and --b");
  const double b = a.b.value_or(cr.b0);
  const double f_rf = splitting(fr.at(b)) + a.detuning_khz * units::mhz_per_khz;
  std::vector<double> holds;
  for (int i = 0; i < a.holds; ++i) holds.push_back(a.hold_max_ms * i / (a.holds - 1));
  RamseyOptions ro;
  ro.propagate = run.propagate();
  ro.molecules_per_shot = a.molecules;
  const auto rec = simulate_ramsey(fr, b, f_rf, units::mhz_to_angular(a.rabi_khz * units::mhz_per_khz), holds,
                                   a.noise.model(), run.c.seed, ro);
  run.write_table("ramsey.csv", io::ramsey_table(rec));
  const auto ff = fringe_frequency(rec);
  const auto sp = ramsey_splitting(rec, ff.frequency_mhz);
  std::printf("fringe frequency = %s +- %s kHz, splitting = %s MHz\n",
              io::fmt(ff.frequency_mhz / units::mhz_per_khz).c_str(),
              io::fmt(ff.uncertainty_mhz / units::mhz_per_khz).c_str(), io::fmt(sp.splitting_mhz).c_str());
  run.write_json("fringe.json", {{"crossing", cr.id}, {"b_gauss", b}, {"f_rf_mhz", f_rf},
                                 {"fringe_frequency_mhz", io::value_with_error(ff.frequency_mhz, ff.uncertainty_mhz)},
                                 {"decay_time_ms", std::isinf(ff.decay_time_ms) ? json(nullptr) : json(ff.decay_time_ms)},
                                 {"splitting_mhz", sp.splitting_mhz}});
  if (run.c.plot_data) run.write("fig5b.dat", io::plot_fringe(rec, ff, run.hash));
  run.summary["fringe_frequency_mhz"] = ff.frequency_mhz;
}

// --- fit-hyperbola ----------------------------------------------------------

struct HyperbolaArgs {
  std::string input;
  NoiseArgs noise;
};

void cmd_fit_hyperbola(Run& run, const HyperbolaArgs& a) {
  const auto [pts, w] = io::points_from_table(io::read_csv(io::read_file(a.input)));
  const auto noise = a.noise.model();
  const FitResult fit = noise ? noise_averaged_fit(pts, w, *noise) : hyperbola_fit(pts, w);
  std::printf("delta_min = %s +- %s MHz, B0 = %s +- %s G, k = %s MHz/G%s\n", io::fmt(fit.params.delta_min).c_str(),
              io::fmt(fit.sigma.delta_min).c_str(), io::fmt(fit.params.b0).c_str(), io::fmt(fit.sigma.b0).c_str(),
              io::fmt(fit.params.k).c_str(), fit.ill_conditioned ? " (ill-conditioned)" : "");
  run.write_json("fit.json", io::fit_report(fit));
  if (run.c.plot_data) {
    run.write("fig4.dat", io::plot_splitting(pts, fit, run.hash));
    if (noise) run.write("fig5c.dat", io::plot_splitting_noise(pts, fit, *noise, run.hash));
  }
  run.summary["delta_min_mhz"] = fit.params.delta_min;
}

// --- plan / simulate-plan -------------------------------------------------

struct PlanArgs {
  std::string from, to;
  PlanPolicy policy;
  std::vector<std::string> turns;
};

TransportPlan make_plan(Run& run, const LevelManifold& m, PlanArgs a) {
  for (const auto& t : a.turns) a.policy.adiabatic_turns.insert(t);
  auto plan = plan_path(m, a.from, a.to, a.policy);
  run.write_json("plan.json", io::plan_to_json(plan));
  run.write_table("schedule.csv", io::schedule_table(plan.schedule));
  std::size_t n_atac = 0, n_jump = 0, n_turn = 0;
  for (const auto& x : plan.actions)
    (x.kind == ActionKind::atac ? n_atac : x.kind == ActionKind::diabatic_jump ? n_jump : n_turn)++;
  std::printf("%zu actions (%zu atac, %zu diabatic-jump, %zu adiabatic-turn), T = %s ms, survival = %s\n",
              plan.actions.size(), n_atac, n_jump, n_turn, io::fmt(plan.total_duration_ms).c_str(),
              io::fmt(plan.survival).c_str());
  run.summary["n_actions"] = plan.actions.size();
  run.summary["survival"] = plan.survival;
  run.summary["total_duration_ms"] = plan.total_duration_ms;
  return plan;
}

void cmd_simulate_plan(Run& run, const PlanArgs& a) {
  const auto m = run.manifold();
  const auto plan = make_plan(run, m, a);
  const auto sim = simulate_plan(m, plan, run.c.tol);
  std::ostringstream os;
  const auto md = run.meta();
  os << "# config_hash: " << md.config_hash << "\n";
  for (const auto& [k, v] : md.entries) os << "# " << k << ": " << v << "\n";
  os << "action,crossing,kind,predicted,simulated,flagged\n";
  for (std::size_t i = 0; i < sim.actions.size(); ++i) {
    const auto& s = sim.actions[i];
    os << i << "," << s.crossing_id << "," << to_string(s.kind) << "," << io::fmt(s.predicted) << ","
       << io::fmt(s.simulated) << "," << (s.flagged ? 1 : 0) << "\n";
    std::printf("%-4s %-15s predicted %-14s simulated %-14s%s\n", s.crossing_id.c_str(), to_string(s.kind),
                io::fmt(s.predicted).c_str(), io::fmt(s.simulated).c_str(), s.flagged ? "  FLAGGED" : "");
  }
  os << "# total: " << io::fmt(sim.total) << "\n";
  run.write("plan_simulation.csv", os.str());
  std::printf("simulated total = %s\n", io::fmt(sim.total).c_str());
  run.summary["simulated_total"] = sim.total;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"rf-driven transport through avoided-crossing manifolds"};
  app.require_subcommand(1);
  app.fallthrough();
  Common c;
  if (const char* env = std::getenv("RFCRUISE_OUTPUT_DIR")) c.out = env;
  if (c.out.empty()) c.out = ".";
  app.add_option("--manifold", c.manifold, "manifold file");
  app.add_option("--crossing", c.crossing, "crossing id");
  app.add_option("--seed", c.seed, "random seed")->capture_default_str();
  app.add_option("--out", c.out, "output directory (default $RFCRUISE_OUTPUT_DIR or .)");
  app.add_option("--tol", c.tol, "integrator tolerance")->capture_default_str();
  app.add_flag("--lax", c.lax, "warn instead of failing on unknown manifold keys");
  app.add_flag("--plot-data", c.plot_data, "also write gnuplot data files");
  app.add_option("--frame", c.frame, "lab or rwa")->capture_default_str();

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "ATAC transfer at one crossing");
  sim->add_option("--brf", sa.brf, "rf amplitude(s) in G")->capture_default_str();
  sim->add_option("--frf", sa.frf, "rf frequency in MHz (default 1.02 x splitting)");
  sim->add_option("--ramp", sa.ramp, "ramp speed in G/ms")->capture_default_str();
  sim->add_option("--b-from", sa.b_from, "ramp start field in G");
  sim->add_option("--b-to", sa.b_to, "ramp end field in G");
  sim->add_flag("--round-trip", sa.round_trip, "forward and reverse transfer");
  sim->add_option("--envelope", sa.envelope, "rf envelope: linear or rect")->capture_default_str();
  sim->add_option("--rise-us", sa.rise_us, "rf rise time in us")->capture_default_str();

  LzArgs la;
  auto* lz = app.add_subcommand("lz-fit", "Landau-Zener fit of efficiency vs rf amplitude");
  lz->add_option("--input", la.input, "CSV with brf_g and efficiency columns")->required();
  lz->add_option("--ramp", la.ramp, "ramp speed in G/ms")->capture_default_str();
  lz->add_option("--dmu", la.dmu, "differential moment in MHz/G (default: from --manifold/--crossing)");
  lz->add_option("--frf", la.frf, "rf frequency in MHz");

  ScanArgs sc;
  auto* scan = app.add_subcommand("scan", "resonant transfer scan and peak search");
  scan->add_flag("--at-b0", sc.at_b0, "scan at the crossing field");
  scan->add_option("--b", sc.b, "field in G");
  scan->add_option("--brf", sc.brf, "rf amplitude in G")->capture_default_str();
  scan->add_option("--pulse-ms", sc.pulse_ms, "pulse length in ms (default: pi pulse)");
  scan->add_option("--points", sc.points, "grid points")->capture_default_str();
  scan->add_option("--span-mhz", sc.span_mhz, "half-span of the grid in MHz");
  scan->add_option("--method", sc.method, "parabolic or rabi")->capture_default_str();

  auto add_noise = [](CLI::App* s, NoiseArgs& n) {
    s->add_option("--gradient", n.gradient, "field gradient in G/mm")->capture_default_str();
    s->add_option("--cloud", n.cloud, "cloud diameter in mm")->capture_default_str();
    s->add_option("--sigma-g", n.sigma, "temporal field noise in G")->capture_default_str();
    s->add_option("--noise-dist", n.dist, "gaussian or uniform-gaussian")->capture_default_str();
  };

  RamseyArgs ra;
  auto* ramsey = app.add_subcommand("ramsey", "Ramsey fringe simulation and fit");
  ramsey->add_flag("--at-b0", ra.at_b0, "at the crossing field");
  ramsey->add_option("--b", ra.b, "field in G");
  ramsey->add_option("--detuning-khz", ra.detuning_khz, "rf detuning from the splitting")->capture_default_str();
  ramsey->add_option("--rabi-khz", ra.rabi_khz, "Rabi frequency omega_R / 2 pi")->capture_default_str();
  ramsey->add_option("--holds", ra.holds, "number of hold times")->capture_default_str();
  ramsey->add_option("--hold-max-ms", ra.hold_max_ms, "longest hold time")->capture_default_str();
  ramsey->add_option("--molecules", ra.molecules, "noise samples per shot")->capture_default_str();
  add_noise(ramsey, ra.noise);

  HyperbolaArgs ha;
  auto* hyp = app.add_subcommand("fit-hyperbola", "fit splitting vs field");
  hyp->add_option("--input", ha.input, "CSV with b_gauss, splitting_mhz[, weight]")->required();
  add_noise(hyp, ha.noise);

  auto add_plan = [](CLI::App* s, PlanArgs& p) {
    s->add_option("--from", p.from, "start level")->required();
    s->add_option("--to", p.to, "goal level")->required();
    s->add_option("--brf", p.policy.atac_b_rf_g, "ATAC rf amplitude in G")->capture_default_str();
    s->add_option("--atac-ramp", p.policy.atac_ramp_g_per_ms, "ATAC ramp speed in G/ms")->capture_default_str();
    s->add_option("--travel-ramp", p.policy.travel_ramp_g_per_ms, "travel ramp speed in G/ms")->capture_default_str();
    s->add_option("--jump-ramp", p.policy.jump_ramp_g_per_ms, "diabatic jump ramp speed in G/ms")->capture_default_str();
    s->add_option("--jump-threshold", p.policy.jump_threshold_mhz, "largest jumpable splitting in MHz")
        ->capture_default_str();
    s->add_option("--detuning", p.policy.blue_detuning_fraction, "ATAC blue detuning fraction")->capture_default_str();
    s->add_option("--floor", p.policy.success_floor, "minimum predicted success for shifted windows")
        ->capture_default_str();
    s->add_option("--start-field", p.policy.start_field_g, "schedule start field in G");
    s->add_option("--end-field", p.policy.end_field_g, "schedule end field in G");
    s->add_option("--turn", p.turns, "crossings to traverse by adiabatic following");
    s->add_flag("--optimal", p.policy.optimal_survival, "route by predicted loss instead of hop count");
    s->add_flag("!--no-detour", p.policy.detour, "keep ATAC windows where the default places them");
  };
  PlanArgs pa, spa;
  auto* plan = app.add_subcommand("plan", "compile a route into a schedule");
  add_plan(plan, pa);
  auto* simplan = app.add_subcommand("simulate-plan", "compile and simulate every action");
  add_plan(simplan, spa);

  CLI11_PARSE(app, argc, argv);

  const auto t_start = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  Run run;
  run.c = c;
  CLI::App* sub = app.get_subcommands().front();
  run.command = sub->get_name();
  std::map<std::string, std::string> options;
  run.hash = io::fnv1a(config_string(app, *sub, c, options));
  int status = 0;
  std::string error;
  try {
    run.dir = c.out;
    fs::create_directories(run.dir);
    if (run.command == "simulate") cmd_simulate(run, sa);
    else if (run.command == "lz-fit") cmd_lz_fit(run, la);
    else if (run.command == "scan") cmd_scan(run, sc);
    else if (run.command == "ramsey") cmd_ramsey(run, ra);
    else if (run.command == "fit-hyperbola") cmd_fit_hyperbola(run, ha);
    else if (run.command == "plan") make_plan(run, run.manifold(), pa);
    else if (run.command == "simulate-plan") cmd_simulate_plan(run, spa);
  } catch (const std::exception& e) {
    error = e.what();
    std::cerr << "error: " << error << "\n";
    status = 2;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  json manifest = {{"command", run.command},
                   {"config_hash", run.hash},
                   {"seed", c.seed},
                   {"options", options},
                   {"manifold", c.manifold},
                   {"version", io::version},
                   {"started_utc", started},
                   {"finished_utc", utc_now()},
                   {"wall_time_s", wall},
                   {"outputs", run.outputs},
                   {"summary", run.summary},
                   {"exit_status", status}};
  if (!error.empty()) manifest["error"] = error;
  try {
    io::write_file((fs::path(c.out) / "manifest.json").string(), manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (status == 0) status = 2;
  }
  return status;
}
