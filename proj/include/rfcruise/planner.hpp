#pragma once

// Route compiler: finds a path through the crossing graph (levels are nodes,
// crossings are edges), picks an action per crossing, lays the actions out on
// one field ramp and estimates survival.
//
// Each traversal is modelled in the crossing's own two-level frame as a
// transfer from the branch named after the arrival level to the other branch.
// ATAC and diabatic jumps move population across; an adiabatic turn keeps it
// in its dressed branch.

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "rfcruise/crossing_model.hpp"
#include "rfcruise/dynamics.hpp"
#include "rfcruise/error.hpp"
#include "rfcruise/manifold.hpp"
#include "rfcruise/parallel.hpp"

namespace rfcruise {

enum class ActionKind { atac, diabatic_jump, adiabatic_turn };
enum class AtacWindow { late, early };

inline const char* to_string(ActionKind k) {
  switch (k) {
  case ActionKind::atac: return "atac";
  case ActionKind::diabatic_jump: return "diabatic-jump";
  case ActionKind::adiabatic_turn: return "adiabatic-turn";
  }
  return "?";
}

inline const char* to_string(AtacWindow w) { return w == AtacWindow::late ? "late" : "early"; }

struct PlanPolicy {
  double jump_threshold_mhz = 0.2;
  double atac_b_rf_g = 0.05;
  double atac_ramp_g_per_ms = 1.0;
  double blue_detuning_fraction = 0.02; // f_rf = (1 + fraction) * splitting
  double min_blue_detuning_mhz = 0.1;   // floor for narrow crossings
  double atac_half_window_g = 0.5;      // ramp half-span around the rf-induced crossing (capped at w)
  double rf_rise_time_us = 10.0;           // minimum; stretched to rise_rabi_cycles / omega_R
  double rise_rabi_cycles = 10.0;
  double jump_ramp_g_per_ms = 100.0;
  double jump_span_couplings = 20.0; // jump ramp covers |delta| <= this many couplings
  double travel_ramp_g_per_ms = 11.5;
  double endpoint_margin_g = 1.0;
  double detour_clearance_g = 1.5; // gap left between a shifted window and the crossing it avoids
  double success_floor = 0.9;
  bool detour = true;
  bool optimal_survival = false; // weight routes by predicted loss instead of hop count
  std::set<std::string> adiabatic_turns; // crossings to traverse by adiabatic following
  std::optional<double> start_field_g;
  std::optional<double> end_field_g;
};

struct CrossingAction {
  std::string crossing_id;
  ActionKind kind = ActionKind::atac;
  std::string from_level;
  std::string to_level;
  Branch start_branch = Branch::upper;
  AtacWindow window = AtacWindow::late;
  double b_rf_g = 0.0;
  double f_rf_mhz = 0.0;
  double ramp_g_per_ms = 0.0;
  double rise_time_us = 0.0;
  double b_start = 0.0; // action ramp endpoints
  double b_end = 0.0;
  double start_time_ms = 0.0;
  double predicted_success = 1.0;
};

struct TransportPlan {
  std::string start_level;
  std::string goal_level;
  std::vector<std::string> route; // levels visited, start to goal
  std::vector<CrossingAction> actions;
  PulseSchedule schedule;
  double total_duration_ms = 0.0;
  std::optional<double> lifetime_ms;
  double survival = 1.0;
  PlanPolicy policy;
};

/// exp(-T / tau) times the product of per-action success predictions.
inline double survival_estimate(const TransportPlan& plan, std::optional<double> lifetime_ms) {
  if (lifetime_ms && !(*lifetime_ms > 0.0))
    throw ValidationError("planner", "lifetime must be > 0");
  double p = 1.0;
  for (const auto& a : plan.actions) p *= a.predicted_success;
  if (lifetime_ms) p *= std::exp(-plan.total_duration_ms / *lifetime_ms);
  return p;
}

namespace detail {

inline double default_rf_frequency(double omega, const PlanPolicy& pol) {
  return omega + std::max(pol.blue_detuning_fraction * omega, pol.min_blue_detuning_mhz);
}

inline Branch arrival_branch(const AvoidedCrossing& c, const std::string& from) {
  return from == c.level_upper ? Branch::upper : Branch::lower;
}

// Fills in kind, parameters and window for a traversal in direction dir
// (-1: decreasing field). The window is the late one unless `rf_field` names
// the field of the rf-induced crossing to use.
inline void lay_out_action(CrossingAction& a, const LevelManifold& m, double dir,
                           const PlanPolicy& pol, std::optional<double> rf_field = {}) {
  const auto& c = m.crossing(a.crossing_id);
  const CrossingFrame fr = frame_for(m, c);
  const double dmu = std::abs(fr.dmu());
  if (a.kind == ActionKind::atac) {
    a.b_rf_g = pol.atac_b_rf_g;
    a.ramp_g_per_ms = pol.atac_ramp_g_per_ms;
    double b_rf_cross;
    if (rf_field) {
      b_rf_cross = *rf_field;
      a.window = (b_rf_cross - c.b0) * dir < 0 ? AtacWindow::early : AtacWindow::late;
      a.f_rf_mhz = std::hypot(c.coupling_omega, dmu * (b_rf_cross - c.b0));
    } else {
      a.window = AtacWindow::late;
      a.f_rf_mhz = default_rf_frequency(c.coupling_omega, pol);
      b_rf_cross = c.b0 + dir * rf_crossing_offset(fr, a.f_rf_mhz);
    }
    const double w = std::abs(b_rf_cross - c.b0);
    const double h = std::min(pol.atac_half_window_g, w);
    a.b_start = b_rf_cross - dir * h;
    a.b_end = b_rf_cross + dir * h;
    a.predicted_success = atac_predicted_success(fr, a.b_rf_g, a.f_rf_mhz, a.ramp_g_per_ms);
    // Weak drives need a slower switch-on to load the dressed state adiabatically.
    const double omega_r = a.b_rf_g > 0.0 ? rabi_frequency(fr.at(b_rf_cross), a.b_rf_g) : 0.0;
    const double window_us = units::ms_to_us(2.0 * h / a.ramp_g_per_ms);
    a.rise_time_us = pol.rf_rise_time_us;
    if (omega_r > 0.0) a.rise_time_us = std::max(a.rise_time_us, pol.rise_rabi_cycles / omega_r);
    a.rise_time_us = std::min(a.rise_time_us, 0.25 * window_us);
  } else {
    a.b_rf_g = 0.0;
    a.f_rf_mhz = 0.0;
    const double s = pol.jump_span_couplings * c.coupling_omega / dmu;
    a.b_start = c.b0 - dir * s;
    a.b_end = c.b0 + dir * s;
    if (a.kind == ActionKind::diabatic_jump) {
      a.ramp_g_per_ms = pol.jump_ramp_g_per_ms;
      a.predicted_success = diabatic_jump_probability(fr, a.ramp_g_per_ms);
    } else {
      a.ramp_g_per_ms = pol.travel_ramp_g_per_ms;
      a.predicted_success = 1.0 - diabatic_jump_probability(fr, a.ramp_g_per_ms);
    }
  }
}

inline double direction_of(const CrossingAction& a) { return a.b_end < a.b_start ? -1.0 : 1.0; }

// Chains the action ramps with rf-off travel ramps and fills in start times.
inline void assemble(TransportPlan& plan) {
  const auto& pol = plan.policy;
  PulseSchedule s;
  if (plan.actions.empty()) {
    s.b_initial = pol.start_field_g.value_or(0.0);
    if (pol.end_field_g && *pol.end_field_g != s.b_initial)
      s.ramp_to(*pol.end_field_g, std::abs(*pol.end_field_g - s.b_initial) / pol.travel_ramp_g_per_ms);
    plan.schedule = s;
    plan.total_duration_ms = s.total_duration_ms();
    plan.survival = survival_estimate(plan, plan.lifetime_ms);
    return;
  }
  const double dir0 = direction_of(plan.actions.front());
  s.b_initial = pol.start_field_g.value_or(plan.actions.front().b_start - dir0 * pol.endpoint_margin_g);
  double dir_prev = dir0;
  for (auto& a : plan.actions) {
    const double dir = direction_of(a);
    const double gap = a.b_start - s.b_final();
    if (gap * dir < 0.0)
      throw PlanError("planner", "crossing '" + a.crossing_id +
                      "': action window starts behind the current field (overlapping windows)");
    if (dir != dir_prev && gap != 0.0 && gap * dir_prev > 0.0)
      throw PlanError("planner", "crossing '" + a.crossing_id + "': route reverses direction inside a window");
    if (gap != 0.0) s.ramp_to(a.b_start, std::abs(gap) / pol.travel_ramp_g_per_ms);
    a.start_time_ms = s.total_duration_ms();
    const double dur = std::abs(a.b_end - a.b_start) / a.ramp_g_per_ms;
    if (a.kind == ActionKind::atac) {
      RfDrive rf;
      rf.amplitude_g = a.b_rf_g;
      rf.frequency_mhz = a.f_rf_mhz;
      rf.envelope = Envelope::linear_ramp;
      rf.rise_time_us = a.rise_time_us;
      // free-running source: phase referenced to the start of the schedule
      rf.phase_rad = std::fmod(units::two_pi * a.f_rf_mhz * units::ms_to_us(a.start_time_ms), units::two_pi);
      s.ramp_to(a.b_end, dur, rf);
    } else {
      s.ramp_to(a.b_end, dur);
    }
    dir_prev = dir;
  }
  const double b_stop =
      pol.end_field_g.value_or(plan.actions.back().b_end + dir_prev * pol.endpoint_margin_g);
  if ((b_stop - s.b_final()) * dir_prev < 0.0)
    throw PlanError("planner", "end field lies behind the last action window");
  if (b_stop != s.b_final()) s.ramp_to(b_stop, std::abs(b_stop - s.b_final()) / pol.travel_ramp_g_per_ms);
  s.validate();
  plan.schedule = std::move(s);
  plan.total_duration_ms = plan.schedule.total_duration_ms();
  plan.survival = survival_estimate(plan, plan.lifetime_ms);
}

struct Edge {
  std::size_t crossing;
  std::string to;
};

inline std::vector<std::string> find_route(const LevelManifold& m, const std::string& start,
                                           const std::string& goal, const PlanPolicy& pol,
                                           std::vector<std::size_t>& via) {
  std::map<std::string, std::vector<Edge>> adj;
  const auto& cs = m.crossings();
  for (std::size_t i = 0; i < cs.size(); ++i) {
    adj[cs[i].level_upper].push_back({i, cs[i].level_lower});
    adj[cs[i].level_lower].push_back({i, cs[i].level_upper});
  }
  std::map<std::string, std::pair<std::string, std::size_t>> parent;
  std::set<std::string> seen{start};
  if (!pol.optimal_survival) {
    std::queue<std::string> q;
    q.push(start);
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      if (u == goal) break;
      for (const auto& e : adj[u])
        if (seen.insert(e.to).second) {
          parent[e.to] = {u, e.crossing};
          q.push(e.to);
        }
    }
  } else {
    // Dijkstra on -log(predicted success) with the policy's default parameters.
    std::map<std::string, double> dist{{start, 0.0}};
    using Item = std::pair<double, std::string>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    pq.push({0.0, start});
    std::set<std::string> done;
    while (!pq.empty()) {
      const auto [d, u] = pq.top();
      pq.pop();
      if (!done.insert(u).second) continue;
      for (const auto& e : adj[u]) {
        const auto& c = cs[e.crossing];
        CrossingAction a;
        a.crossing_id = c.id;
        a.kind = pol.adiabatic_turns.count(c.id)           ? ActionKind::adiabatic_turn
                 : c.coupling_omega <= pol.jump_threshold_mhz ? ActionKind::diabatic_jump
                                                             : ActionKind::atac;
        lay_out_action(a, m, -1.0, pol);
        const double w = -std::log(std::max(a.predicted_success, 1e-300)) + 1e-12;
        const double nd = d + w;
        if (!dist.count(e.to) || nd < dist[e.to]) {
          dist[e.to] = nd;
          parent[e.to] = {u, e.crossing};
          seen.insert(e.to);
          pq.push({nd, e.to});
        }
      }
    }
  }
  if (!seen.count(goal))
    throw PlanError("planner", "goal level '" + goal + "' is unreachable from '" + start + "'");
  std::vector<std::string> route{goal};
  via.clear();
  for (std::string v = goal; v != start;) {
    const auto& [p, ci] = parent.at(v);
    via.push_back(ci);
    route.push_back(p);
    v = p;
  }
  std::reverse(route.begin(), route.end());
  std::reverse(via.begin(), via.end());
  return route;
}

} // namespace detail

/// Moves ATAC windows off crossings that the route does not traverse but that
/// the arriving level meets before the transfer: the transfer then happens at
/// the near-side rf-induced crossing, pushed past the obstacle if needed.
inline TransportPlan detour_check(const LevelManifold& m, TransportPlan plan) {
  const auto& pol = plan.policy;
  std::set<std::string> on_route;
  for (const auto& a : plan.actions) on_route.insert(a.crossing_id);
  bool changed = false;
  for (std::size_t i = 0; i < plan.actions.size(); ++i) {
    auto& a = plan.actions[i];
    if (a.kind != ActionKind::atac) continue;
    const auto& c = m.crossing(a.crossing_id);
    const double dir = detail::direction_of(a);
    const double b_prev = i == 0 ? plan.schedule.b_initial : plan.actions[i - 1].b_end;
    const double rf_cross = 0.5 * (a.b_start + a.b_end);
    // Crossings met on the arrival level between the previous waypoint and the transfer.
    std::optional<double> obstacle;
    std::string obstacle_id;
    for (const auto& y : m.crossings()) {
      if (on_route.count(y.id)) continue;
      if (y.level_upper != a.from_level && y.level_lower != a.from_level) continue;
      const bool before_transfer = (y.b0 - rf_cross) * dir < 0.0;
      const bool after_prev = (y.b0 - b_prev) * dir > 0.0;
      if (before_transfer && after_prev) {
        // the transfer has to happen before the first one met
        if (!obstacle || (y.b0 - *obstacle) * dir < 0.0) {
          obstacle = y.b0;
          obstacle_id = y.id;
        }
      }
    }
    if (!obstacle) continue;
    const CrossingFrame fr = frame_for(m, c);
    const double w_default = rf_crossing_offset(fr, detail::default_rf_frequency(c.coupling_omega, pol));
    const double near_side = c.b0 - dir * w_default;
    const double h = std::min(pol.atac_half_window_g, w_default);
    const double needed = *obstacle - dir * (h + pol.detour_clearance_g);
    // the shifted crossing must lie on the near side of the obstacle
    const double b_star = (needed - near_side) * dir < 0.0 ? needed : near_side;
    if ((b_star - c.b0) * dir > 0.0 || (b_star - *obstacle) * dir > 0.0)
      throw PlanError("planner", "crossing '" + a.crossing_id + "': no valid ATAC window avoids crossing '" +
                      obstacle_id + "'");
    const bool free_start = i == 0 && !pol.start_field_g;
    if (!free_start && (b_star - dir * h - b_prev) * dir < 0.0)
      throw PlanError("planner", "crossing '" + a.crossing_id + "': shifted window overlaps the previous action");
    CrossingAction shifted = a;
    detail::lay_out_action(shifted, m, dir, pol, b_star);
    if (shifted.predicted_success < pol.success_floor)
      throw PlanError("planner", "crossing '" + a.crossing_id + "': no valid ATAC window avoids crossing '" +
                      obstacle_id + "' (predicted success " + std::to_string(shifted.predicted_success) +
                      " at " + std::to_string(b_star) + " G is below the floor)");
    a = shifted;
    changed = true;
  }
  if (changed) detail::assemble(plan);
  return plan;
}

inline TransportPlan plan_path(const LevelManifold& m, const std::string& start_level,
                               const std::string& goal_level, const PlanPolicy& policy = {}) {
  if (!m.has_level(start_level)) throw PlanError("planner", "unknown start level '" + start_level + "'");
  if (!m.has_level(goal_level)) throw PlanError("planner", "unknown goal level '" + goal_level + "'");
  if (!(policy.travel_ramp_g_per_ms > 0.0) || !(policy.atac_ramp_g_per_ms > 0.0) ||
      !(policy.jump_ramp_g_per_ms > 0.0))
    throw ValidationError("planner", "ramp speeds must be > 0");
  TransportPlan plan;
  plan.start_level = start_level;
  plan.goal_level = goal_level;
  plan.lifetime_ms = m.lifetime_ms();
  plan.policy = policy;
  std::vector<std::size_t> via;
  plan.route = detail::find_route(m, start_level, goal_level, policy, via);

  // Travel direction: towards the next crossing, or down in field for the last one.
  double field = policy.start_field_g.value_or(std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < via.size(); ++k) {
    const auto& c = m.crossings()[via[k]];
    CrossingAction a;
    a.crossing_id = c.id;
    a.from_level = plan.route[k];
    a.to_level = plan.route[k + 1];
    a.start_branch = detail::arrival_branch(c, a.from_level);
    a.kind = policy.adiabatic_turns.count(c.id)              ? ActionKind::adiabatic_turn
             : c.coupling_omega <= policy.jump_threshold_mhz ? ActionKind::diabatic_jump
                                                             : ActionKind::atac;
    double dir;
    if (!std::isnan(field) && field != c.b0) {
      dir = c.b0 < field ? -1.0 : 1.0;
    } else if (k + 1 < via.size()) {
      dir = m.crossings()[via[k + 1]].b0 < c.b0 ? -1.0 : 1.0;
    } else {
      dir = -1.0;
    }
    detail::lay_out_action(a, m, dir, policy);
    field = a.b_end;
    plan.actions.push_back(a);
  }
  detail::assemble(plan);
  if (policy.detour) plan = detour_check(m, std::move(plan));
  return plan;
}

struct SimulatedAction {
  std::string crossing_id;
  ActionKind kind = ActionKind::atac;
  double predicted = 0.0;
  double simulated = 0.0;
  bool flagged = false; // |simulated - predicted| > 0.03
};

struct PlanSimulation {
  std::vector<SimulatedAction> actions;
  double product = 1.0; // product of simulated per-action efficiencies
  double total = 1.0;   // including lifetime loss over the plan duration
};

/// Runs every action through the propagator in its own two-level frame.
inline PlanSimulation simulate_plan(const LevelManifold& m, const TransportPlan& plan,
                                    double tol = 1e-9, unsigned threads = 0) {
  PlanSimulation out;
  out.actions.resize(plan.actions.size());
  PropagateOptions popt;
  popt.tol = tol;
  parallel_for(
      plan.actions.size(),
      [&](std::size_t i) {
        const auto& a = plan.actions[i];
        try {
          const CrossingFrame fr = frame_for(m, m.crossing(a.crossing_id));
          double eff;
          if (a.kind == ActionKind::atac) {
            AtacOptions ao;
            ao.start_branch = a.start_branch;
            ao.rise_time_us = a.rise_time_us;
            ao.propagate = popt;
            eff = atac_transfer(fr, a.b_rf_g, a.f_rf_mhz, a.b_start, a.b_end, a.ramp_g_per_ms, ao)
                      .efficiency;
          } else {
            PulseSchedule s;
            s.b_initial = a.b_start;
            s.ramp_to(a.b_end, std::abs(a.b_end - a.b_start) / a.ramp_g_per_ms);
            eff = run_transfer(fr, s, a.start_branch, popt).efficiency;
            if (a.kind == ActionKind::adiabatic_turn) eff = 1.0 - eff;
          }
          out.actions[i] = {a.crossing_id, a.kind, a.predicted_success, eff,
                            std::abs(eff - a.predicted_success) > 0.03};
        } catch (const Error& e) {
          throw PlanError("planner", "crossing '" + a.crossing_id + "': " + e.what());
        }
      },
      threads);
  for (const auto& s : out.actions) out.product *= s.simulated;
  out.total = out.product;
  if (plan.lifetime_ms) out.total *= std::exp(-plan.total_duration_ms / *plan.lifetime_ms);
  return out;
}

} // namespace rfcruise
