#pragma once

// Level manifold data model: bare molecular levels that are linear in the
// magnetic field, the avoided crossings between them, and the manifold file
// format.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfcruise/error.hpp"

namespace rfcruise {

struct QuantumLabels {
  int l = 0;
  int F_tot = 0;
  int m_Ftot = 0;
  int F = 0;
  int f1 = 0;
  int f2 = 0;
  int nu = 0;

  friend bool operator==(const QuantumLabels&, const QuantumLabels&) = default;
};

struct BareLevel {
  std::string id;
  QuantumLabels labels;
  double energy_at_zero = 0.0;  // MHz, relative to the f1 = f2 = 1 threshold
  double magnetic_moment = 0.0; // MHz/G

  double energy(double field_g) const { return energy_at_zero + magnetic_moment * field_g; }

  friend bool operator==(const BareLevel&, const BareLevel&) = default;
};

struct AvoidedCrossing {
  std::string id;
  std::string level_lower;
  std::string level_upper;
  double coupling_omega = 0.0; // minimal splitting, MHz
  double b0 = 0.0;             // G

  friend bool operator==(const AvoidedCrossing&, const AvoidedCrossing&) = default;
};

/// Immutable after construction via load_manifold / make_manifold.
class LevelManifold {
public:
  LevelManifold() = default;

  const std::vector<BareLevel>& levels() const { return levels_; }
  const std::vector<AvoidedCrossing>& crossings() const { return crossings_; }
  std::optional<double> lifetime_ms() const { return lifetime_ms_; }

  const BareLevel& level(const std::string& id) const {
    for (const auto& lv : levels_)
      if (lv.id == id) return lv;
    throw ValidationError("manifold", "unknown level '" + id + "'");
  }

  const AvoidedCrossing& crossing(const std::string& id) const {
    for (const auto& c : crossings_)
      if (c.id == id) return c;
    throw ValidationError("manifold", "unknown crossing '" + id + "'");
  }

  bool has_level(const std::string& id) const {
    return std::any_of(levels_.begin(), levels_.end(), [&](auto& l) { return l.id == id; });
  }

  friend bool operator==(const LevelManifold&, const LevelManifold&) = default;

private:
  friend LevelManifold make_manifold(std::vector<BareLevel>, std::vector<AvoidedCrossing>,
                                     std::optional<double>);
  std::vector<BareLevel> levels_;
  std::vector<AvoidedCrossing> crossings_;
  std::optional<double> lifetime_ms_;
};

inline constexpr double crossing_field_tolerance_g = 1e-6;
inline constexpr int allowed_partial_waves[] = {0, 2, 4};

/// Validates and assembles a manifold. Crossings are returned sorted by
/// descending crossing field.
inline LevelManifold make_manifold(std::vector<BareLevel> levels,
                                   std::vector<AvoidedCrossing> crossings,
                                   std::optional<double> lifetime_ms = std::nullopt) {
  std::map<std::string, const BareLevel*> by_id;
  for (const auto& lv : levels) {
    if (lv.id.empty()) throw ValidationError("manifold", "level with empty id");
    if (!by_id.emplace(lv.id, &lv).second)
      throw ValidationError("manifold", "duplicate level id '" + lv.id + "'");
    if (std::find(std::begin(allowed_partial_waves), std::end(allowed_partial_waves),
                  lv.labels.l) == std::end(allowed_partial_waves))
      throw ValidationError("manifold", "level '" + lv.id + "': partial wave l = " +
                                            std::to_string(lv.labels.l) + " not in {0, 2, 4}");
    if (!std::isfinite(lv.energy_at_zero) || !std::isfinite(lv.magnetic_moment))
      throw ValidationError("manifold", "level '" + lv.id + "': non-finite energy or moment");
    if (lv.energy_at_zero > 0.0)
      throw ValidationError("manifold", "level '" + lv.id +
                                            "': energy_at_zero must be <= 0 for a bound level");
  }

  std::set<std::string> crossing_ids;
  for (const auto& c : crossings) {
    if (!crossing_ids.insert(c.id).second)
      throw ValidationError("manifold", "duplicate crossing id '" + c.id + "'");
    auto lo = by_id.find(c.level_lower);
    auto up = by_id.find(c.level_upper);
    if (lo == by_id.end())
      throw ValidationError("manifold", "crossing '" + c.id + "': unknown level '" +
                                            c.level_lower + "'");
    if (up == by_id.end())
      throw ValidationError("manifold", "crossing '" + c.id + "': unknown level '" +
                                            c.level_upper + "'");
    if (c.level_lower == c.level_upper)
      throw ValidationError("manifold", "crossing '" + c.id + "': level coupled to itself");
    if (!(c.coupling_omega > 0.0))
      throw ValidationError("manifold", "crossing '" + c.id + "': splitting must be > 0");
    const BareLevel& a = *lo->second;
    const BareLevel& b = *up->second;
    if (a.magnetic_moment == b.magnetic_moment)
      throw ValidationError("manifold", "crossing '" + c.id + "': levels '" + a.id + "' and '" +
                                            b.id + "' have equal magnetic moments");
    const double b_cross = (b.energy_at_zero - a.energy_at_zero) /
                           (a.magnetic_moment - b.magnetic_moment);
    if (std::abs(b_cross - c.b0) > crossing_field_tolerance_g) {
      std::ostringstream os;
      os.precision(12);
      os << "crossing '" << c.id << "': b0 = " << c.b0 << " G but levels intersect at "
         << b_cross << " G";
      throw ValidationError("manifold", os.str());
    }
  }

  std::stable_sort(crossings.begin(), crossings.end(),
                   [](const auto& x, const auto& y) { return x.b0 > y.b0; });
  for (std::size_t i = 1; i < crossings.size(); ++i)
    if (crossings[i].b0 == crossings[i - 1].b0)
      throw ValidationError("manifold", "crossings '" + crossings[i - 1].id + "' and '" +
                                            crossings[i].id + "' share the same field");

  if (lifetime_ms && !(*lifetime_ms > 0.0))
    throw ValidationError("manifold", "lifetime_ms must be > 0");

  LevelManifold m;
  m.levels_ = std::move(levels);
  m.crossings_ = std::move(crossings);
  m.lifetime_ms_ = lifetime_ms;
  return m;
}

struct LoadOptions {
  bool strict = true; // unknown keys are errors; otherwise warnings
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> known,
                       const std::string& where, const LoadOptions& opt,
                       std::vector<std::string>* warnings) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (ok) continue;
    std::string msg = where + ": unknown key '" + it.key() + "'";
    if (opt.strict) throw ParseError("manifold", msg);
    if (warnings) warnings->push_back(msg);
  }
}

template <class T>
T require(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    throw ParseError("manifold", where + ": missing key '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifold", where + ": bad value for '" + key + "': " + e.what());
  }
}

} // namespace detail

inline LevelManifold parse_manifold(const std::string& text, const LoadOptions& opt = {},
                                    std::vector<std::string>* warnings = nullptr) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("manifold", std::string("malformed document: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("manifold", "top level must be an object");
  detail::check_keys(doc, {"levels", "crossings", "lifetime_ms"}, "document", opt, warnings);

  std::vector<BareLevel> levels;
  if (doc.contains("levels")) {
    if (!doc["levels"].is_array()) throw ParseError("manifold", "'levels' must be a list");
    for (const auto& jl : doc["levels"]) {
      BareLevel lv;
      lv.id = detail::require<std::string>(jl, "id", "level");
      const std::string where = "level '" + lv.id + "'";
      detail::check_keys(jl, {"id", "labels", "energy_at_zero_mhz", "magnetic_moment_mhz_per_g"},
                         where, opt, warnings);
      const auto& lab = jl.contains("labels") ? jl["labels"] : nlohmann::json::object();
      if (!jl.contains("labels")) throw ParseError("manifold", where + ": missing key 'labels'");
      detail::check_keys(lab, {"l", "F_tot", "m_Ftot", "F", "f1", "f2", "nu"}, where + " labels",
                         opt, warnings);
      const std::string lw = where + " labels";
      lv.labels = {detail::require<int>(lab, "l", lw),  detail::require<int>(lab, "F_tot", lw),
                   detail::require<int>(lab, "m_Ftot", lw), detail::require<int>(lab, "F", lw),
                   detail::require<int>(lab, "f1", lw), detail::require<int>(lab, "f2", lw),
                   detail::require<int>(lab, "nu", lw)};
      lv.energy_at_zero = detail::require<double>(jl, "energy_at_zero_mhz", where);
      lv.magnetic_moment = detail::require<double>(jl, "magnetic_moment_mhz_per_g", where);
      levels.push_back(std::move(lv));
    }
  }

  std::vector<AvoidedCrossing> crossings;
  if (doc.contains("crossings")) {
    if (!doc["crossings"].is_array()) throw ParseError("manifold", "'crossings' must be a list");
    for (const auto& jc : doc["crossings"]) {
      AvoidedCrossing c;
      c.id = detail::require<std::string>(jc, "id", "crossing");
      const std::string where = "crossing '" + c.id + "'";
      detail::check_keys(jc, {"id", "lower", "upper", "splitting_min_mhz", "b0_gauss"}, where, opt,
                         warnings);
      c.level_lower = detail::require<std::string>(jc, "lower", where);
      c.level_upper = detail::require<std::string>(jc, "upper", where);
      c.coupling_omega = detail::require<double>(jc, "splitting_min_mhz", where);
      c.b0 = detail::require<double>(jc, "b0_gauss", where);
      crossings.push_back(std::move(c));
    }
  }

  std::optional<double> lifetime;
  if (doc.contains("lifetime_ms") && !doc["lifetime_ms"].is_null())
    lifetime = detail::require<double>(doc, "lifetime_ms", "document");

  return make_manifold(std::move(levels), std::move(crossings), lifetime);
}

inline LevelManifold load_manifold(const std::string& path, const LoadOptions& opt = {},
                                   std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw ParseError("manifold", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifold(ss.str(), opt, warnings);
}

inline nlohmann::json manifold_to_json(const LevelManifold& m) {
  nlohmann::json doc;
  doc["levels"] = nlohmann::json::array();
  for (const auto& lv : m.levels()) {
    doc["levels"].push_back({{"id", lv.id},
                             {"labels",
                              {{"l", lv.labels.l},
                               {"F_tot", lv.labels.F_tot},
                               {"m_Ftot", lv.labels.m_Ftot},
                               {"F", lv.labels.F},
                               {"f1", lv.labels.f1},
                               {"f2", lv.labels.f2},
                               {"nu", lv.labels.nu}}},
                             {"energy_at_zero_mhz", lv.energy_at_zero},
                             {"magnetic_moment_mhz_per_g", lv.magnetic_moment}});
  }
  doc["crossings"] = nlohmann::json::array();
  for (const auto& c : m.crossings()) {
    doc["crossings"].push_back({{"id", c.id},
                                {"lower", c.level_lower},
                                {"upper", c.level_upper},
                                {"splitting_min_mhz", c.coupling_omega},
                                {"b0_gauss", c.b0}});
  }
  if (m.lifetime_ms()) doc["lifetime_ms"] = *m.lifetime_ms();
  return doc;
}

inline void save_manifold(const LevelManifold& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("manifold", "cannot write '" + path + "'");
  out << manifold_to_json(m).dump(2) << '\n';
}

struct CrossingCandidate {
  std::string level_a;
  std::string level_b;
  double b0 = 0.0;
};

/// Every pairwise intersection of the linear levels inside [b_min, b_max],
/// sorted by descending field.
inline std::vector<CrossingCandidate> find_crossings(const std::vector<BareLevel>& levels,
                                                     double b_min, double b_max) {
  if (!(b_min < b_max))
    throw ValidationError("manifold", "find_crossings: empty field range");
  std::vector<CrossingCandidate> out;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    for (std::size_t j = i + 1; j < levels.size(); ++j) {
      const auto& a = levels[i];
      const auto& b = levels[j];
      const double dmu = a.magnetic_moment - b.magnetic_moment;
      if (dmu == 0.0) continue;
      const double b0 = (b.energy_at_zero - a.energy_at_zero) / dmu;
      if (b0 >= b_min && b0 <= b_max) out.push_back({a.id, b.id, b0});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](auto& x, auto& y) { return x.b0 > y.b0; });
  return out;
}

inline std::map<std::string, double> bare_energies(const LevelManifold& m, double field_g) {
  std::map<std::string, double> e;
  for (const auto& lv : m.levels()) e[lv.id] = lv.energy(field_g);
  return e;
}

} // namespace rfcruise
