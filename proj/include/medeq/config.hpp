#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "medeq/csv.hpp"

namespace medeq {

inline constexpr const char* kVersion = "0.1.0";

// One validation or syntax problem. Line 0 marks issues that have no source
// line (overrides, missing sections).
struct ConfigIssue {
  int line = 0;
  std::string where;  // "[section] key" or "--set"
  std::string message;

  std::string text() const {
    std::string out = where.empty() ? "" : where + ": ";
    out += message;
    if (line > 0) out += " (line " + std::to_string(line) + ")";
    return out;
  }
};

struct PoleSpec {
  double wp = 0.0, w0 = 0.0, gamma = 0.0;
};

struct LayerSpec {
  bool vacuum = true;
  double thickness = 0.0;
  std::vector<PoleSpec> poles;
};

// Everything a run needs, fully defaulted and validated. Field order mirrors
// the canonical echo so the two stay in sync by inspection.
struct ScenarioConfig {
  std::string kind;

  std::vector<LayerSpec> layers;
  double medium_eta = 0.0;

  int n = 96;
  int k = 48;
  double lambda_max = 5.0;

  double t_final = 10.0;
  double dt = 0.0125;
  std::string method = "exact";  // exact | rk4
  double horizon = 10.0;
  int samples = 10;
  unsigned long long seed = 1;

  double omega_min = 0.2;
  double omega_max = 3.0;
  int n_omega = 16;
  double freq_eta = 0.0;

  double pulse_center = 24.0;
  double pulse_width = 1.0;
  double pulse_carrier = 0.0;
  std::string pulse_direction = "both";  // both | right

  std::string out_dir = "out";
};

struct ParseResult {
  ScenarioConfig config;
  std::vector<ConfigIssue> errors;
  std::vector<std::string> defaults_applied;  // "section.key = value"

  bool ok() const { return errors.empty(); }
};

namespace detail {

struct RawEntry {
  std::string value;
  int line = 0;
};

struct RawConfig {
  // section -> key -> entry; std::map keeps iteration canonical.
  std::map<std::string, std::map<std::string, RawEntry>> sections;
};

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> to_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<long long> to_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline RawConfig parse_lines(const std::string& text,
                             std::vector<ConfigIssue>& errors) {
  RawConfig raw;
  std::string section;
  int line_no = 0;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        errors.push_back({line_no, "", "malformed section header '" + line + "'"});
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      raw.sections[section];  // a bare header is a valid (empty) section
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back({line_no, "", "expected 'key = value', got '" + line + "'"});
      continue;
    }
    if (section.empty()) {
      errors.push_back({line_no, "", "key before any [section] header"});
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      errors.push_back({line_no, "[" + section + "]", "empty key"});
      continue;
    }
    auto [it, inserted] = raw.sections[section].emplace(key, RawEntry{value, line_no});
    if (!inserted)
      errors.push_back({line_no, "[" + section + "] " + key,
                        "duplicate key, first set on line " +
                            std::to_string(it->second.line)});
  }
  return raw;
}

inline void apply_overrides(RawConfig& raw, const std::vector<std::string>& overrides,
                            std::vector<ConfigIssue>& errors) {
  for (const std::string& o : overrides) {
    const std::size_t eq = o.find('=');
    const std::size_t dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0) {
      errors.push_back({0, "--set", "expected section.key=value, got '" + o + "'"});
      continue;
    }
    const std::string section = trim(o.substr(0, dot));
    const std::string key = trim(o.substr(dot + 1, eq - dot - 1));
    const std::string value = trim(o.substr(eq + 1));
    if (section.empty() || key.empty()) {
      errors.push_back({0, "--set", "expected section.key=value, got '" + o + "'"});
      continue;
    }
    raw.sections[section][key] = RawEntry{value, 0};
  }
}

// Pulls typed values out of one section, recording issues and defaults as it
// goes. Keys not taken by the end are unknown-key errors.
class SectionReader {
 public:
  SectionReader(RawConfig& raw, const std::string& name, ParseResult& res)
      : name_(name), res_(res) {
    auto it = raw.sections.find(name);
    if (it != raw.sections.end()) entries_ = &it->second;
  }

  bool present() const { return entries_ != nullptr; }

  const RawEntry* take(const std::string& key) {
    if (!entries_) return nullptr;
    auto it = entries_->find(key);
    if (it == entries_->end()) return nullptr;
    taken_.push_back(key);
    return &it->second;
  }

  double number(const std::string& key, double fallback, const char* constraint,
                bool (*valid)(double)) {
    const RawEntry* e = take(key);
    if (!e) {
      note_default(key, fmt17(fallback));
      return fallback;
    }
    const std::optional<double> v = to_double(e->value);
    if (!v) {
      fail(key, e->line, "expected a number, got '" + e->value + "'");
      return fallback;
    }
    if (!valid(*v)) {
      fail(key, e->line, std::string(constraint));
      return fallback;
    }
    return *v;
  }

  long long integer(const std::string& key, long long fallback,
                    const char* constraint, bool (*valid)(long long)) {
    const RawEntry* e = take(key);
    if (!e) {
      note_default(key, std::to_string(fallback));
      return fallback;
    }
    const std::optional<long long> v = to_int(e->value);
    if (!v) {
      fail(key, e->line, "expected an integer, got '" + e->value + "'");
      return fallback;
    }
    if (!valid(*v)) {
      fail(key, e->line, std::string(constraint));
      return fallback;
    }
    return *v;
  }

  std::string choice(const std::string& key, const std::string& fallback,
                     const std::vector<std::string>& allowed) {
    const RawEntry* e = take(key);
    if (!e) {
      note_default(key, fallback);
      return fallback;
    }
    if (std::find(allowed.begin(), allowed.end(), e->value) == allowed.end()) {
      std::string list;
      for (const std::string& a : allowed) list += (list.empty() ? "" : " | ") + a;
      fail(key, e->line, "must be one of {" + list + "}, got '" + e->value + "'");
      return fallback;
    }
    return e->value;
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const RawEntry* e = take(key);
    if (!e) {
      note_default(key, fallback);
      return fallback;
    }
    return e->value;
  }

  void fail(const std::string& key, int line, const std::string& message) {
    res_.errors.push_back({line, "[" + name_ + "] " + key, message});
  }

  void finish() {
    if (!entries_) return;
    for (const auto& [key, entry] : *entries_)
      if (std::find(taken_.begin(), taken_.end(), key) == taken_.end())
        res_.errors.push_back({entry.line, "[" + name_ + "] " + key, "unknown key"});
  }

 private:
  void note_default(const std::string& key, const std::string& value) {
    res_.defaults_applied.push_back(name_ + "." + key + " = " + value);
  }

  std::string name_;
  ParseResult& res_;
  std::map<std::string, RawEntry>* entries_ = nullptr;
  std::vector<std::string> taken_;
};

inline void parse_layers(SectionReader& medium, ParseResult& res) {
  std::vector<LayerSpec>& layers = res.config.layers;
  layers.clear();
  bool any_layer_key = false;
  for (int idx = 1;; ++idx) {
    const std::string key = "layer" + std::to_string(idx);
    const RawEntry* e = medium.take(key);
    if (!e) break;
    any_layer_key = true;
    const std::vector<std::string> tok = split_ws(e->value);
    LayerSpec layer;
    auto bad = [&](const std::string& msg) { medium.fail(key, e->line, msg); };
    if (tok.empty()) {
      bad("empty layer, expected 'vacuum <thickness>' or "
          "'lorentz <thickness> <wp> <w0> <gamma> [...]'");
      continue;
    }
    std::vector<double> nums;
    bool numeric_ok = true;
    for (std::size_t j = 1; j < tok.size(); ++j) {
      const std::optional<double> v = to_double(tok[j]);
      if (!v) {
        bad("expected a number, got '" + tok[j] + "'");
        numeric_ok = false;
        break;
      }
      nums.push_back(*v);
    }
    if (!numeric_ok) continue;
    if (tok[0] == "vacuum") {
      if (nums.size() != 1) {
        bad("vacuum layer takes exactly one number (thickness)");
        continue;
      }
    } else if (tok[0] == "lorentz") {
      if (nums.size() < 4 || (nums.size() - 1) % 3 != 0) {
        bad("lorentz layer takes thickness plus one or more (wp, w0, gamma) triples");
        continue;
      }
    } else {
      bad("unknown layer kind '" + tok[0] + "', expected vacuum or lorentz");
      continue;
    }
    layer.thickness = nums[0];
    if (!(layer.thickness > 0.0)) {
      bad("thickness must be > 0");
      continue;
    }
    if (tok[0] == "lorentz") {
      layer.vacuum = false;
      bool pole_ok = true;
      // The triple count was checked above, so j+2 stays in range.
      for (std::size_t j = 1; j < nums.size(); j += 3) {
        PoleSpec p{nums[j], nums[j + 1], nums[j + 2]};
        if (!(p.wp > 0.0)) {
          bad("wp must be > 0");
          pole_ok = false;
          break;
        }
        if (!(p.w0 > 0.0)) {
          bad("w0 must be > 0");
          pole_ok = false;
          break;
        }
        if (!(p.gamma > 0.0) || !(p.gamma < 2.0 * p.w0)) {
          bad("gamma must be in (0, 2*w0), underdamped poles only");
          pole_ok = false;
          break;
        }
        layer.poles.push_back(p);
      }
      if (!pole_ok) continue;
    }
    layers.push_back(layer);
  }
  // A medium section that never defines layer1 is an error of its own; a
  // missing section is reported by the caller, and a present-but-broken
  // layer line already carries its specific message.
  if (medium.present() && !any_layer_key)
    res.errors.push_back({0, "[medium] layer1", "at least one layer is required"});
}

}  // namespace detail

inline const std::vector<std::string>& config_kinds() {
  static const std::vector<std::string> kinds = {
      "dispersion", "green", "evolve", "eigen",
      "extract",    "equiv", "oracle", "accept"};
  return kinds;
}

// Full parse + validation. Never throws on bad input: every problem in the
// text lands in the error list so one round trip fixes them all.
inline ParseResult parse_config(const std::string& text, const std::string& kind,
                                const std::vector<std::string>& overrides = {}) {
  ParseResult res;
  res.config.kind = kind;
  if (std::find(config_kinds().begin(), config_kinds().end(), kind) ==
      config_kinds().end())
    res.errors.push_back({0, "kind", "unknown scenario kind '" + kind + "'"});

  detail::RawConfig raw = detail::parse_lines(text, res.errors);
  detail::apply_overrides(raw, overrides, res.errors);

  for (const auto& [name, entries] : raw.sections)
    if (name != "medium" && name != "grid" && name != "run" &&
        name != "frequencies" && name != "pulse" && name != "output") {
      int line = entries.empty() ? 0 : entries.begin()->second.line;
      res.errors.push_back({line, "[" + name + "]", "unknown section"});
    }

  ScenarioConfig& c = res.config;

  detail::SectionReader medium(raw, "medium", res);
  if (!medium.present() && kind != "accept")
    res.errors.push_back({0, "[medium]", "required section is missing"});
  detail::parse_layers(medium, res);
  if (!medium.present() && kind == "accept") {
    c.layers = {LayerSpec{true, 10.0, {}}};
    res.defaults_applied.push_back("medium.layer1 = vacuum 10");
  }
  c.medium_eta = medium.number("eta", 0.0, "eta must be >= 0",
                               [](double v) { return v >= 0.0; });
  medium.finish();

  detail::SectionReader grid(raw, "grid", res);
  if (!grid.present() && kind != "accept")
    res.errors.push_back({0, "[grid]", "required section is missing"});
  c.n = (int)grid.integer("n", 96, "n must be in [8, 100000]",
                          [](long long v) { return v >= 8 && v <= 100000; });
  c.k = (int)grid.integer("k", 48, "k must be in [1, 100000]",
                          [](long long v) { return v >= 1 && v <= 100000; });
  c.lambda_max = grid.number("lambda_max", 5.0, "lambda_max must be > 0",
                             [](double v) { return v > 0.0; });
  grid.finish();

  detail::SectionReader run(raw, "run", res);
  const std::string declared = run.text("kind", kind);
  if (declared != kind)
    run.fail("kind", 0,
             "config declares kind '" + declared + "' but the subcommand is '" +
                 kind + "'");
  c.t_final = run.number("t_final", 10.0, "t_final must be > 0",
                         [](double v) { return v > 0.0; });
  c.dt = run.number("dt", 0.0125, "dt must be > 0", [](double v) { return v > 0.0; });
  c.method = run.choice("method", "exact", {"exact", "rk4"});
  c.horizon = run.number("horizon", 10.0, "horizon must be > 0",
                         [](double v) { return v > 0.0; });
  c.samples = (int)run.integer("samples", 10, "samples must be >= 3",
                               [](long long v) { return v >= 3; });
  {
    const detail::RawEntry* e = run.take("seed");
    if (!e) {
      res.defaults_applied.push_back("run.seed = 1");
      c.seed = 1;
    } else {
      const std::optional<long long> v = detail::to_int(e->value);
      if (!v || *v < 0)
        run.fail("seed", e->line, "seed must be a non-negative integer");
      else
        c.seed = (unsigned long long)*v;
    }
  }
  run.finish();

  detail::SectionReader freq(raw, "frequencies", res);
  c.omega_min = freq.number("omega_min", 0.2, "omega_min must be >= 0",
                            [](double v) { return v >= 0.0; });
  c.omega_max = freq.number("omega_max", 3.0, "omega_max must be > 0",
                            [](double v) { return v > 0.0; });
  c.n_omega = (int)freq.integer("count", 16, "count must be in [2, 1000000]",
                                [](long long v) { return v >= 2 && v <= 1000000; });
  c.freq_eta = freq.number("eta", 0.0, "eta must be >= 0",
                           [](double v) { return v >= 0.0; });
  if (!(c.omega_max > c.omega_min))
    freq.fail("omega_max", 0, "omega_max must exceed omega_min");
  freq.finish();

  detail::SectionReader pulse(raw, "pulse", res);
  c.pulse_center = pulse.number("center", 24.0, "center must be finite",
                                [](double) { return true; });
  c.pulse_width = pulse.number("width", 1.0, "width must be > 0",
                               [](double v) { return v > 0.0; });
  c.pulse_carrier = pulse.number("carrier", 0.0, "carrier must be >= 0",
                                 [](double v) { return v >= 0.0; });
  c.pulse_direction = pulse.choice("direction", "both", {"both", "right"});
  pulse.finish();

  detail::SectionReader output(raw, "output", res);
  c.out_dir = output.text("dir", "out");
  output.finish();

  return res;
}

// Canonical text form: every field, fixed order, 17-digit floats. Feeding the
// echo back through parse_config reproduces the same ScenarioConfig, which is
// the manifest round-trip guarantee.
inline std::string echo_config(const ScenarioConfig& c) {
  std::string s;
  s += "[medium]\n";
  for (std::size_t i = 0; i < c.layers.size(); ++i) {
    const LayerSpec& l = c.layers[i];
    s += "layer" + std::to_string(i + 1) + " = ";
    if (l.vacuum) {
      s += "vacuum " + fmt17(l.thickness);
    } else {
      s += "lorentz " + fmt17(l.thickness);
      for (const PoleSpec& p : l.poles)
        s += " " + fmt17(p.wp) + " " + fmt17(p.w0) + " " + fmt17(p.gamma);
    }
    s += "\n";
  }
  s += "eta = " + fmt17(c.medium_eta) + "\n";
  s += "[grid]\n";
  s += "n = " + std::to_string(c.n) + "\n";
  s += "k = " + std::to_string(c.k) + "\n";
  s += "lambda_max = " + fmt17(c.lambda_max) + "\n";
  s += "[run]\n";
  s += "kind = " + c.kind + "\n";
  s += "t_final = " + fmt17(c.t_final) + "\n";
  s += "dt = " + fmt17(c.dt) + "\n";
  s += "method = " + c.method + "\n";
  s += "horizon = " + fmt17(c.horizon) + "\n";
  s += "samples = " + std::to_string(c.samples) + "\n";
  s += "seed = " + std::to_string(c.seed) + "\n";
  s += "[frequencies]\n";
  s += "omega_min = " + fmt17(c.omega_min) + "\n";
  s += "omega_max = " + fmt17(c.omega_max) + "\n";
  s += "count = " + std::to_string(c.n_omega) + "\n";
  s += "eta = " + fmt17(c.freq_eta) + "\n";
  s += "[pulse]\n";
  s += "center = " + fmt17(c.pulse_center) + "\n";
  s += "width = " + fmt17(c.pulse_width) + "\n";
  s += "carrier = " + fmt17(c.pulse_carrier) + "\n";
  s += "direction = " + c.pulse_direction + "\n";
  s += "[output]\n";
  s += "dir = " + c.out_dir + "\n";
  return s;
}

inline bool operator==(const PoleSpec& a, const PoleSpec& b) {
  return a.wp == b.wp && a.w0 == b.w0 && a.gamma == b.gamma;
}
inline bool operator==(const LayerSpec& a, const LayerSpec& b) {
  return a.vacuum == b.vacuum && a.thickness == b.thickness && a.poles == b.poles;
}
inline bool operator==(const ScenarioConfig& a, const ScenarioConfig& b) {
  return echo_config(a) == echo_config(b);
}

}  // namespace medeq
