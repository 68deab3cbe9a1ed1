#include "tmi/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace tmi {

std::string_view name(JobType t) {
  switch (t) {
    case JobType::SingleStage: return "single-stage";
    case JobType::GreenExtract: return "green-extract";
    case JobType::Cascade: return "cascade";
    case JobType::ZetaSweep: return "zeta-sweep";
    case JobType::NSweep: return "n-sweep";
    case JobType::ThetaScan: return "theta-scan";
    case JobType::ChirpCheck: return "chirp-check";
  }
  return "unknown";
}

double StageBlock::pump_width() const {
  if (tau_p) return *tau_p;
  return mixing == Mixing::ThreeWave ? 1 / zeta : 1 / (2 * collision_ratio);
}

double StageBlock::pump_width_q() const {
  if (tau_q) return *tau_q;
  return tau_p ? *tau_p : 1 / (2 * collision_ratio);
}

TimeGrid ExperimentConfig::time_grid(int grid_scale) const {
  if (grid_scale < 1) throw Error(Errc::InvalidArgument, "grid scale must be >= 1");
  GridBlock g = grid;
  if (!grid_given && stage.mixing == Mixing::FourWave) g = {4, 8192};
  return TimeGrid::centered(g.span, g.n_samples * grid_scale);
}

double ExperimentConfig::resolved_target_ce() const {
  return stage.target_ce.value_or(multistage_target_ce(cascade.stages));
}

namespace {

struct Entry {
  std::string value;
  int line;
};

using Section = std::map<std::string, Entry>;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

[[noreturn]] void bad_value(const std::string& key, const Entry& e, const std::string& why) {
  throw Error(Errc::ParseError,
              "line " + std::to_string(e.line) + ": " + key + " = " + e.value + " (" + why + ")");
}

double to_double(const std::string& key, const Entry& e, std::string_view s) {
  const std::string t = trim(s);
  double v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) bad_value(key, e, "expected a number");
  return v;
}

long long to_int(const std::string& key, const Entry& e, std::string_view s) {
  const std::string t = trim(s);
  long long v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) bad_value(key, e, "expected an integer");
  return v;
}

bool to_bool(const std::string& key, const Entry& e) {
  const std::string v = lower(e.value);
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  bad_value(key, e, "expected on/off");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"job", {"type"}},
      {"grid", {"span", "n_samples"}},
      {"stage",
       {"mixing", "zeta", "tau_p", "tau_q", "collision_ratio", "gamma", "target_ce", "pump_shape",
        "gvm_partner", "dispersion_sign", "chirp", "chirp_eps_p", "chirp_eps_q", "kappa_p", "kappa_q",
        "basis_size"}},
      {"cascade",
       {"stages", "configuration", "theta", "r_input_modes", "theta_min", "theta_max", "theta_steps"}},
      {"scan", {"zeta_values", "n_values", "gamma_values", "chirp_pairs"}},
      {"output", {"directory", "formats", "export_full_matrices"}},
  };
  return s;
}

std::map<std::string, Section> tokenize(std::string_view text) {
  std::map<std::string, Section> out;
  std::string current;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find_first_of("#;");
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3)
        throw Error(Errc::ParseError, "line " + std::to_string(line) + ": malformed section header");
      current = lower(trim(s.substr(1, s.size() - 2)));
      if (!schema().count(current))
        throw Error(Errc::UnknownKey, "line " + std::to_string(line) + ": unknown section [" + current + "]");
      if (out.count(current))
        throw Error(Errc::ParseError, "line " + std::to_string(line) + ": duplicate section [" + current + "]");
      out[current];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::ParseError, "line " + std::to_string(line) + ": expected key = value");
    if (current.empty())
      throw Error(Errc::ParseError, "line " + std::to_string(line) + ": key outside any section");
    const std::string key = lower(trim(s.substr(0, eq)));
    const std::string value = trim(s.substr(eq + 1));
    if (!schema().at(current).count(key))
      throw Error(Errc::UnknownKey,
                  "line " + std::to_string(line) + ": unknown key '" + key + "' in [" + current + "]");
    if (value.empty())
      throw Error(Errc::ParseError, "line " + std::to_string(line) + ": empty value for " + key);
    if (!out[current].emplace(key, Entry{value, line}).second)
      throw Error(Errc::ParseError, "line " + std::to_string(line) + ": duplicate key " + key);
  }
  return out;
}

JobType parse_job(const Entry& e) {
  static const std::map<std::string, JobType> m{
      {"single-stage", JobType::SingleStage}, {"green-extract", JobType::GreenExtract},
      {"cascade", JobType::Cascade},          {"zeta-sweep", JobType::ZetaSweep},
      {"n-sweep", JobType::NSweep},           {"theta-scan", JobType::ThetaScan},
      {"chirp-check", JobType::ChirpCheck}};
  auto it = m.find(lower(e.value));
  if (it == m.end()) bad_value("type", e, "unknown job type");
  return it->second;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  const auto sections = tokenize(text);
  ExperimentConfig cfg;
  cfg.source = std::string(text);

  auto each = [&](const std::string& sec, auto&& fn) {
    auto it = sections.find(sec);
    if (it == sections.end()) return;
    for (const auto& [k, e] : it->second) fn(k, e);
  };

  each("job", [&](const std::string&, const Entry& e) { cfg.job = parse_job(e); });

  each("grid", [&](const std::string& k, const Entry& e) {
    cfg.grid_given = true;
    if (k == "span") cfg.grid.span = to_double(k, e, e.value);
    if (k == "n_samples") cfg.grid.n_samples = to_int(k, e, e.value);
  });

  StageBlock& st = cfg.stage;
  each("stage", [&](const std::string& k, const Entry& e) {
    const std::string v = lower(e.value);
    if (k == "mixing") {
      if (v == "twm") st.mixing = Mixing::ThreeWave;
      else if (v == "fwm") st.mixing = Mixing::FourWave;
      else bad_value(k, e, "expected twm or fwm");
    } else if (k == "zeta") st.zeta = to_double(k, e, e.value);
    else if (k == "tau_p") st.tau_p = to_double(k, e, e.value);
    else if (k == "tau_q") st.tau_q = to_double(k, e, e.value);
    else if (k == "collision_ratio") st.collision_ratio = to_double(k, e, e.value);
    else if (k == "gamma") st.gamma = to_double(k, e, e.value);
    else if (k == "target_ce") st.target_ce = to_double(k, e, e.value);
    else if (k == "pump_shape") {
      if (v != "gaussian") bad_value(k, e, "only gaussian pumps are supported");
    } else if (k == "gvm_partner") {
      if (v == "s") st.gvm_partner = Channel::S;
      else if (v == "r") st.gvm_partner = Channel::R;
      else bad_value(k, e, "expected s or r");
    } else if (k == "dispersion_sign") {
      const long long s = to_int(k, e, e.value);
      if (s != 1 && s != -1) bad_value(k, e, "expected +1 or -1");
      st.dispersion_sign = int(s);
    } else if (k == "chirp") st.chirp = to_bool(k, e);
    else if (k == "chirp_eps_p") st.chirp_eps_p = to_double(k, e, e.value);
    else if (k == "chirp_eps_q") st.chirp_eps_q = to_double(k, e, e.value);
    else if (k == "kappa_p") st.kappa_p = to_double(k, e, e.value);
    else if (k == "kappa_q") st.kappa_q = to_double(k, e, e.value);
    else if (k == "basis_size") st.basis_size = to_int(k, e, e.value);
  });

  CascadeBlock& cb = cfg.cascade;
  each("cascade", [&](const std::string& k, const Entry& e) {
    if (k == "stages") cb.stages = int(to_int(k, e, e.value));
    else if (k == "configuration") {
      const std::string v = lower(e.value);
      if (v == "rc") cb.configuration = Configuration::RC;
      else if (v == "dc") cb.configuration = Configuration::DC;
      else bad_value(k, e, "expected rc or dc");
    } else if (k == "theta") cb.theta = to_double(k, e, e.value);
    else if (k == "r_input_modes") cb.r_input_modes = to_bool(k, e);
    else if (k == "theta_min") cb.theta_min = to_double(k, e, e.value);
    else if (k == "theta_max") cb.theta_max = to_double(k, e, e.value);
    else if (k == "theta_steps") cb.theta_steps = int(to_int(k, e, e.value));
  });

  ScanBlock& sc = cfg.scan;
  each("scan", [&](const std::string& k, const Entry& e) {
    const auto items = split(e.value, ',');
    if (items.empty()) bad_value(k, e, "empty list");
    if (k == "zeta_values") {
      sc.zeta_values.clear();
      for (const auto& s : items) sc.zeta_values.push_back(to_double(k, e, s));
    } else if (k == "n_values") {
      sc.n_values.clear();
      for (const auto& s : items) sc.n_values.push_back(int(to_int(k, e, s)));
    } else if (k == "gamma_values") {
      sc.gamma_values.clear();
      for (const auto& s : items) sc.gamma_values.push_back(to_double(k, e, s));
    } else if (k == "chirp_pairs") {
      sc.chirp_pairs.clear();
      for (const auto& s : items) {
        const auto c = s.find(':');
        if (c == std::string::npos) bad_value(k, e, "pairs are written eps_p:eps_q");
        sc.chirp_pairs.emplace_back(to_double(k, e, s.substr(0, c)), to_double(k, e, s.substr(c + 1)));
      }
    }
  });

  OutputBlock& ob = cfg.output;
  each("output", [&](const std::string& k, const Entry& e) {
    if (k == "directory") ob.directory = e.value;
    else if (k == "export_full_matrices") ob.export_full_matrices = to_bool(k, e);
    else if (k == "formats") {
      ob.json = ob.csv = false;
      for (const auto& f : split(lower(e.value), ',')) {
        if (f == "json") ob.json = true;
        else if (f == "csv") ob.csv = true;
        else bad_value(k, e, "formats are json and csv");
      }
    }
  });

  // Referenced blocks.
  if (!sections.count("stage")) throw Error(Errc::MissingSection, "[stage] is required");
  const bool needs_cascade = cfg.job == JobType::Cascade || cfg.job == JobType::ThetaScan ||
                             cfg.job == JobType::ZetaSweep;
  if (needs_cascade && !sections.count("cascade"))
    throw Error(Errc::MissingSection, "[cascade] is required for job " + std::string(name(cfg.job)));
  if ((cfg.job == JobType::ZetaSweep || cfg.job == JobType::NSweep) && !sections.count("scan"))
    throw Error(Errc::MissingSection, "[scan] is required for job " + std::string(name(cfg.job)));

  // Value checks that do not need a grid.
  auto fail = [](const std::string& m) { throw Error(Errc::InvalidArgument, m); };
  if (!(cfg.grid.span > 0)) fail("grid span must be positive");
  if (cfg.grid.n_samples < 2 || (cfg.grid.n_samples & (cfg.grid.n_samples - 1)))
    fail("n_samples must be a power of two");
  if (!(st.zeta > 0)) fail("zeta must be positive");
  if (!(st.collision_ratio > 0)) fail("collision_ratio must be positive");
  if (st.gamma && !(*st.gamma >= 0)) fail("gamma must be non-negative");
  if (st.target_ce && !(*st.target_ce > 0 && *st.target_ce < 1)) fail("target_ce must lie in (0, 1)");
  if (st.basis_size < 1) fail("basis_size must be positive");
  if (cb.stages < 1) fail("stages must be >= 1");
  if (cb.theta_steps < 1) fail("theta_steps must be >= 1");
  for (double z : sc.zeta_values)
    if (!(z > 0)) fail("zeta values must be positive");
  for (int n : sc.n_values)
    if (n < 1) fail("n values must be >= 1");
  if (st.mixing == Mixing::FourWave && cb.configuration == Configuration::DC)
    throw Error(Errc::ConfigMismatch, "four-wave mixing cascades run in the RC configuration only");
  if (st.mixing == Mixing::FourWave && (cfg.job == JobType::ZetaSweep || cfg.job == JobType::NSweep))
    throw Error(Errc::ConfigMismatch, std::string(name(cfg.job)) + " is a three-wave job");
  if (st.mixing == Mixing::ThreeWave && cfg.job == JobType::ChirpCheck)
    throw Error(Errc::ConfigMismatch, "chirp checks need mixing = fwm");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::Io, "cannot read config " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::vector<JobUnit> enumerate_jobs(const ExperimentConfig& cfg) {
  std::vector<JobUnit> jobs;
  const auto& cb = cfg.cascade;
  const auto& st = cfg.stage;
  std::optional<std::pair<double, double>> chirp;
  if (st.mixing == Mixing::FourWave && st.chirp) chirp = std::pair{st.chirp_eps_p, st.chirp_eps_q};
  auto base = [&](std::string label) {
    JobUnit u;
    u.label = std::move(label);
    u.theta = cb.theta;
    u.zeta = st.zeta;
    u.n_stages = cb.stages;
    u.configuration = cb.configuration;
    u.gamma = st.gamma;
    u.chirp = chirp;
    return u;
  };
  switch (cfg.job) {
    case JobType::SingleStage:
      if (cfg.scan.gamma_values.empty()) {
        JobUnit u = base("stage");
        u.n_stages = 1;
        jobs.push_back(u);
      }
      for (std::size_t k = 0; k < cfg.scan.gamma_values.size(); ++k) {
        JobUnit u = base("gamma" + std::to_string(k));
        u.n_stages = 1;
        u.gamma = cfg.scan.gamma_values[k];
        jobs.push_back(u);
      }
      break;
    case JobType::GreenExtract: {
      JobUnit u = base("green");
      u.n_stages = 1;
      jobs.push_back(u);
      break;
    }
    case JobType::Cascade:
      jobs.push_back(base("cascade"));
      break;
    case JobType::ThetaScan:
      for (int k = 0; k < cb.theta_steps; ++k) {
        JobUnit u = base("theta" + std::to_string(k));
        u.theta = cb.theta_min + (cb.theta_max - cb.theta_min) * k / cb.theta_steps;
        jobs.push_back(u);
      }
      break;
    case JobType::ZetaSweep:
      for (double z : cfg.scan.zeta_values) {
        JobUnit u = base("zeta");
        u.zeta = z;
        jobs.push_back(u);
      }
      break;
    case JobType::NSweep:
      for (int n : cfg.scan.n_values) {
        for (Configuration c : {Configuration::RC, Configuration::DC}) {
          JobUnit u = base(std::string(c == Configuration::RC ? "rc" : "dc") + std::to_string(n));
          u.n_stages = n;
          u.configuration = c;
          jobs.push_back(u);
        }
      }
      break;
    case JobType::ChirpCheck:
      for (const auto& pr : cfg.scan.chirp_pairs) {
        JobUnit u = base("chirp");
        u.n_stages = 2;
        u.configuration = Configuration::RC;
        u.chirp = pr;
        jobs.push_back(u);
      }
      break;
  }
  return jobs;
}

}  // namespace tmi
