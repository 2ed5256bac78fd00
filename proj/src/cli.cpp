#include "fracheat/cli.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace fracheat::cli {

namespace pt = boost::property_tree;

std::string to_string(Command c) {
  switch (c) {
  case Command::validate: return "validate";
  case Command::simulate: return "simulate";
  case Command::extend: return "extend";
  case Command::sweep: return "sweep";
  case Command::rate: return "rate";
  case Command::report_data: return "report-data";
  }
  return "unknown";
}

Command command_from_string(const std::string& s) {
  for (Command c : {Command::validate, Command::simulate, Command::extend, Command::sweep, Command::rate,
                    Command::report_data})
    if (to_string(c) == s) return c;
  throw ConfigError("unknown command '" + s + "'");
}

namespace {

// Reads typed values out of the INI tree, remembers which keys were used and records
// every resolved value for provenance.
class Reader {
public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {
    for (const auto& [sec, body] : tree_) {
      if (body.empty() && !body.data().empty())
        throw ConfigError("key '" + sec + "' must live inside a [section]");
      for (const auto& kv : body) present_.insert(sec + "." + kv.first);
    }
  }

  double real(const std::string& sec, const std::string& key, double def, double lo, double hi, bool open_lo = false,
              bool open_hi = false) {
    const auto raw = raw_value(sec, key);
    double v = def;
    if (raw) v = parse_real(sec, key, *raw);
    const bool ok = (open_lo ? v > lo : v >= lo) && (open_hi ? v < hi : v <= hi);
    if (!ok)
      throw ConfigError("[" + sec + "] " + key + " = " + lab::format_double(v) + " must lie in " + (open_lo ? "(" : "[") +
                        lab::format_double(lo) + ", " + lab::format_double(hi) + (open_hi ? ")" : "]"));
    record(sec, key, lab::format_double(v));
    return v;
  }

  long integer(const std::string& sec, const std::string& key, long def, long lo, long hi) {
    const auto raw = raw_value(sec, key);
    long v = def;
    if (raw) {
      std::size_t pos = 0;
      try {
        v = std::stol(*raw, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != raw->size()) throw ConfigError("[" + sec + "] " + key + ": '" + *raw + "' is not an integer");
    }
    if (v < lo || v > hi)
      throw ConfigError("[" + sec + "] " + key + " = " + std::to_string(v) + " must lie in [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
    record(sec, key, std::to_string(v));
    return v;
  }

  std::string text(const std::string& sec, const std::string& key, const std::string& def,
                   const std::vector<std::string>& allowed) {
    const auto raw = raw_value(sec, key);
    const std::string v = raw ? *raw : def;
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError("[" + sec + "] " + key + " = '" + v + "' must be one of: " + list);
    }
    record(sec, key, v);
    return v;
  }

  std::vector<double> list(const std::string& sec, const std::string& key, const std::vector<double>& def, double lo,
                           double hi, bool open_lo, bool open_hi) {
    const auto raw = raw_value(sec, key);
    std::vector<double> out = def;
    if (raw) {
      out.clear();
      std::stringstream ss(*raw);
      for (std::string item; std::getline(ss, item, ',');) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        out.push_back(parse_real(sec, key, item));
      }
    }
    if (out.empty()) throw ConfigError("[" + sec + "] " + key + " must list at least one value");
    std::string joined;
    for (double v : out) {
      const bool ok = (open_lo ? v > lo : v >= lo) && (open_hi ? v < hi : v <= hi);
      if (!ok)
        throw ConfigError("[" + sec + "] " + key + " entry " + lab::format_double(v) + " must lie in " +
                          (open_lo ? "(" : "[") + lab::format_double(lo) + ", " + lab::format_double(hi) +
                          (open_hi ? ")" : "]"));
      joined += (joined.empty() ? "" : ", ") + lab::format_double(v);
    }
    record(sec, key, joined);
    return out;
  }

  bool has(const std::string& sec, const std::string& key) const { return present_.count(sec + "." + key) > 0; }

  void finish() const {
    for (const auto& k : present_)
      if (!used_.count(k)) {
        const auto dot = k.find('.');
        throw ConfigError("unknown key '" + k.substr(dot + 1) + "' in [" + k.substr(0, dot) + "]");
      }
  }

  std::vector<std::string> provenance() const { return lines_; }

private:
  std::optional<std::string> raw_value(const std::string& sec, const std::string& key) {
    used_.insert(sec + "." + key);
    const auto s = tree_.get_child_optional(sec);
    if (!s) return std::nullopt;
    const auto v = s->get_child_optional(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return v->data();
  }

  static double parse_real(const std::string& sec, const std::string& key, const std::string& raw) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(raw, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != raw.size() || !std::isfinite(v))
      throw ConfigError("[" + sec + "] " + key + ": '" + raw + "' is not a finite number");
    return v;
  }

  void record(const std::string& sec, const std::string& key, const std::string& v) {
    lines_.push_back(sec + "." + key + " = " + v);
  }

  const pt::ptree& tree_;
  std::set<std::string> present_, used_;
  std::vector<std::string> lines_;
};

constexpr double inf = std::numeric_limits<double>::infinity();

} // namespace

RunConfig parse_config(const std::string& text, Command command) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  Reader r(tree);
  RunConfig cfg;
  cfg.command = command;

  if (r.has("run", "command")) {
    const auto c = r.text("run", "command", to_string(command), {});
    if (command_from_string(c) != command)
      throw ConfigError("[run] command = " + c + " disagrees with the command line (" + to_string(command) + ")");
  } else {
    r.text("run", "command", to_string(command), {});
  }
  cfg.threads = static_cast<unsigned>(r.integer("run", "threads", 1, 1, 256));
  cfg.seed = static_cast<unsigned>(r.integer("run", "seed", 1, 0, 4294967295L));

  auto& p = cfg.problem;
  const double sigma = r.real("problem", "sigma", 0.5, 0.0, 1.0, true, true);
  const int dim = static_cast<int>(r.integer("problem", "dim", 1, 1, 3));
  p.params = kernels::KernelParams::make(sigma, dim);
  p.p = r.real("problem", "p", 2.0, 0.0, inf, true, false);
  p.length = r.real("problem", "length", p.length, 0.0, inf, true, false);
  p.n_x = static_cast<int>(r.integer("problem", "n_x", p.n_x, 1, 1 << 16));
  if (p.n_x != 1 && p.n_x % 2 != 0) throw ConfigError("[problem] n_x must be 1 or even");
  p.t_max = r.real("problem", "t_max", p.t_max, 0.0, inf, true, false);
  p.dt0 = r.real("problem", "dt0", p.dt0, 0.0, inf, true, false);
  p.dt_max = r.real("problem", "dt_max", p.dt_max, p.dt0, inf);
  p.dt_growth = r.real("problem", "dt_growth", p.dt_growth, 1.0, inf);
  p.dt_grade = r.real("problem", "dt_grade", p.dt_grade, 0.0, inf, true, false);
  p.dt_rate = r.real("problem", "dt_rate", p.dt_rate, 0.0, inf, true, false);
  p.dt_floor = r.real("problem", "dt_floor", p.dt_floor, 0.0, inf, true, false);
  p.collapse_frac = r.real("problem", "collapse_frac", p.collapse_frac, 0.0, 1.0, true, true);
  p.blowup_threshold = r.real("problem", "blowup_threshold", p.blowup_threshold, 0.0, inf, true, false);
  p.picard_max_iter = static_cast<int>(r.integer("problem", "picard_max_iter", p.picard_max_iter, 1, 100000));
  p.picard_tol = r.real("problem", "picard_tol", p.picard_tol, 0.0, 1.0, true, true);
  p.tail_rel = r.real("problem", "tail_rel", p.tail_rel, 0.0, 1.0, true, true);
  p.coarsen_ratio = r.real("problem", "coarsen_ratio", p.coarsen_ratio, 0.0, inf);
  if (p.coarsen_ratio != 0.0 && p.coarsen_ratio < 1.0) throw ConfigError("[problem] coarsen_ratio must be 0 or >= 1");
  p.exact_panels = static_cast<int>(r.integer("problem", "exact_panels", p.exact_panels, 0, 100000));
  p.quad_points = static_cast<int>(r.integer("problem", "quad_points", p.quad_points, 1, 16));

  const auto fam = r.text("memory", "family", "gaussian_bump",
                          {"zero", "constant", "power_ramp", "self_similar", "gaussian_bump", "explicit_blowup"});
  if (fam == "zero") {
    p.memory = memory::MemoryData::zero();
  } else if (fam == "constant") {
    p.memory = memory::MemoryData::constant(r.real("memory", "amplitude", 1.0, -inf, inf));
  } else if (fam == "explicit_blowup") {
    if (!(p.p > 1.0)) throw ConfigError("[memory] family = explicit_blowup needs [problem] p > 1");
    p.memory = memory::MemoryData::explicit_blowup(p.p, r.real("memory", "horizon", 1.0, 0.0, inf, true, false));
  } else {
    const double a = r.real("memory", "amplitude", 1.0, 0.0, inf);
    const double shift = r.real("memory", "shift", 1.0, 0.0, inf, true, false);
    if (fam == "gaussian_bump") {
      p.memory = memory::MemoryData::gaussian_bump(a, shift, dim);
    } else {
      const double eta = r.real("memory", "exponent", 0.0, -inf, inf);
      p.memory = fam == "power_ramp" ? memory::MemoryData::power_ramp(a, shift, eta)
                                     : memory::MemoryData::self_similar(a, shift, eta);
    }
  }

  auto& e = cfg.ext;
  e.n_y = static_cast<int>(r.integer("extension", "n_y", e.n_y, 2, 1 << 16));
  e.y_max = r.real("extension", "y_max", e.y_max, 0.0, inf, true, false);
  e.grading = r.real("extension", "grading", e.grading, 0.0, inf);
  if (e.grading != 0.0 && e.grading < 1.0) throw ConfigError("[extension] grading must be 0 (default) or >= 1");
  e.slice_stride = static_cast<int>(r.integer("extension", "slice_stride", e.slice_stride, 0, 1 << 30));
  e.kaplan_ks = r.list("extension", "kaplan_k", e.kaplan_ks, 0.0, inf, true, false);
  e.containment_limit = r.real("extension", "containment_limit", e.containment_limit, 0.0, 1.0, true, false);

  auto& s = cfg.sweep;
  s.sigmas = r.list("sweep", "sigmas", {sigma}, 0.0, 1.0, true, true);
  s.ps = r.list("sweep", "ps", s.ps, 0.0, inf, true, false);
  s.data_scales = r.list("sweep", "data_scales", s.data_scales, 0.0, inf, true, false);
  s.bump_shift = r.real("sweep", "bump_shift", s.bump_shift, 0.0, inf, true, false);
  s.dim = dim;
  s.base = p;
  s.threads = cfg.threads;

  auto& v = cfg.validation;
  v.sigma = sigma;
  v.dim = dim;
  v.marchaud_samples = static_cast<int>(r.integer("validation", "marchaud_samples", v.marchaud_samples, 100, 10000000));
  v.master_nx = static_cast<int>(r.integer("validation", "master_nx", v.master_nx, 8, 1 << 14));
  v.master_dt = r.real("validation", "master_dt", v.master_dt, 0.0, 0.1, true, false);
  v.conormal_ny = static_cast<int>(r.integer("validation", "conormal_ny", v.conormal_ny, 4, 1 << 14));
  v.green_scale = r.real("validation", "green_scale", v.green_scale, 0.0, inf, true, false);
  v.seed = cfg.seed;

  r.finish();
  cfg.provenance = r.provenance();
  try {
    p.validate();
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("invalid problem: ") + ex.what());
  }
  return cfg;
}

namespace {

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

nlohmann::ordered_json rate_json(const lab::BlowupReport& r, const RunConfig& cfg) {
  const double sigma = cfg.problem.params.sigma, p = cfg.problem.p;
  nlohmann::ordered_json j;
  j["detected"] = r.detected;
  j["T_est"] = r.T_est;
  j["rate_exp"] = r.rate_exp;
  j["rate_ci"] = r.rate_ci;
  j["residual"] = r.residual;
  j["window"] = {r.window_start, r.window_end};
  j["points"] = r.points;
  j["predicted_rate"] = p > 1.0 ? sigma / (p - 1.0) : std::numeric_limits<double>::quiet_NaN();
  j["config"] = cfg.provenance;
  return j;
}

int do_validate(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log) {
  const auto rep = lab::validation_battery(cfg.validation);
  lab::write_validation_json(rep, out / "validation.json", cfg.provenance);
  for (const auto& e : rep.entries)
    log << (e.pass ? "PASS " : "FAIL ") << e.name << " error=" << lab::format_double(e.error)
        << " tol=" << lab::format_double(e.tolerance) << "\n";
  return rep.all_pass() ? exit_ok : exit_solver_failure;
}

int do_simulate(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log) {
  const auto tr = mild::mild_march(cfg.problem);
  mild::write_run_dir(tr, cfg.problem, out, cfg.provenance);
  log << "status " << mild::to_string(tr.status) << " at t=" << lab::format_double(tr.times.back())
      << " sup=" << lab::format_double(tr.sup_norms.back()) << "\n";
  if (!tr.message.empty()) log << tr.message << "\n";
  return tr.status == mild::RunStatus::step_failure ? exit_solver_failure : exit_ok;
}

int do_extend(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log) {
  const auto tr = ext::extension_march(cfg.problem, cfg.ext);
  ext::write_ext_run_dir(tr, cfg.problem, cfg.ext, out, cfg.provenance);
  const auto lv = ext::levine_check(tr);
  nlohmann::ordered_json j;
  j["status"] = mild::to_string(tr.status);
  j["levine"] = {{"negative_found", lv.negative_found}, {"time", lv.negative_found ? nlohmann::ordered_json(lv.time) : nullptr}};
  j["levine_consistent"] = !(lv.negative_found && tr.status == mild::RunStatus::completed_horizon);
  j["max_top_fraction"] = tr.max_top_fraction;
  j["max_box_fraction"] = tr.max_box_fraction;
  j["containment_ok"] = tr.max_top_fraction <= cfg.ext.containment_limit;
  bool monotone = true;
  for (std::size_t i = 1; i < tr.energies.size(); ++i)
    monotone = monotone && tr.energies[i] <= tr.energies[i - 1] + 1e-10 * std::abs(tr.energies[i - 1]);
  j["energy_nonincreasing"] = monotone;
  if (std::any_of(cfg.ext.kaplan_ks.begin(), cfg.ext.kaplan_ks.end(), [](double k) { return k == 1.0; }) &&
      cfg.problem.p > 1.0) {
    const auto k = lab::kaplan_monitor(tr);
    j["kaplan"] = {{"c1", k.c1}, {"c2", k.c2}, {"crossover", k.crossover}, {"checked", k.checked},
                   {"violations", k.violations}, {"worst_shortfall", k.worst}};
  }
  j["config"] = cfg.provenance;
  write_json(out / "monitors.json", j);
  log << "status " << mild::to_string(tr.status) << " at t=" << lab::format_double(tr.times.back())
      << (lv.negative_found ? " (negative energy at t=" + lab::format_double(lv.time) + ")" : "") << "\n";
  if (!tr.message.empty()) log << tr.message << "\n";
  return tr.status == mild::RunStatus::step_failure ? exit_solver_failure : exit_ok;
}

int do_sweep(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log) {
  auto spec = cfg.sweep;
  spec.threads = cfg.threads;
  const auto cells = lab::run_sweep(spec);
  const auto labels = lab::label_cells(cells);
  lab::write_phase_csv(cells, out / "phase.csv", cfg.provenance);
  lab::write_labels_csv(labels, out / "phase_labels.csv", cfg.provenance);
  bool ok = true;
  for (const auto& l : labels) {
    log << "sigma=" << lab::format_double(l.sigma) << " p=" << lab::format_double(l.p) << " " << l.label
        << " (theory " << l.theory << ")\n";
    ok = ok && l.consistent;
  }
  for (const auto& c : cells) ok = ok && c.status != mild::RunStatus::step_failure;
  return ok ? exit_ok : exit_solver_failure;
}

int do_rate(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log) {
  const auto tr = mild::mild_march(cfg.problem);
  mild::write_run_dir(tr, cfg.problem, out, cfg.provenance);
  if (tr.status != mild::RunStatus::blowup_detected) {
    log << "no blow-up detected (" << mild::to_string(tr.status) << ")\n";
    return exit_solver_failure;
  }
  try {
    const auto r = lab::fit_rate(tr);
    write_json(out / "rate.json", rate_json(r, cfg));
    log << "rate " << lab::format_double(r.rate_exp) << " +- " << lab::format_double(r.rate_ci) << ", T_est "
        << lab::format_double(r.T_est) << "\n";
  } catch (const lab::InsufficientData& e) {
    log << e.what() << "\n";
    return exit_solver_failure;
  }
  return exit_ok;
}

} // namespace

int run(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log) {
  std::filesystem::create_directories(out);
  switch (cfg.command) {
  case Command::validate: return do_validate(cfg, out, log);
  case Command::simulate: return do_simulate(cfg, out, log);
  case Command::extend: return do_extend(cfg, out, log);
  case Command::sweep: return do_sweep(cfg, out, log);
  case Command::rate: return do_rate(cfg, out, log);
  case Command::report_data: {
    // Everything the figure renderer consumes, one subdirectory per figure kind.
    int worst = exit_ok;
    worst = std::max(worst, do_rate(cfg, out / "rate", log));
    worst = std::max(worst, do_sweep(cfg, out / "phase", log));
    worst = std::max(worst, do_extend(cfg, out / "monitors", log));
    return worst;
  }
  }
  return exit_invalid;
}

int main(int argc, char** argv) {
  CLI::App app{"fracheat: semilinear fully fractional heat equation lab"};
  std::string command, config, out = "out";
  unsigned threads = 0;
  app.add_option("command", command, "validate | simulate | extend | sweep | rate | report-data")->required();
  app.add_option("--config", config, "INI configuration file")->required();
  app.add_option("--out", out, "output directory");
  app.add_option("--threads", threads, "worker threads (overrides [run] threads)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_ok : exit_invalid;
  }

  RunConfig cfg;
  try {
    std::ifstream in(config);
    if (!in) throw ConfigError("cannot read config " + config);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = parse_config(ss.str(), command_from_string(command));
    if (threads > 0) {
      cfg.threads = threads;
      cfg.sweep.threads = threads;
    }
  } catch (const std::exception& e) {
    std::cerr << "fracheat: " << e.what() << "\n";
    return exit_invalid;
  }
  try {
    return run(cfg, out, std::cout);
  } catch (const std::invalid_argument& e) {
    std::cerr << "fracheat: " << e.what() << "\n";
    return exit_invalid;
  } catch (const std::exception& e) {
    std::cerr << "fracheat: " << e.what() << "\n";
    return exit_solver_failure;
  }
}

} // namespace fracheat::cli
