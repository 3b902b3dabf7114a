#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "lgmsplit/diagnostics.hpp"
#include "lgmsplit/io/config.hpp"
#include "lgmsplit/io/csv.hpp"
#include "lgmsplit/io/dataset.hpp"
#include "lgmsplit/sampler.hpp"
#include "lgmsplit/scenarios/gaussian.hpp"
#include "lgmsplit/scenarios/gev.hpp"
#include "lgmsplit/theta_hessian.hpp"

#ifndef LGM_SPLIT_BUILD_ID
#define LGM_SPLIT_BUILD_ID "lgm_split-unversioned"
#endif

namespace lgm::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kSuccess = 0, kInternal = 1, kConfigFailure = 2, kNumericalFailure = 3, kIoFailure = 4 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const BadDimension*>(&e) ||
      dynamic_cast<const DimensionMismatch*>(&e) || dynamic_cast<const NonPositiveScale*>(&e) ||
      dynamic_cast<const TooLargeForDense*>(&e)) {
    return kConfigFailure;
  }
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return kIoFailure;
  if (dynamic_cast<const Error*>(&e)) return kNumericalFailure;
  return kInternal;
}

/// Values given on the command line; each one overrides the config file.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<long> chains;
  std::optional<long> iterations;
  std::optional<long> burnin;
  std::optional<std::string> out;
  std::optional<long> max_lag;
  std::optional<std::string> grid_sizes;
  std::optional<long> threads;
};

struct RunConfig {
  std::string scenario = "gaussian";
  std::uint64_t seed = 1;
  std::uint64_t data_seed = 1;
  int chains = 4;
  long iterations = 50000;
  long burnin = 10000;
  int threads = 1;
  std::string proposal;  // multiplicative | hessian-rw
  double multiplicative_f = 2.0;
  double rw_c = 0.0;  // 0: 2.38^2 / dim(theta)
  RecordSelection record;
  bool partitioned = true;
  double init_jitter = 0.1;
  fs::path out = "lgm_split_out";
  fs::path data;  // dataset directory; simulated from data_seed when empty
  int max_lag = 50;
  std::vector<int> grid_sizes{100, 400, 900};
  GaussianScenario gaussian;
  GevScenario gev;
  std::string canonical;
  std::uint64_t hash = 0;
};

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys{
      "scenario", "seed", "data_seed", "chains", "iterations", "burnin", "threads", "proposal",
      "multiplicative_F", "rw_c", "record", "partitioned", "init_jitter", "out", "data", "max_lag",
      "grid_sizes",
      // gaussian
      "sites", "years", "lattice_rows", "lattice_cols", "covariates", "observation", "known_variance",
      "prior_log_sd", "theta_true", "kappa_beta_mu", "kappa_beta_tau",
      // gev
      "rivers", "prior_sd", "kappa", "beta_lambda_true", "beta_tau_true", "beta_xi_true", "psi_lambda_true",
      "psi_tau_true", "psi_xi_true", "s2_eps_true"};
  return keys;
}

inline std::vector<int> parse_grid_sizes(const io::KeyValueConfig& cfg) {
  std::vector<int> sizes;
  for (const auto& item : cfg.get_list("grid_sizes", {"100", "400", "900"})) {
    long v = 0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size() || v < 25) {
      throw ConfigError(cfg.field_where("grid_sizes") + ": '" + item + "' is not an integer >= 25");
    }
    const long side = std::lround(std::sqrt(static_cast<double>(v)));
    if (side * side != v) throw ConfigError(cfg.field_where("grid_sizes") + ": " + item + " is not a square");
    sizes.push_back(static_cast<int>(v));
  }
  if (sizes.empty()) throw ConfigError(cfg.field_where("grid_sizes") + ": empty list");
  return sizes;
}

inline int resolve_threads(const io::KeyValueConfig& cfg, const Overrides& ov) {
  if (ov.threads) {
    if (*ov.threads < 1 || *ov.threads > 1024) throw ConfigError("--threads must be in [1, 1024]");
    return static_cast<int>(*ov.threads);
  }
  if (const char* env = std::getenv("LGM_SPLIT_THREADS"); env && *env) {
    const std::string_view s(env);
    long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v < 1 || v > 1024) {
      throw ConfigError("LGM_SPLIT_THREADS: expected an integer in [1, 1024], got '" + std::string(s) + "'");
    }
    return static_cast<int>(v);
  }
  return static_cast<int>(cfg.get_int("threads", 1, 1, 1024));
}

inline RunConfig parse_run_config(io::KeyValueConfig cfg, const Overrides& ov) {
  if (ov.seed) cfg.set("seed", std::to_string(*ov.seed));
  if (ov.chains) cfg.set("chains", std::to_string(*ov.chains));
  if (ov.iterations) cfg.set("iterations", std::to_string(*ov.iterations));
  if (ov.burnin) cfg.set("burnin", std::to_string(*ov.burnin));
  if (ov.out) cfg.set("out", *ov.out);
  if (ov.max_lag) cfg.set("max_lag", std::to_string(*ov.max_lag));
  if (ov.grid_sizes) cfg.set("grid_sizes", *ov.grid_sizes);
  cfg.require_known(known_config_keys());

  RunConfig rc;
  rc.scenario = cfg.get_choice("scenario", "gaussian", {"gaussian", "gev"});
  rc.seed = cfg.get_u64("seed", 1);
  rc.data_seed = cfg.get_u64("data_seed", rc.seed);
  rc.chains = static_cast<int>(cfg.get_int("chains", 4, 1, 1024));
  rc.iterations = cfg.get_int("iterations", 50000, 0, 1L << 40);
  rc.burnin = cfg.get_int("burnin", 10000, 0, 1L << 40);
  if (rc.burnin > rc.iterations) {
    throw ConfigError(cfg.field_where("burnin") + ": burn-in " + std::to_string(rc.burnin) + " exceeds iterations " +
                      std::to_string(rc.iterations));
  }
  rc.threads = resolve_threads(cfg, ov);
  rc.proposal = cfg.get_choice("proposal", rc.scenario == "gev" ? "hessian-rw" : "multiplicative",
                               {"multiplicative", "hessian-rw"});
  rc.multiplicative_f = cfg.get_double_above("multiplicative_F", 2.0, 1.0);
  rc.rw_c = cfg.get_double("rw_c", 0.0);
  if (rc.rw_c < 0.0 || !std::isfinite(rc.rw_c)) throw ConfigError(cfg.field_where("rw_c") + ": must be >= 0");
  rc.record = {false, false, false};
  for (const auto& r : cfg.get_list("record", {"nu", "theta"})) {
    if (r == "eta") rc.record.eta = true;
    else if (r == "nu") rc.record.nu = true;
    else if (r == "theta") rc.record.theta = true;
    else throw ConfigError(cfg.field_where("record") + ": unknown block '" + r + "' (expected eta, nu, theta)");
  }
  rc.partitioned = cfg.get_bool("partitioned", true);
  rc.init_jitter = cfg.get_double("init_jitter", 0.1);
  if (rc.init_jitter < 0.0) throw ConfigError(cfg.field_where("init_jitter") + ": must be >= 0");
  rc.out = cfg.get_string("out", "lgm_split_out");
  rc.data = cfg.get_string("data", "");
  rc.max_lag = static_cast<int>(cfg.get_int("max_lag", 50, 0, 1000000));
  rc.grid_sizes = parse_grid_sizes(cfg);

  const int years = static_cast<int>(cfg.get_int("years", rc.scenario == "gev" ? 60 : 30, 1, 1000000));
  const int p = static_cast<int>(cfg.get_int("covariates", 1, 0, 100));
  if (rc.scenario == "gaussian") {
    auto& g = rc.gaussian;
    g.sites = static_cast<int>(cfg.get_int("sites", g.sites, 1, 1000000));
    g.years = years;
    g.lattice_rows = static_cast<int>(cfg.get_int("lattice_rows", g.lattice_rows, 3, 100000));
    g.lattice_cols = static_cast<int>(cfg.get_int("lattice_cols", g.lattice_cols, 3, 100000));
    g.covariates = p;
    g.observation = cfg.get_choice("observation", "mean-logvar", {"mean-logvar", "known-variance"}) == "known-variance"
                        ? GaussianLikelihood::Mode::KnownVariance
                        : GaussianLikelihood::Mode::MeanLogVariance;
    g.known_variance = cfg.get_double_above("known_variance", g.known_variance, 0.0);
    g.prior_log_sd = cfg.get_double_above("prior_log_sd", g.prior_log_sd, 0.0);
    g.kappa_beta_mu = cfg.get_double_above("kappa_beta_mu", g.kappa_beta_mu, 0.0);
    g.kappa_beta_tau = cfg.get_double_above("kappa_beta_tau", g.kappa_beta_tau, 0.0);
    g.theta_true = cfg.get_doubles("theta_true", g.theta_true);
    if (g.theta_true.size() != 6) throw ConfigError(cfg.field_where("theta_true") + ": expected 6 values");
    for (double v : g.theta_true) {
      if (!(v > 0.0)) throw ConfigError(cfg.field_where("theta_true") + ": values must be positive");
    }
    if (g.sites > g.nodes()) {
      throw ConfigError(cfg.field_where("sites") + ": " + std::to_string(g.sites) + " sites exceed " +
                        std::to_string(g.nodes()) + " lattice nodes");
    }
  } else {
    auto& g = rc.gev;
    g.rivers = static_cast<int>(cfg.get_int("rivers", g.rivers, 1, 100000));
    g.years = years;
    if (g.years < 30) throw ConfigError(cfg.field_where("years") + ": the GEV scenario needs at least 30 years");
    g.covariates = p;
    g.prior_sd = cfg.get_double_above("prior_sd", g.prior_sd, 0.0);
    g.kappa = cfg.get_double_above("kappa", g.kappa, 0.0);
    const std::size_t p1 = static_cast<std::size_t>(p) + 1;
    auto resize_truth = [&](std::vector<double>& v, const char* key, double fill) {
      v = cfg.get_doubles(key, v);
      if (!cfg.has(key)) v.resize(p1, fill);
      if (v.size() != p1) {
        throw ConfigError(cfg.field_where(key) + ": expected " + std::to_string(p1) + " values (covariates + 1)");
      }
    };
    resize_truth(g.beta_lambda_true, "beta_lambda_true", 0.1);
    resize_truth(g.beta_tau_true, "beta_tau_true", 0.1);
    resize_truth(g.psi_lambda_true, "psi_lambda_true", g.psi_lambda_true.back());
    resize_truth(g.psi_tau_true, "psi_tau_true", g.psi_tau_true.back());
    g.beta_xi_true = cfg.get_double("beta_xi_true", g.beta_xi_true);
    g.psi_xi_true = cfg.get_double_above("psi_xi_true", g.psi_xi_true, 0.0);
    const auto s2 = cfg.get_doubles("s2_eps_true", {g.s2_eps_lambda_true, g.s2_eps_tau_true, g.s2_eps_xi_true});
    if (s2.size() != 3 || !(s2[0] > 0.0 && s2[1] > 0.0 && s2[2] > 0.0)) {
      throw ConfigError(cfg.field_where("s2_eps_true") + ": expected 3 positive values");
    }
    g.s2_eps_lambda_true = s2[0];
    g.s2_eps_tau_true = s2[1];
    g.s2_eps_xi_true = s2[2];
    for (double v : g.psi_lambda_true) {
      if (!(v > 0.0)) throw ConfigError(cfg.field_where("psi_lambda_true") + ": values must be positive");
    }
    for (double v : g.psi_tau_true) {
      if (!(v > 0.0)) throw ConfigError(cfg.field_where("psi_tau_true") + ": values must be positive");
    }
  }
  if (rc.proposal == "multiplicative" && rc.scenario == "gev") {
    throw ConfigError(cfg.field_where("proposal") +
                      ": the GEV hyperparameters live on the log scale; the multiplicative proposal needs positive "
                      "coordinates");
  }
  rc.canonical = cfg.canonical();
  rc.hash = io::fnv1a(rc.canonical);
  return rc;
}

inline RunConfig load_run_config(const Overrides& ov) {
  io::KeyValueConfig cfg = ov.config ? io::KeyValueConfig::load(*ov.config) : io::KeyValueConfig{};
  return parse_run_config(std::move(cfg), ov);
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Files created under an output directory; removed again unless commit() is
/// reached, so a failed command leaves no partial results behind.
class OutputTransaction {
 public:
  explicit OutputTransaction(fs::path dir) : dir_(std::move(dir)) { make_dir(dir_); }

  OutputTransaction(const OutputTransaction&) = delete;
  OutputTransaction& operator=(const OutputTransaction&) = delete;

  ~OutputTransaction() {
    if (committed_) return;
    std::error_code ec;
    for (auto it = files_.rbegin(); it != files_.rend(); ++it) fs::remove(*it, ec);
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) fs::remove(*it, ec);  // only if empty
  }

  fs::path file(const fs::path& relative) {
    fs::path p = dir_ / relative;
    if (p.has_parent_path()) make_dir(p.parent_path());
    files_.push_back(p);
    return p;
  }

  void track(const std::vector<fs::path>& paths) { files_.insert(files_.end(), paths.begin(), paths.end()); }

  fs::path subdir(const fs::path& relative) {
    make_dir(dir_ / relative);
    return dir_ / relative;
  }

  const fs::path& dir() const noexcept { return dir_; }
  void commit() noexcept { committed_ = true; }

 private:
  void make_dir(const fs::path& d) {
    if (fs::exists(d)) {
      if (!fs::is_directory(d)) throw IoError("'" + d.string() + "' exists and is not a directory");
      return;
    }
    std::vector<fs::path> fresh;
    for (fs::path p = d; !p.empty() && !fs::exists(p); p = p.parent_path()) {
      fresh.push_back(p);
      if (p == p.parent_path()) break;
    }
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw IoError("cannot create directory '" + d.string() + "': " + ec.message());
    dirs_.insert(dirs_.end(), fresh.rbegin(), fresh.rend());
  }

  fs::path dir_;
  std::vector<fs::path> files_;
  std::vector<fs::path> dirs_;
  bool committed_ = false;
};

// ---- model assembly ---------------------------------------------------------

struct ProposalChoice {
  HyperProposal proposal;
  std::string kind;
  double parameter = 0.0;  // F or c
  std::optional<ThetaMode> mode;
  std::string warning;
};

/// Builds the hyperparameter proposal. The Hessian random walk also moves
/// theta_init to the mode of log pi(theta | eta_hat), eta_hat = model.eta_init.
template <PartitionedLikelihood Lik>
ProposalChoice choose_proposal(const RunConfig& rc, ModelSpec<Lik>& model) {
  ProposalChoice out;
  if (rc.proposal == "hessian-rw" && model.n_theta() > 0) {
    try {
      ThetaMode mode = hessian_for_theta_proposal(model, model.eta_init, model.theta_init);
      const double c = rc.rw_c > 0.0 ? rc.rw_c : default_rw_scale(model.n_theta());
      out.proposal = GaussianRandomWalk(mode.hessian, c);
      out.kind = "hessian-rw";
      out.parameter = c;
      model.theta_init = mode.theta0;
      out.mode = std::move(mode);
      return out;
    } catch (const HessianNotNegativeDefinite& e) {
      if (!model.theta_positive) throw;
      out.warning = std::string(e.what()) + "; falling back to the multiplicative proposal";
    }
  }
  out.proposal = MultiplicativeProposal(rc.multiplicative_f);
  out.kind = "multiplicative";
  out.parameter = rc.multiplicative_f;
  return out;
}

inline ChainConfig chain_config(const RunConfig& rc, HyperProposal proposal) {
  ChainConfig cc;
  cc.iterations = rc.iterations;
  cc.burnin = rc.burnin;
  cc.seed = rc.seed;
  cc.proposal = std::move(proposal);
  cc.sampler.partitioned = rc.partitioned;
  cc.record = rc.record;
  cc.init_jitter = rc.init_jitter;
  cc.fingerprint = hex64(rc.hash);
  return cc;
}

inline nlohmann::json stats_json(const ChainStats& s) {
  return {{"data_rich_rate", s.data_rich_rate()},   {"data_poor_rate", s.data_poor_rate()},
          {"data_rich_proposed", s.data_rich_proposed}, {"data_poor_proposed", s.data_poor_proposed},
          {"mode_failures", s.mode_failures},       {"ridged_blocks", s.ridged_blocks},
          {"max_abs_data_rich_log_ratio", s.max_abs_log_ratio}};
}

inline nlohmann::json config_json(const std::string& canonical) {
  nlohmann::json j = nlohmann::json::object();
  std::size_t start = 0;
  while (start < canonical.size()) {
    const auto end = canonical.find('\n', start);
    const std::string line = canonical.substr(start, end - start);
    const auto eq = line.find('=');
    j[line.substr(0, eq)] = line.substr(eq + 1);
    start = end + 1;
  }
  return j;
}

inline std::string trace_file_name(int chain) { return "chain_" + std::to_string(chain) + ".csv"; }

inline GaussianDataset simulate_gaussian(const RunConfig& rc) {
  Rng rng = make_substream(rc.data_seed, 0xda7aULL);
  return simulate_gaussian_data(rc.gaussian, rng);
}

inline GevDataset simulate_gev(const RunConfig& rc) {
  Rng rng = make_substream(rc.data_seed, 0xda7aULL);
  return simulate_gev_data(rc.gev, rng);
}

// ---- commands ---------------------------------------------------------------

/// Simulates a dataset into rc.out.
inline int cmd_simulate(const RunConfig& rc, std::ostream& log = std::cout) {
  OutputTransaction tx(rc.out);
  std::vector<fs::path> files;
  if (rc.scenario == "gaussian") {
    tx.track({rc.out / "sites.csv", rc.out / "observations.csv", rc.out / "truth.csv", rc.out / "dataset.json"});
    files = io::write_gaussian_dataset(rc.out, rc.gaussian, simulate_gaussian(rc));
  } else {
    tx.track({rc.out / "covariates.csv", rc.out / "observations.csv", rc.out / "truth.csv", rc.out / "dataset.json"});
    files = io::write_gev_dataset(rc.out, rc.gev, simulate_gev(rc));
  }
  tx.commit();
  log << "simulated " << rc.scenario << " dataset (data seed " << rc.data_seed << ") into " << rc.out.string() << '\n';
  return kSuccess;
}

namespace detail {

template <PartitionedLikelihood Lik>
void run_model(const RunConfig& rc, ModelSpec<Lik> model, OutputTransaction& tx, nlohmann::json& manifest,
               std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  ProposalChoice choice = choose_proposal(rc, model);
  if (!choice.warning.empty()) log << "warning: " << choice.warning << '\n';
  const ChainConfig cc = chain_config(rc, choice.proposal);
  const auto results = run_chains(model, cc, rc.chains, rc.threads);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json chains = nlohmann::json::array();
  ChainStats total;
  for (const auto& r : results) {
    const fs::path path = tx.file(trace_file_name(r.trace.chain));
    io::write_trace_csv(path, r.trace);
    nlohmann::json c = stats_json(r.stats);
    c["chain"] = r.trace.chain;
    c["file"] = path.filename().string();
    chains.push_back(std::move(c));
    total += r.stats;
  }
  nlohmann::json prop{{"kind", choice.kind}};
  prop[choice.kind == "multiplicative" ? "F" : "c"] = choice.parameter;
  if (choice.mode) {
    prop["theta0"] = std::vector<double>(choice.mode->theta0.data(), choice.mode->theta0.data() + choice.mode->theta0.size());
    std::vector<std::vector<double>> h;
    for (Eigen::Index i = 0; i < choice.mode->hessian.rows(); ++i) {
      h.emplace_back();
      for (Eigen::Index j = 0; j < choice.mode->hessian.cols(); ++j) h.back().push_back(choice.mode->hessian(i, j));
    }
    prop["hessian"] = h;
  }
  if (!choice.warning.empty()) prop["warning"] = choice.warning;
  manifest["proposal"] = prop;
  manifest["theta_names"] = model.theta_names;
  manifest["wall_clock_seconds"] = seconds;
  manifest["acceptance"] = {{"chains", chains}, {"overall", stats_json(total)}};
  log << "ran " << rc.chains << " chain(s) x " << rc.iterations << " iterations in " << seconds
      << " s; data-rich acceptance " << total.data_rich_rate() << ", data-poor acceptance " << total.data_poor_rate()
      << '\n';
}

}  // namespace detail

/// Runs the configured chains; writes chain_<c>.csv and manifest.json into rc.out.
inline int cmd_run(const RunConfig& rc, std::ostream& log = std::cout) {
  const auto wall0 = std::chrono::steady_clock::now();
  OutputTransaction tx(rc.out);
  nlohmann::json manifest{{"command", "run"},
                          {"build_id", LGM_SPLIT_BUILD_ID},
                          {"scenario", rc.scenario},
                          {"seed", rc.seed},
                          {"config_hash", hex64(rc.hash)},
                          {"config", config_json(rc.canonical)},
                          {"chains", rc.chains},
                          {"iterations", rc.iterations},
                          {"burnin", rc.burnin},
                          {"threads", rc.threads}};
  if (!rc.data.empty()) {
    const std::string found = io::dataset_scenario(rc.data);
    if (found != rc.scenario) {
      throw ConfigError("dataset '" + rc.data.string() + "' holds a " + found + " scenario, config asks for " +
                        rc.scenario);
    }
    manifest["data"] = rc.data.string();
  } else {
    manifest["data_seed"] = rc.data_seed;
  }

  if (rc.scenario == "gaussian") {
    GaussianDataset data;
    if (rc.data.empty()) {
      data = simulate_gaussian(rc);
      const fs::path dir = tx.subdir("dataset");
      tx.track({dir / "sites.csv", dir / "observations.csv", dir / "truth.csv", dir / "dataset.json"});
      io::write_gaussian_dataset(dir, rc.gaussian, data);
    } else {
      data = io::read_gaussian_dataset(rc.data);
    }
    if (data.x_mu.cols() != rc.gaussian.covariates + 1 || data.x_tau.cols() != rc.gaussian.covariates + 1) {
      throw ConfigError("dataset has " + std::to_string(data.x_mu.cols() - 1) + " covariates, config expects " +
                        std::to_string(rc.gaussian.covariates));
    }
    detail::run_model(rc, build_gaussian_model(rc.gaussian, data), tx, manifest, log);
  } else {
    GevScenario sc = rc.gev;
    GevDataset data;
    if (rc.data.empty()) {
      data = simulate_gev(rc);
      const fs::path dir = tx.subdir("dataset");
      tx.track({dir / "covariates.csv", dir / "observations.csv", dir / "truth.csv", dir / "dataset.json"});
      io::write_gev_dataset(dir, sc, data);
    } else {
      data = io::read_gev_dataset(rc.data, sc);
      if (sc.covariates != rc.gev.covariates) {
        throw ConfigError("dataset has " + std::to_string(sc.covariates) + " covariates, config expects " +
                          std::to_string(rc.gev.covariates));
      }
    }
    detail::run_model(rc, build_gev_model(sc, data), tx, manifest, log);
  }
  manifest["total_wall_clock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  io::write_json(tx.file("manifest.json"), manifest);
  tx.commit();
  return kSuccess;
}

/// chain_<c>.csv files of a directory, ordered by chain index.
inline std::vector<fs::path> find_trace_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("trace directory '" + dir.string() + "' does not exist");
  static const std::regex pattern(R"(chain_(\d+)\.csv)");
  std::vector<std::pair<long, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && std::regex_match(name, m, pattern)) found.emplace_back(std::stol(m[1]), entry.path());
  }
  if (found.empty()) throw IoError("no chain_<n>.csv traces in '" + dir.string() + "'");
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

inline void write_gelman_rubin_csv(const fs::path& path, const std::vector<GelmanRubinSeries>& series) {
  std::ofstream f = io::open_output(path);
  f << "parameter,cut_point_or_lag,value\n";
  for (const auto& s : series) {
    for (std::size_t k = 0; k < s.cut_points.size(); ++k) {
      f << s.parameter << ',' << s.cut_points[k] << ',' << io::format_double(s.values[k]) << '\n';
    }
  }
  io::check_written(f, path);
}

inline void write_autocorrelation_csv(const fs::path& path, const std::vector<std::string>& names,
                                      const std::vector<Vector>& acf) {
  std::ofstream f = io::open_output(path);
  f << "parameter,cut_point_or_lag,value\n";
  for (std::size_t p = 0; p < names.size(); ++p) {
    for (Eigen::Index k = 0; k < acf[p].size(); ++k) f << names[p] << ',' << k << ',' << io::format_double(acf[p][k]) << '\n';
  }
  io::check_written(f, path);
}

/// Reads the traces in `trace_dir`, writes gelman_rubin.csv and
/// autocorrelation.csv into `out` (the trace directory when empty).
inline int cmd_diagnose(const fs::path& trace_dir, int max_lag, fs::path out = {}, std::ostream& log = std::cout) {
  if (max_lag < 0) throw ConfigError("--max-lag must be non-negative");
  std::vector<ChainTrace> traces;
  for (const auto& p : find_trace_files(trace_dir)) traces.push_back(io::read_trace_csv(p));
  const Eigen::Index n = traces.front().length();
  for (const auto& t : traces) {
    if (t.names != traces.front().names) throw IoError("traces in '" + trace_dir.string() + "' differ in columns");
    if (t.length() != n) throw IoError("traces in '" + trace_dir.string() + "' differ in length");
  }
  if (n <= max_lag) {
    throw ConfigError("--max-lag " + std::to_string(max_lag) + " needs traces longer than " + std::to_string(n) +
                      " draws");
  }
  if (n < 10) throw ConfigError("diagnostics need at least 10 recorded draws per chain");
  const DiagnosticsReport rep = diagnose(traces, max_lag);

  if (out.empty()) out = trace_dir;
  OutputTransaction tx(out);
  write_gelman_rubin_csv(tx.file("gelman_rubin.csv"), rep.gelman_rubin);
  write_autocorrelation_csv(tx.file("autocorrelation.csv"), rep.acf_parameters, rep.acf);
  tx.commit();

  double worst = 0.0;
  std::string worst_name;
  for (const auto& s : rep.gelman_rubin) {
    if (!s.values.empty() && s.values.back() > worst) {
      worst = s.values.back();
      worst_name = s.parameter;
    }
  }
  log << traces.size() << " chain(s), " << n << " draws, " << traces.front().names.size() << " parameters\n";
  if (traces.size() < 2) log << "Gelman-Rubin needs at least two chains; gelman_rubin.csv holds the header only\n";
  else log << "largest final Gelman-Rubin statistic " << worst << " (" << worst_name << ")\n";
  for (const auto& s : rep.skipped) log << "skipped " << s << ": zero within-chain variance\n";
  return kSuccess;
}

struct BenchRow {
  int nodes = 0;
  int side = 0;
  std::vector<double> acf_lag;  // chain-averaged, one per theta
  ChainStats stats;
  double seconds = 0.0;
};

/// Fits one dataset (simulated on the largest grid) at every grid size and
/// reports the hyperparameter autocorrelation at lag rc.max_lag.
inline std::vector<BenchRow> run_bench(const RunConfig& rc, std::ostream& log = std::cout) {
  if (rc.scenario != "gaussian") throw ConfigError("bench runs the gaussian scenario; set scenario = gaussian");
  if (rc.iterations - rc.burnin <= rc.max_lag) {
    throw ConfigError("bench: iterations - burnin must exceed max_lag (" + std::to_string(rc.max_lag) + ")");
  }
  const int largest = *std::max_element(rc.grid_sizes.begin(), rc.grid_sizes.end());
  GaussianScenario sim = rc.gaussian;
  sim.lattice_rows = sim.lattice_cols = static_cast<int>(std::lround(std::sqrt(static_cast<double>(largest))));
  const int smallest = *std::min_element(rc.grid_sizes.begin(), rc.grid_sizes.end());
  if (sim.sites > smallest) {
    throw ConfigError("bench: " + std::to_string(sim.sites) + " sites exceed the smallest grid (" +
                      std::to_string(smallest) + " nodes)");
  }
  Rng rng = make_substream(rc.data_seed, 0xda7aULL);
  const GaussianDataset data = simulate_gaussian_data(sim, rng);

  RunConfig run = rc;
  run.record = {false, false, true};
  std::vector<BenchRow> rows;
  for (int nodes : rc.grid_sizes) {
    const auto t0 = std::chrono::steady_clock::now();
    GaussianScenario sc = rc.gaussian;
    sc.lattice_rows = sc.lattice_cols = static_cast<int>(std::lround(std::sqrt(static_cast<double>(nodes))));
    ModelSpec<GaussianLikelihood> model = build_gaussian_model(sc, data);
    ProposalChoice choice = choose_proposal(run, model);
    if (!choice.warning.empty()) log << "warning: " << choice.warning << '\n';
    const auto results = run_chains(model, chain_config(run, choice.proposal), run.chains, run.threads);
    BenchRow row;
    row.nodes = nodes;
    row.side = sc.lattice_cols;
    std::vector<ChainTrace> traces;
    for (const auto& r : results) {
      traces.push_back(r.trace);
      row.stats += r.stats;
    }
    for (int p = 0; p < model.n_theta(); ++p) {
      row.acf_lag.push_back(mean_autocorrelation(traces, p, rc.max_lag)[rc.max_lag]);
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log << "grid " << nodes << ": data-poor acceptance " << row.stats.data_poor_rate() << ", " << row.seconds
        << " s\n";
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_bench_csv(const fs::path& path, const std::vector<BenchRow>& rows, int max_lag) {
  std::ofstream f = io::open_output(path);
  f << "nodes,side,data_rich_rate,data_poor_rate";
  for (const auto& n : gaussian_theta_names()) f << ",acf" << max_lag << '_' << n;
  f << ",seconds\n";
  for (const auto& r : rows) {
    f << r.nodes << ',' << r.side << ',' << io::format_double(r.stats.data_rich_rate()) << ','
      << io::format_double(r.stats.data_poor_rate());
    for (double a : r.acf_lag) f << ',' << io::format_double(a);
    f << ',' << io::format_double(r.seconds) << '\n';
  }
  io::check_written(f, path);
}

inline int cmd_bench(const RunConfig& rc, std::ostream& log = std::cout) {
  OutputTransaction tx(rc.out);
  const auto rows = run_bench(rc, log);
  write_bench_csv(tx.file("bench.csv"), rows, rc.max_lag);
  nlohmann::json manifest{{"command", "bench"},
                          {"build_id", LGM_SPLIT_BUILD_ID},
                          {"seed", rc.seed},
                          {"data_seed", rc.data_seed},
                          {"config_hash", hex64(rc.hash)},
                          {"config", config_json(rc.canonical)},
                          {"grid_sizes", rc.grid_sizes}};
  nlohmann::json per = nlohmann::json::array();
  double total = 0.0;
  for (const auto& r : rows) {
    nlohmann::json j = stats_json(r.stats);
    j["nodes"] = r.nodes;
    j["wall_clock_seconds"] = r.seconds;
    per.push_back(std::move(j));
    total += r.seconds;
  }
  manifest["acceptance"] = per;
  manifest["wall_clock_seconds"] = total;
  io::write_json(tx.file("manifest.json"), manifest);
  tx.commit();
  return kSuccess;
}

}  // namespace lgm::cli
