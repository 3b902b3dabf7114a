#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "lgmsplit/io/csv.hpp"
#include "lgmsplit/scenarios/gaussian.hpp"
#include "lgmsplit/scenarios/gev.hpp"

namespace lgm::io {

namespace fs = std::filesystem;

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream f = open_output(path);
  f << j.dump(2) << '\n';
  check_written(f, path);
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream f = open_input(path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

/// parameter,value rows
inline void write_named_values(const fs::path& path, const std::vector<std::string>& names, const Vector& values) {
  if (static_cast<Eigen::Index>(names.size()) != values.size()) throw DimensionMismatch("truth: names vs values");
  std::ofstream f = open_output(path);
  f << "parameter,value\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    f << names[i] << ',' << format_double(values[static_cast<Eigen::Index>(i)]) << '\n';
  }
  check_written(f, path);
}

inline std::vector<std::pair<std::string, double>> read_named_values(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const int p = t.column("parameter");
  const int v = t.column("value");
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    out.emplace_back(t.rows[r][static_cast<std::size_t>(p)],
                     parse_double(t.rows[r][static_cast<std::size_t>(v)], path.string() + ":" + std::to_string(r + 2)));
  }
  return out;
}

/// Long-form observations: group index columns then "year,value".
/// Groups must be contiguous from 0; each group needs at least one value.
inline std::vector<std::vector<double>> read_grouped_observations(const fs::path& path, int groups,
                                                                  const std::vector<std::string>& keys,
                                                                  const std::vector<int>& key_sizes) {
  const CsvTable t = read_csv(path);
  std::vector<int> cols;
  for (const auto& k : keys) cols.push_back(t.column(k));
  const int vcol = t.column("value");
  std::vector<std::vector<double>> y(static_cast<std::size_t>(groups));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = path.string() + ":" + std::to_string(r + 2);
    long g = 0;
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const long idx = parse_long(t.rows[r][static_cast<std::size_t>(cols[k])], where);
      if (idx < 0 || idx >= key_sizes[k]) throw IoError(where + ": " + keys[k] + " index out of range");
      g = g * key_sizes[k] + idx;
    }
    y[static_cast<std::size_t>(g)].push_back(parse_double(t.rows[r][static_cast<std::size_t>(vcol)], where));
  }
  for (std::size_t g = 0; g < y.size(); ++g) {
    if (y[g].empty()) throw IoError(path.string() + ": no observations for group " + std::to_string(g));
  }
  return y;
}

// ---- Gaussian scenario -----------------------------------------------------

inline std::vector<std::string> gaussian_truth_names(const GaussianDataset& d) {
  std::vector<std::string> names = gaussian_theta_names();
  for (Eigen::Index k = 0; k < d.beta_mu.size(); ++k) names.push_back("beta_mu_" + std::to_string(k));
  for (Eigen::Index k = 0; k < d.beta_tau.size(); ++k) names.push_back("beta_tau_" + std::to_string(k));
  const auto sites = d.y.size();
  for (std::size_t i = 0; i < sites; ++i) names.push_back("mu_" + std::to_string(i));
  for (std::size_t i = 0; i < sites; ++i) names.push_back("tau_" + std::to_string(i));
  return names;
}

/// sites.csv, observations.csv, truth.csv, dataset.json. Returns the files written.
inline std::vector<fs::path> write_gaussian_dataset(const fs::path& dir, const GaussianScenario& sc,
                                                    const GaussianDataset& d) {
  std::vector<fs::path> files{dir / "sites.csv", dir / "observations.csv", dir / "truth.csv", dir / "dataset.json"};
  {
    std::ofstream f = open_output(files[0]);
    f << "site,x,y";
    for (Eigen::Index k = 0; k < d.x_mu.cols(); ++k) f << ",x_mu_" << k;
    for (Eigen::Index k = 0; k < d.x_tau.cols(); ++k) f << ",x_tau_" << k;
    f << '\n';
    for (Eigen::Index i = 0; i < d.site_xy.rows(); ++i) {
      f << i << ',' << format_double(d.site_xy(i, 0)) << ',' << format_double(d.site_xy(i, 1));
      for (Eigen::Index k = 0; k < d.x_mu.cols(); ++k) f << ',' << format_double(d.x_mu(i, k));
      for (Eigen::Index k = 0; k < d.x_tau.cols(); ++k) f << ',' << format_double(d.x_tau(i, k));
      f << '\n';
    }
    check_written(f, files[0]);
  }
  {
    std::ofstream f = open_output(files[1]);
    f << "site,year,value\n";
    for (std::size_t i = 0; i < d.y.size(); ++i) {
      for (std::size_t t = 0; t < d.y[i].size(); ++t) f << i << ',' << t << ',' << format_double(d.y[i][t]) << '\n';
    }
    check_written(f, files[1]);
  }
  Vector truth(d.theta.size() + d.beta_mu.size() + d.beta_tau.size() + d.eta.size());
  truth << d.theta, d.beta_mu, d.beta_tau, d.eta;
  write_named_values(files[2], gaussian_truth_names(d), truth);
  write_json(files[3], {{"scenario", "gaussian"},
                        {"sites", static_cast<int>(d.y.size())},
                        {"years", sc.years},
                        {"covariates", sc.covariates},
                        {"observation", sc.observation == GaussianLikelihood::Mode::KnownVariance ? "known-variance"
                                                                                                   : "mean-logvar"},
                        {"known_variance", sc.known_variance}});
  return files;
}

inline GaussianDataset read_gaussian_dataset(const fs::path& dir) {
  GaussianDataset d;
  const CsvTable s = read_csv(dir / "sites.csv");
  const int n = static_cast<int>(s.rows.size());
  if (n < 1) throw IoError((dir / "sites.csv").string() + ": no sites");
  int pm = 0, pt = 0;
  for (const auto& h : s.header) {
    if (h.rfind("x_mu_", 0) == 0) ++pm;
    if (h.rfind("x_tau_", 0) == 0) ++pt;
  }
  d.site_xy.resize(n, 2);
  d.x_mu.resize(n, pm);
  d.x_tau.resize(n, pt);
  const int cx = s.column("x"), cy = s.column("y"), cs = s.column("site");
  for (int i = 0; i < n; ++i) {
    const auto& row = s.rows[static_cast<std::size_t>(i)];
    const std::string where = (dir / "sites.csv").string() + ":" + std::to_string(i + 2);
    if (parse_long(row[static_cast<std::size_t>(cs)], where) != i) throw IoError(where + ": sites must be numbered 0..n-1 in order");
    d.site_xy(i, 0) = parse_double(row[static_cast<std::size_t>(cx)], where);
    d.site_xy(i, 1) = parse_double(row[static_cast<std::size_t>(cy)], where);
    for (int k = 0; k < pm; ++k) d.x_mu(i, k) = parse_double(row[static_cast<std::size_t>(s.column("x_mu_" + std::to_string(k)))], where);
    for (int k = 0; k < pt; ++k) d.x_tau(i, k) = parse_double(row[static_cast<std::size_t>(s.column("x_tau_" + std::to_string(k)))], where);
  }
  d.y = read_grouped_observations(dir / "observations.csv", n, {"site"}, {n});
  return d;
}

// ---- GEV scenario ----------------------------------------------------------

/// covariates.csv, observations.csv, truth.csv, dataset.json.
inline std::vector<fs::path> write_gev_dataset(const fs::path& dir, const GevScenario& sc, const GevDataset& d) {
  std::vector<fs::path> files{dir / "covariates.csv", dir / "observations.csv", dir / "truth.csv",
                              dir / "dataset.json"};
  const int n = sc.partitions();
  {
    std::ofstream f = open_output(files[0]);
    f << "river,month";
    for (Eigen::Index k = 0; k < d.covariates.cols(); ++k) f << ",x_" << k + 1;
    f << '\n';
    for (int r = 0; r < n; ++r) {
      f << r / 12 << ',' << r % 12;
      for (Eigen::Index k = 0; k < d.covariates.cols(); ++k) f << ',' << format_double(d.covariates(r, k));
      f << '\n';
    }
    check_written(f, files[0]);
  }
  {
    std::ofstream f = open_output(files[1]);
    f << "river,month,year,value\n";
    for (int r = 0; r < n; ++r) {
      const auto& ys = d.y[static_cast<std::size_t>(r)];
      for (std::size_t t = 0; t < ys.size(); ++t) {
        f << r / 12 << ',' << r % 12 << ',' << t << ',' << format_double(ys[t]) << '\n';
      }
    }
    check_written(f, files[1]);
  }
  std::vector<std::string> names = gev_theta_names(sc.p1());
  const auto nu_names = gev_nu_names(sc.p1());
  const auto eta_names = gev_eta_names(sc.rivers);
  names.insert(names.end(), nu_names.begin(), nu_names.end());
  names.insert(names.end(), eta_names.begin(), eta_names.end());
  Vector truth(d.theta.size() + d.nu.size() + d.eta.size());
  truth << d.theta, d.nu, d.eta;
  write_named_values(files[2], names, truth);
  write_json(files[3], {{"scenario", "gev"}, {"rivers", sc.rivers}, {"years", sc.years}, {"covariates", sc.covariates}});
  return files;
}

/// Reads covariates and observations; `sc.rivers` and `sc.covariates` are
/// taken from the files.
inline GevDataset read_gev_dataset(const fs::path& dir, GevScenario& sc) {
  GevDataset d;
  const CsvTable c = read_csv(dir / "covariates.csv");
  const int n = static_cast<int>(c.rows.size());
  if (n < 12 || n % 12 != 0) throw IoError((dir / "covariates.csv").string() + ": need 12 rows per river");
  const int p = static_cast<int>(c.header.size()) - 2;
  if (p < 0) throw IoError((dir / "covariates.csv").string() + ": missing river/month columns");
  sc.rivers = n / 12;
  sc.covariates = p;
  d.covariates.resize(n, p);
  const int cr = c.column("river"), cm = c.column("month");
  for (int r = 0; r < n; ++r) {
    const auto& row = c.rows[static_cast<std::size_t>(r)];
    const std::string where = (dir / "covariates.csv").string() + ":" + std::to_string(r + 2);
    if (parse_long(row[static_cast<std::size_t>(cr)], where) != r / 12 ||
        parse_long(row[static_cast<std::size_t>(cm)], where) != r % 12) {
      throw IoError(where + ": rows must be ordered by river then month");
    }
    for (int k = 0; k < p; ++k) d.covariates(r, k) = parse_double(row[static_cast<std::size_t>(c.column("x_" + std::to_string(k + 1)))], where);
  }
  d.y = read_grouped_observations(dir / "observations.csv", n, {"river", "month"}, {sc.rivers, 12});
  return d;
}

inline std::string dataset_scenario(const fs::path& dir) {
  const auto j = read_json(dir / "dataset.json");
  if (!j.contains("scenario") || !j["scenario"].is_string()) {
    throw IoError((dir / "dataset.json").string() + ": missing 'scenario'");
  }
  return j["scenario"].get<std::string>();
}

}  // namespace lgm::io
