#pragma once

#include <Eigen/Dense>
#include <array>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "epitransport/common.hpp"
#include "epitransport/graph.hpp"
#include "epitransport/odeint.hpp"
#include "epitransport/transport.hpp"

namespace epitransport::data {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// CSV plumbing (no quoting in any of our formats)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) fields.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

inline void expect_header(const std::vector<std::string>& fields, const std::vector<std::string>& names,
                          const std::string& path) {
  if (fields.size() != names.size()) throw_data("bad header in " + path);
  for (size_t i = 0; i < names.size(); ++i)
    if (fields[i] != names[i])
      throw_data("bad header in " + path + ": expected column '" + names[i] + "', found '" + fields[i] + "'");
}

inline double parse_number(const std::string& s, const std::string& context) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw_data("cannot parse number '" + s + "' in " + context);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct EpidemicDataset {
  std::vector<std::string> region_ids;
  Eigen::MatrixXd cases;                  // N x T, raw daily new cases
  std::vector<Eigen::MatrixXd> mobility;  // T snapshots, N x N, flow from row to column
  graph::RegionGraph graph;
  std::vector<std::string> dates;         // ISO-8601, strictly consecutive days
  long start_day = 0;                     // days-since-epoch of dates[0]

  Eigen::Index regions() const { return cases.rows(); }
  Eigen::Index days() const { return cases.cols(); }

  int day_index(const std::string& iso) const {
    long d = parse_iso_date(iso);
    long idx = d - start_day;
    if (idx < 0 || idx >= static_cast<long>(days()))
      throw_data("date " + iso + " is outside the observation period " + dates.front() + ".." +
                 dates.back());
    return static_cast<int>(idx);
  }
};

struct LoadOptions {
  bool mobility_mean_aggregation = false;  // duplicate (date,from,to) rows: sum by default, mean if set
  bool strict_mobility_days = false;       // error on missing mobility days instead of reusing previous
};

/// Reads the centroids CSV `region_id,lat,lon`; row order defines the region
/// index order used everywhere downstream.
inline void read_centroids_csv(const std::string& path, std::vector<std::string>& ids,
                               std::vector<std::array<double, 2>>& centroids) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open centroids file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw_data("empty centroids file: " + path);
  detail::expect_header(detail::split_csv_line(line), {"region_id", "lat", "lon"}, path);
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 3) throw_data("bad centroids row '" + line + "' in " + path);
    for (const auto& existing : ids)
      if (existing == f[0]) throw_data("duplicate region id '" + f[0] + "' in " + path);
    ids.push_back(f[0]);
    centroids.push_back({detail::parse_number(f[1], path), detail::parse_number(f[2], path)});
  }
  if (ids.size() < 2) throw_data("centroids file must list at least 2 regions: " + path);
}

inline EpidemicDataset load_dataset(const std::string& cases_path, const std::string& mobility_path,
                                    const std::string& centroids_path, const LoadOptions& opt = {}) {
  EpidemicDataset ds;
  std::vector<std::array<double, 2>> centroids;
  read_centroids_csv(centroids_path, ds.region_ids, centroids);
  ds.graph = graph::build_region_graph(ds.region_ids, centroids);
  const Eigen::Index n = static_cast<Eigen::Index>(ds.region_ids.size());

  std::map<std::string, Eigen::Index> region_index;
  for (Eigen::Index i = 0; i < n; ++i) region_index[ds.region_ids[static_cast<size_t>(i)]] = i;

  // Cases: collect (region, day, value) and check the day range is gap-free
  // with exactly one record per (region, day).
  struct CaseRow { Eigen::Index region; long day; double value; };
  std::vector<CaseRow> rows;
  {
    std::ifstream in(cases_path);
    if (!in) throw_data("cannot open cases file: " + cases_path);
    std::string line;
    if (!std::getline(in, line)) throw_data("empty cases file: " + cases_path);
    detail::expect_header(detail::split_csv_line(line), {"region_id", "date", "new_cases"}, cases_path);
    while (std::getline(in, line)) {
      if (detail::trim(line).empty()) continue;
      auto f = detail::split_csv_line(line);
      if (f.size() != 3) throw_data("bad cases row '" + line + "' in " + cases_path);
      auto it = region_index.find(f[0]);
      if (it == region_index.end())
        throw_data("cases file references unknown region id '" + f[0] + "'");
      double v = detail::parse_number(f[2], cases_path);
      if (!(v >= 0.0)) throw_data("negative case count for region '" + f[0] + "' on " + f[1]);
      rows.push_back({it->second, parse_iso_date(f[1]), v});
    }
  }
  if (rows.empty()) throw_data("cases file has no data rows: " + cases_path);

  long day_min = rows.front().day, day_max = rows.front().day;
  for (const auto& r : rows) {
    day_min = std::min(day_min, r.day);
    day_max = std::max(day_max, r.day);
  }
  const long t_count = day_max - day_min + 1;
  ds.start_day = day_min;
  ds.cases = Eigen::MatrixXd::Constant(n, t_count, -1.0);
  for (const auto& r : rows) {
    double& cell = ds.cases(r.region, r.day - day_min);
    if (cell >= 0.0)
      throw_data("duplicate cases record for region '" + ds.region_ids[static_cast<size_t>(r.region)] +
                 "' on " + format_iso_date(r.day));
    cell = r.value;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (long t = 0; t < t_count; ++t)
      if (ds.cases(i, t) < 0.0)
        throw_data("missing cases record for region '" + ds.region_ids[static_cast<size_t>(i)] +
                   "' on " + format_iso_date(day_min + t) + " (date gaps are not imputed)");
  ds.dates.reserve(static_cast<size_t>(t_count));
  for (long t = 0; t < t_count; ++t) ds.dates.push_back(format_iso_date(day_min + t));

  // Mobility, long format; absent pairs are zero, duplicate triples aggregate.
  std::vector<Eigen::MatrixXd> counts;
  ds.mobility.assign(static_cast<size_t>(t_count), Eigen::MatrixXd::Zero(n, n));
  if (opt.mobility_mean_aggregation) counts.assign(static_cast<size_t>(t_count), Eigen::MatrixXd::Zero(n, n));
  std::vector<bool> day_seen(static_cast<size_t>(t_count), false);
  {
    std::ifstream in(mobility_path);
    if (!in) throw_data("cannot open mobility file: " + mobility_path);
    std::string line;
    if (!std::getline(in, line)) throw_data("empty mobility file: " + mobility_path);
    detail::expect_header(detail::split_csv_line(line), {"date", "from_region", "to_region", "flow"},
                          mobility_path);
    while (std::getline(in, line)) {
      if (detail::trim(line).empty()) continue;
      auto f = detail::split_csv_line(line);
      if (f.size() != 4) throw_data("bad mobility row '" + line + "' in " + mobility_path);
      long day = parse_iso_date(f[0]);
      if (day < day_min || day > day_max)
        throw_data("mobility date " + f[0] + " is outside the cases observation period");
      auto from = region_index.find(f[1]);
      auto to = region_index.find(f[2]);
      if (from == region_index.end())
        throw_data("mobility file references unknown region id '" + f[1] + "'");
      if (to == region_index.end())
        throw_data("mobility file references unknown region id '" + f[2] + "'");
      double flow = detail::parse_number(f[3], mobility_path);
      if (!(flow >= 0.0)) throw_data("negative mobility flow on " + f[0]);
      const size_t t = static_cast<size_t>(day - day_min);
      ds.mobility[t](from->second, to->second) += flow;
      if (opt.mobility_mean_aggregation) counts[t](from->second, to->second) += 1.0;
      day_seen[t] = true;
    }
  }
  if (opt.mobility_mean_aggregation) {
    for (size_t t = 0; t < ds.mobility.size(); ++t)
      ds.mobility[t] = (ds.mobility[t].array() / counts[t].array().max(1.0)).matrix();
  }
  for (size_t t = 0; t < day_seen.size(); ++t) {
    if (day_seen[t]) continue;
    if (opt.strict_mobility_days)
      throw_data("no mobility records for " + ds.dates[t] + " (strict mode)");
    if (t == 0) {
      log_warn("no mobility records for " + ds.dates[t] + "; using a zero matrix");
    } else {
      log_warn("no mobility records for " + ds.dates[t] + "; reusing the previous day");
      ds.mobility[t] = ds.mobility[t - 1];
    }
  }
  return ds;
}

/// Collapses the raw tri-daily snapshots into one daily matrix (elementwise
/// sum; mean available as the alternative aggregation).
inline Eigen::MatrixXd aggregate_mobility(const std::vector<Eigen::MatrixXd>& tri_daily,
                                          bool mean = false) {
  if (tri_daily.size() != 3) throw_data("expected exactly 3 mobility snapshots per day");
  Eigen::MatrixXd out = tri_daily[0] + tri_daily[1] + tri_daily[2];
  if (mean) out /= 3.0;
  return out;
}

// ---------------------------------------------------------------------------
// Chronological splits and window samples
// ---------------------------------------------------------------------------

struct NormStats {
  Eigen::VectorXd mean;    // per region, train span
  Eigen::VectorXd stddev;  // per region, floored at 1e-6
  double mobility_max = 1.0;

  Eigen::MatrixXd normalize(const Eigen::MatrixXd& raw) const {
    return ((raw.colwise() - mean).array().colwise() / stddev.array()).matrix();
  }
  Eigen::MatrixXd denormalize(const Eigen::MatrixXd& norm) const {
    return ((norm.array().colwise() * stddev.array()).colwise() + mean.array()).matrix();
  }
};

struct WindowSample {
  Eigen::MatrixXd input_window;  // N x w, normalized
  Eigen::MatrixXd target;        // N x h, raw
  int anchor_t = 0;              // dataset index of the last input day
};

struct SplitSpans {
  int train_end = 0;  // train span [0, train_end)
  int val_end = 0;    // val span [train_end, val_end), test span [val_end, T)
};

struct SplitResult {
  std::vector<WindowSample> train, val, test;
  NormStats stats;
  SplitSpans spans;
  int window = 0;
  int horizon = 0;
};

/// Builds stride-1 window samples fully contained in [begin, end): anchors run
/// where both the w-day input and the h-day target fit inside the span, so no
/// sample leaks across a split boundary.
inline std::vector<WindowSample> make_windows(const EpidemicDataset& ds, const NormStats& stats,
                                              int begin, int end, int w, int h) {
  std::vector<WindowSample> out;
  for (int anchor = begin + w - 1; anchor + h <= end - 1; ++anchor) {
    WindowSample s;
    s.anchor_t = anchor;
    s.input_window = stats.normalize(ds.cases.middleCols(anchor - w + 1, w));
    s.target = ds.cases.middleCols(anchor + 1, h);
    out.push_back(std::move(s));
  }
  return out;
}

inline NormStats compute_norm_stats(const EpidemicDataset& ds, int train_end) {
  NormStats stats;
  Eigen::MatrixXd span = ds.cases.leftCols(train_end);
  stats.mean = span.rowwise().mean();
  Eigen::VectorXd var = (span.colwise() - stats.mean).array().square().rowwise().mean();
  stats.stddev = var.array().sqrt().max(1e-6);
  stats.mobility_max = 0.0;
  for (int t = 0; t < train_end; ++t)
    stats.mobility_max = std::max(stats.mobility_max, ds.mobility[static_cast<size_t>(t)].maxCoeff());
  if (stats.mobility_max <= 1e-12) stats.mobility_max = 1.0;
  return stats;
}

inline SplitResult chronological_split(const EpidemicDataset& ds,
                                       std::array<double, 3> ratios = {0.6, 0.2, 0.2}, int w = 7,
                                       int h = 3) {
  for (double r : ratios)
    if (!(r >= 0.0 && r <= 1.0)) throw_config("split ratios must lie in [0, 1]");
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9) throw_config("split ratios must sum to 1");
  if (w < 1 || h < 1) throw_config("window and horizon must be >= 1");

  const int t_count = static_cast<int>(ds.days());
  SplitResult split;
  split.window = w;
  split.horizon = h;
  split.spans.train_end = static_cast<int>(std::floor(ratios[0] * t_count));
  split.spans.val_end = static_cast<int>(std::floor((ratios[0] + ratios[1]) * t_count));

  const int need = w + h;
  auto span_len = [&](int i) {
    if (i == 0) return split.spans.train_end;
    if (i == 1) return split.spans.val_end - split.spans.train_end;
    return t_count - split.spans.val_end;
  };
  for (int i = 0; i < 3; ++i) {
    if (ratios[static_cast<size_t>(i)] > 0.0 && span_len(i) < need) {
      int min_t = t_count;
      while (static_cast<int>(std::floor(ratios[static_cast<size_t>(i)] * min_t)) < need) ++min_t;
      throw_data("time series too short: split span " + std::to_string(i) + " has " +
                 std::to_string(span_len(i)) + " days but needs at least w+h=" + std::to_string(need) +
                 "; minimum T for these ratios is about " + std::to_string(min_t));
    }
  }

  split.stats = compute_norm_stats(ds, split.spans.train_end);
  split.train = make_windows(ds, split.stats, 0, split.spans.train_end, w, h);
  split.val = make_windows(ds, split.stats, split.spans.train_end, split.spans.val_end, w, h);
  split.test = make_windows(ds, split.stats, split.spans.val_end, t_count, w, h);
  if (ratios[1] == 0.0 && ratios[2] == 0.0)
    log_warn("degenerate split ratios: validation and test sets are empty");
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic DAR datasets (oracle data for the acceptance tests)
// ---------------------------------------------------------------------------

struct SynthConfig {
  int regions = 20;
  int days = 90;
  double k = 0.4;                 // planted diffusion coefficient
  double gamma_base = 0.015;      // planted per-region reaction rate
  double gamma_hotspot = 0.06;    // planted rate of the hotspot region
  int hotspot = -1;               // defaults to regions / 3
  double mobility_level = 0.002;  // scale of the random daily flows
  double mobility_density = 0.3;  // probability an ordered pair has flow
  double mobility_ramp = 6.0;   // peak flow multiplier of the mid-series pulse
  double mobility_late = 3.0;   // flow multiplier after the pulse relaxes
  double noise = 0.05;            // log-normal sigma; 0 disables noise
  uint64_t seed = 7;
  std::string start_date = "2020-03-01";
  double init_low = 30.0, init_high = 120.0;
  double hotspot_init_scale = 0.25;  // hotspot starts low and catches up
  bool disable_diffusion = false;  // zero out planted processes for oracles
  bool disable_advection = false;
  bool disable_reaction = false;
};

struct SynthResult {
  EpidemicDataset dataset;
  json meta;
};

/// Forward-integrates the fused transport field (mu fixed at 0.5) with RK4 at
/// dt = 0.1 from a random positive initial state, samples daily, applies
/// multiplicative log-normal noise and rounds to non-negative integers.
inline SynthResult synthesize_dar(const SynthConfig& cfg) {
  if (cfg.regions < 2) throw_config("synthesize: need at least 2 regions");
  if (cfg.days < 2) throw_config("synthesize: need at least 2 days");
  if (!(cfg.k >= 0.0)) throw_config("synthesize: k must be >= 0");

  SynthResult result;
  EpidemicDataset& ds = result.dataset;
  const int n = cfg.regions;
  const int hotspot = cfg.hotspot >= 0 ? cfg.hotspot : n / 3;
  if (hotspot >= n) throw_config("synthesize: hotspot index out of range");

  Rng geo_rng(derive_seed(cfg.seed, "synth-geo"));
  std::vector<std::array<double, 2>> centroids;
  for (int i = 0; i < n; ++i) {
    ds.region_ids.push_back("R" + std::string(i < 10 ? "0" : "") + std::to_string(i));
    centroids.push_back({geo_rng.uniform(42.0, 52.0), geo_rng.uniform(-2.0, 8.0)});
  }
  ds.graph = graph::build_region_graph(ds.region_ids, centroids);

  Eigen::VectorXd gamma = Eigen::VectorXd::Constant(n, cfg.gamma_base);
  gamma(hotspot) = cfg.gamma_hotspot;
  if (cfg.disable_reaction) gamma.setZero();
  const double k_used = cfg.disable_diffusion ? 0.0 : cfg.k;

  // Persistent sparse flow structure with daily jitter.
  Rng mob_rng(derive_seed(cfg.seed, "synth-mobility"));
  Eigen::MatrixXd base_flow = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (mob_rng.uniform() < cfg.mobility_density)
        base_flow(i, j) = cfg.mobility_level * mob_rng.uniform(0.2, 1.0);
    }
  if (cfg.disable_advection) base_flow.setZero();
  // Flows follow a triangular pulse peaking at 30% of the series and relaxing
  // to the late level by 55%. The rising drain bends the planted exponentials
  // into a first wave and decline inside the train span; the late level picks
  // which regions can rebuild a second wave (only those whose reaction rate
  // clears it), keeping the held-out spans inside the trained range.
  ds.mobility.reserve(static_cast<size_t>(cfg.days));
  const double t_peak = 0.3 * (cfg.days - 1);
  const double t_back = 0.55 * (cfg.days - 1);
  for (int t = 0; t < cfg.days; ++t) {
    double ramp;
    if (t <= t_peak) {
      const double shape = static_cast<double>(t) / t_peak;
      ramp = 1.0 + (cfg.mobility_ramp - 1.0) * shape;
    } else if (t < t_back) {
      const double shape = (t_back - static_cast<double>(t)) / (t_back - t_peak);
      ramp = cfg.mobility_late + (cfg.mobility_ramp - cfg.mobility_late) * shape;
    } else {
      ramp = cfg.mobility_late;
    }
    Eigen::MatrixXd m = base_flow;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (m(i, j) > 0.0) m(i, j) *= ramp * mob_rng.uniform(0.7, 1.3);
    ds.mobility.push_back(std::move(m));
  }

  // The hotspot starts low and catches up through its strong reaction rate, so
  // its wave lags the pack and its full range is visited inside the train span.
  Rng init_rng(derive_seed(cfg.seed, "synth-init"));
  Eigen::MatrixXd state(n, 1);
  for (int i = 0; i < n; ++i) state(i, 0) = init_rng.uniform(cfg.init_low, cfg.init_high);
  state(hotspot, 0) *= cfg.hotspot_init_scale;

  auto field = [&](double t, const Eigen::MatrixXd& x) -> Eigen::MatrixXd {
    auto day = static_cast<size_t>(std::min(static_cast<int>(std::floor(t)), cfg.days - 1));
    Eigen::MatrixXd dif = -k_used * (ds.graph.laplacian_norm * x);
    Eigen::MatrixXd adv = ds.mobility[day].transpose() * x;
    return 0.5 * dif - 0.5 * adv + (x.array().colwise() * gamma.array()).matrix();
  };

  Eigen::MatrixXd truth(n, cfg.days);
  truth.col(0) = state.col(0);
  std::vector<double> grid(static_cast<size_t>(cfg.days));
  for (int t = 0; t < cfg.days; ++t) grid[static_cast<size_t>(t)] = static_cast<double>(t);
  auto traj = odeint::integrate_fixed(field, state, grid, odeint::Method::rk4, 0.1);
  for (int t = 0; t < cfg.days; ++t) {
    truth.col(t) = traj[static_cast<size_t>(t)].col(0);
    if (truth.col(t).cwiseAbs().maxCoeff() > 1e9)
      throw_divergence("synthetic simulation diverged (state above 1e9); try a smaller gamma");
  }

  Rng noise_rng(derive_seed(cfg.seed, "synth-noise"));
  ds.cases.resize(n, cfg.days);
  for (int t = 0; t < cfg.days; ++t)
    for (int i = 0; i < n; ++i) {
      double v = truth(i, t);
      if (cfg.noise > 0.0)
        v *= std::exp(cfg.noise * noise_rng.normal() - 0.5 * cfg.noise * cfg.noise);
      ds.cases(i, t) = std::max(0.0, std::round(v));
    }

  ds.start_day = parse_iso_date(cfg.start_date);
  for (int t = 0; t < cfg.days; ++t) ds.dates.push_back(format_iso_date(ds.start_day + t));

  result.meta = json{{"generator", "epitransport-simulate"},
                     {"seed", cfg.seed},
                     {"regions", n},
                     {"days", cfg.days},
                     {"k", k_used},
                     {"gamma_base", cfg.disable_reaction ? 0.0 : cfg.gamma_base},
                     {"gamma_hotspot", cfg.disable_reaction ? 0.0 : cfg.gamma_hotspot},
                     {"hotspot_region", ds.region_ids[static_cast<size_t>(hotspot)]},
                     {"hotspot_index", hotspot},
                     {"mobility_level", cfg.disable_advection ? 0.0 : cfg.mobility_level},
                     {"mobility_density", cfg.mobility_density},
                     {"mobility_ramp", cfg.mobility_ramp},
                     {"mobility_late", cfg.mobility_late},
                     {"noise", cfg.noise},
                     {"start_date", cfg.start_date}};
  json gamma_json = json::array();
  for (int i = 0; i < n; ++i) gamma_json.push_back(gamma(i));
  result.meta["gamma"] = gamma_json;
  return result;
}

/// Writes a dataset in the canonical three-file format (+ optional meta.json).
inline void write_dataset(const std::string& dir, const EpidemicDataset& ds,
                          const json* meta = nullptr) {
  {
    std::ofstream out(dir + "/centroids.csv");
    if (!out) throw_data("cannot write " + dir + "/centroids.csv");
    out << "region_id,lat,lon\n";
    for (size_t i = 0; i < ds.region_ids.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g", ds.graph.centroids[i][0], ds.graph.centroids[i][1]);
      out << ds.region_ids[i] << "," << buf << "\n";
    }
  }
  {
    std::ofstream out(dir + "/cases.csv");
    if (!out) throw_data("cannot write " + dir + "/cases.csv");
    out << "region_id,date,new_cases\n";
    for (Eigen::Index i = 0; i < ds.regions(); ++i)
      for (Eigen::Index t = 0; t < ds.days(); ++t) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", ds.cases(i, t));
        out << ds.region_ids[static_cast<size_t>(i)] << "," << ds.dates[static_cast<size_t>(t)] << ","
            << buf << "\n";
      }
  }
  {
    std::ofstream out(dir + "/mobility.csv");
    if (!out) throw_data("cannot write " + dir + "/mobility.csv");
    out << "date,from_region,to_region,flow\n";
    for (Eigen::Index t = 0; t < ds.days(); ++t)
      for (Eigen::Index i = 0; i < ds.regions(); ++i)
        for (Eigen::Index j = 0; j < ds.regions(); ++j) {
          const double flow = ds.mobility[static_cast<size_t>(t)](i, j);
          if (flow <= 0.0) continue;
          char buf[32];
          std::snprintf(buf, sizeof(buf), "%.17g", flow);
          out << ds.dates[static_cast<size_t>(t)] << "," << ds.region_ids[static_cast<size_t>(i)] << ","
              << ds.region_ids[static_cast<size_t>(j)] << "," << buf << "\n";
        }
  }
  if (meta != nullptr) {
    std::ofstream out(dir + "/meta.json");
    if (!out) throw_data("cannot write " + dir + "/meta.json");
    out << meta->dump(2) << "\n";
  }
}

}  // namespace epitransport::data
