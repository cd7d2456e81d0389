#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <nlohmann/json.hpp>

#include "iod/crlb.hpp"
#include "iod/errors.hpp"
#include "iod/estimator.hpp"
#include "iod/format.hpp"
#include "iod/measurement.hpp"
#include "iod/result.hpp"
#include "iod/scenario.hpp"
#include "iod/stats.hpp"
#include "iod/trilateration.hpp"

namespace iod {

inline constexpr std::array<const char*, 6> kAxisNames{"px", "py", "pz", "vx", "vy", "vz"};

/// Fraction of failed runs above which a sweep level is flagged.
inline constexpr double kMaxFailureFraction = 0.10;

struct EstimatorSet {
  bool wls = true;
  bool tri = true;

  static EstimatorSet from_names(const std::vector<std::string>& names) {
    EstimatorSet set{false, false};
    for (const auto& n : names) {
      if (n == "wls") {
        set.wls = true;
      } else if (n == "tri") {
        set.tri = true;
      } else {
        throw ValidationError("unknown estimator '" + n + "' (expected wls or tri)");
      }
    }
    if (!set.wls && !set.tri) throw ValidationError("no estimator selected");
    return set;
  }
};

struct EstimatorOutcome {
  bool enabled = false;
  bool ok = false;
  std::string error;
  Vector6d estimate = Vector6d::Zero();
  Vector6d stage1_estimate = Vector6d::Zero();
  Vector6d sigma_axis = Vector6d::Zero();
  EstimateWithCovariance full;
};

struct RunRecord {
  std::uint64_t run_index = 0;
  EstimatorOutcome wls;
  EstimatorOutcome tri;
};

namespace detail {

template <typename F>
EstimatorOutcome capture(F&& estimate_fn) {
  EstimatorOutcome o;
  o.enabled = true;
  try {
    o.full = estimate_fn();
    o.estimate = o.full.state.stacked();
    o.stage1_estimate = o.full.stage1_state.stacked();
    o.sigma_axis << o.full.position_sigma(), o.full.velocity_sigma();
    o.ok = o.estimate.allFinite();
    if (!o.ok) o.error = "non-finite estimate";
  } catch (const EstimationError& e) {
    o.error = e.what();
  }
  return o;
}

}  // namespace detail

/// One Monte Carlo run: both estimators see draws keyed by the same
/// (seed, run_index).
inline RunRecord run_once(const Scenario& sc, double sigma_t, std::uint64_t run_index,
                          EstimatorSet set) {
  NoiseModel noise = sc.noise;
  noise.sigma_t = sigma_t;
  RunRecord rec;
  rec.run_index = run_index;
  if (set.wls) {
    rec.wls = detail::capture([&] {
      const MeasurementSet m = simulate(sc.network, sc.target, noise, run_index);
      return estimate(sc.network, m, {sc.experiment.stage1_passes});
    });
  }
  if (set.tri) {
    rec.tri = detail::capture(
        [&] { return trilaterate(derive_ranges(sc.network, sc.target, noise, run_index)); });
  }
  return rec;
}

inline unsigned default_thread_count() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Runs 0..runs-1 on a worker pool. Output is ordered by run index and does
/// not depend on the number of threads.
inline std::vector<RunRecord> run_batch(const Scenario& sc, double sigma_t, int runs,
                                        EstimatorSet set, unsigned threads = 0) {
  if (runs < 1) throw ValidationError("runs must be >= 1");
  std::vector<RunRecord> out(static_cast<std::size_t>(runs));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int k = next++; k < runs; k = next++) {
      out[static_cast<std::size_t>(k)] = run_once(sc, sigma_t, static_cast<std::uint64_t>(k), set);
    }
  };
  const unsigned n = std::min<unsigned>(threads == 0 ? default_thread_count() : threads,
                                        static_cast<unsigned>(runs));
  std::vector<std::jthread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  return out;
}

// ---------------------------------------------------------------------------
// RMSE sweep

struct ExperimentSpec {
  std::vector<double> sigma_grid;
  int runs = 1000;
  EstimatorSet estimators;
  std::filesystem::path output_dir;
  unsigned threads = 0;

  static ExperimentSpec from_scenario(const Scenario& sc) {
    return {sc.experiment.sigma_grid, sc.experiment.runs,
            EstimatorSet::from_names(sc.experiment.estimators), {}, 0};
  }
};

struct RmseRow {
  double sigma_t = 0.0;
  std::string estimator;
  std::string stage;
  double pos_rmse_m = 0.0;
  double vel_rmse_mps = 0.0;
  double crlb_pos_m = 0.0;
  double crlb_vel_mps = 0.0;
  int n_ok = 0;
  int n_failed = 0;
  bool flagged = false;
};

/// sqrt(mean ||estimate - truth||^2) over successful runs, position and velocity.
inline std::array<double, 2> rmse(const std::vector<RunRecord>& records,
                                  const std::function<const EstimatorOutcome&(const RunRecord&)>& pick,
                                  const Vector6d& truth, bool stage1, int& n_ok) {
  double sp = 0.0, sv = 0.0;
  n_ok = 0;
  for (const auto& r : records) {
    const auto& o = pick(r);
    if (!o.ok) continue;
    const Vector6d e = (stage1 ? o.stage1_estimate : o.estimate) - truth;
    sp += e.head<3>().squaredNorm();
    sv += e.tail<3>().squaredNorm();
    ++n_ok;
  }
  if (n_ok == 0) return {NAN, NAN};
  return {std::sqrt(sp / n_ok), std::sqrt(sv / n_ok)};
}

inline std::vector<RmseRow> rmse_rows(const Scenario& sc, double sigma_t,
                                      const std::vector<RunRecord>& records, EstimatorSet set) {
  NoiseModel noise = sc.noise;
  noise.sigma_t = sigma_t;
  const CrlbResult bound = crlb(sc.network, sc.target, noise);
  const Vector6d truth = sc.target.stacked();
  const int total = static_cast<int>(records.size());
  std::vector<RmseRow> rows;
  auto add = [&](const char* name, const char* stage, bool stage1, auto pick) {
    RmseRow row{sigma_t, name, stage};
    const auto [p, v] = rmse(records, pick, truth, stage1, row.n_ok);
    row.pos_rmse_m = p;
    row.vel_rmse_mps = v;
    row.crlb_pos_m = bound.position_bound_m;
    row.crlb_vel_mps = bound.velocity_bound_mps;
    row.n_failed = total - row.n_ok;
    row.flagged = row.n_failed > kMaxFailureFraction * total;
    rows.push_back(row);
  };
  auto wls = [](const RunRecord& r) -> const EstimatorOutcome& { return r.wls; };
  auto tri = [](const RunRecord& r) -> const EstimatorOutcome& { return r.tri; };
  if (set.wls) {
    add("wls", "final", false, wls);
    add("wls", "stage1", true, wls);
  }
  if (set.tri) add("tri", "final", false, tri);
  return rows;
}

inline std::vector<RmseRow> rmse_sweep(const Scenario& sc, const ExperimentSpec& spec) {
  if (spec.runs < 1) throw ValidationError("runs must be >= 1");
  if (spec.sigma_grid.empty()) throw ValidationError("sigma grid is empty");
  for (std::size_t k = 0; k < spec.sigma_grid.size(); ++k) {
    if (!(spec.sigma_grid[k] > 0.0) || (k > 0 && !(spec.sigma_grid[k] > spec.sigma_grid[k - 1]))) {
      throw ValidationError("sigma grid must be strictly positive and increasing");
    }
  }
  std::vector<RmseRow> rows;
  for (double s : spec.sigma_grid) {
    const auto records = run_batch(sc, s, spec.runs, spec.estimators, spec.threads);
    auto level = rmse_rows(sc, s, records, spec.estimators);
    rows.insert(rows.end(), level.begin(), level.end());
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Bias and uncertainty studies

struct AxisReport {
  std::array<SampleSummary, 6> axes;
  int n_ok = 0;
  int n_failed = 0;
};

/// Per-axis distribution of (estimate - truth) for the WLS final state.
inline AxisReport bias_study(const Scenario& sc, const std::vector<RunRecord>& records,
                             int bins = 61) {
  const Vector6d truth = sc.target.stacked();
  std::array<std::vector<double>, 6> err;
  AxisReport rep;
  for (const auto& r : records) {
    if (!r.wls.ok) {
      ++rep.n_failed;
      continue;
    }
    ++rep.n_ok;
    for (int a = 0; a < 6; ++a) err[a].push_back(r.wls.estimate[a] - truth[a]);
  }
  for (int a = 0; a < 6; ++a) rep.axes[a] = summarize(err[a], bins);
  return rep;
}

inline AxisReport bias_study(const Scenario& sc, double sigma_t, int runs, int bins = 61,
                             unsigned threads = 0) {
  if (runs < 100) throw ValidationError("bias study needs at least 100 runs");
  return bias_study(sc, run_batch(sc, sigma_t, runs, {true, false}, threads), bins);
}

struct SigmaComparison {
  AxisReport difference;  // sigma_a - sigma_b per axis
  Vector6d mean_ratio = Vector6d::Zero();  // mean of sigma_b / sigma_a
};

/// Paired per-axis comparison of reported standard deviations over runs where
/// both outcomes succeeded.
inline SigmaComparison compare_sigmas(
    const std::vector<RunRecord>& records,
    const std::function<const EstimatorOutcome&(const RunRecord&)>& a,
    const std::function<const EstimatorOutcome&(const RunRecord&)>& b, int bins = 61) {
  std::array<std::vector<double>, 6> diff;
  SigmaComparison out;
  Vector6d ratio_sum = Vector6d::Zero();
  for (const auto& r : records) {
    const auto& oa = a(r);
    const auto& ob = b(r);
    if (!oa.ok || !ob.ok) {
      ++out.difference.n_failed;
      continue;
    }
    ++out.difference.n_ok;
    for (int k = 0; k < 6; ++k) {
      diff[k].push_back(oa.sigma_axis[k] - ob.sigma_axis[k]);
      ratio_sum[k] += oa.sigma_axis[k] > 0.0 ? ob.sigma_axis[k] / oa.sigma_axis[k] : 1.0;
    }
  }
  for (int k = 0; k < 6; ++k) out.difference.axes[k] = summarize(diff[k], bins);
  if (out.difference.n_ok > 0) out.mean_ratio = ratio_sum / out.difference.n_ok;
  return out;
}

/// sigma_WLS - sigma_Tri per axis.
inline SigmaComparison uncertainty_comparison(const std::vector<RunRecord>& records, int bins = 61) {
  return compare_sigmas(
      records, [](const RunRecord& r) -> const EstimatorOutcome& { return r.wls; },
      [](const RunRecord& r) -> const EstimatorOutcome& { return r.tri; }, bins);
}

inline SigmaComparison uncertainty_comparison(const Scenario& sc, double sigma_t, int runs,
                                              int bins = 61, unsigned threads = 0) {
  return uncertainty_comparison(run_batch(sc, sigma_t, runs, {true, true}, threads), bins);
}

// ---------------------------------------------------------------------------
// Position uncertainty ellipsoid

struct Ellipsoid {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d semi_axes = Eigen::Vector3d::Zero();  // descending, m
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // columns are axis directions
  double confidence = 0.0;
  double chi2_quantile = 0.0;

  [[nodiscard]] double volume() const {
    return 4.0 / 3.0 * std::numbers::pi * semi_axes.prod();
  }
};

inline double chi2_quantile(double dof, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("confidence must lie in (0, 1)");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), p);
}

/// Confidence ellipsoid of the position block. Axes sorted by decreasing
/// length; each of the first two columns has its largest-magnitude component
/// positive and the third completes a right-handed frame.
inline Ellipsoid ellipsoid_export(const EstimateWithCovariance& e, double confidence) {
  const Eigen::Matrix3d p = e.sigma.topLeftCorner<3, 3>();
  if (!p.allFinite()) throw ValidationError("position covariance is not finite");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(0.5 * (p + p.transpose()));
  const Eigen::Vector3d lambda = eig.eigenvalues();  // ascending
  const double tol = 1e-9 * std::max(std::abs(lambda.maxCoeff()), 1e-300);
  if (lambda.minCoeff() < -tol) {
    throw ValidationError("position covariance is not positive semi-definite");
  }
  Ellipsoid out;
  out.center = e.state.position;
  out.confidence = confidence;
  out.chi2_quantile = chi2_quantile(3.0, confidence);
  for (int k = 0; k < 3; ++k) {
    const int src = 2 - k;
    out.semi_axes[k] = std::sqrt(out.chi2_quantile * std::max(lambda[src], 0.0));
    Eigen::Vector3d col = eig.eigenvectors().col(src);
    if (k < 2) {
      int idx = 0;
      col.cwiseAbs().maxCoeff(&idx);
      if (col[idx] < 0.0) col = -col;
    }
    out.rotation.col(k) = col;
  }
  out.rotation.col(2) = out.rotation.col(0).cross(out.rotation.col(1));
  return out;
}

// ---------------------------------------------------------------------------
// Output files (all floats with 17 significant digits)

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError(path.string() + ": cannot open for writing");
  return out;
}

inline void write_rmse_csv(const std::vector<RmseRow>& rows, std::ostream& out) {
  out << "sigma_t,estimator,stage,pos_rmse_m,vel_rmse_mps,crlb_pos_m,crlb_vel_mps,n_ok,n_failed,"
         "flagged\n";
  for (const auto& r : rows) {
    out << fmt17(r.sigma_t) << ',' << r.estimator << ',' << r.stage << ',' << fmt17(r.pos_rmse_m)
        << ',' << fmt17(r.vel_rmse_mps) << ',' << fmt17(r.crlb_pos_m) << ','
        << fmt17(r.crlb_vel_mps) << ',' << r.n_ok << ',' << r.n_failed << ','
        << (r.flagged ? 1 : 0) << '\n';
  }
}

/// Summary table: axis,mean,std,skewness,n
inline void write_axis_summary_csv(const AxisReport& rep, std::ostream& out) {
  out << "axis,mean,std,skewness,n\n";
  for (int a = 0; a < 6; ++a) {
    const auto& s = rep.axes[a];
    out << kAxisNames[a] << ',' << fmt17(s.mean) << ',' << fmt17(s.std) << ','
        << fmt17(s.skewness) << ',' << s.n << '\n';
  }
}

/// Histogram table: axis,bin,lo,hi,count
inline void write_axis_histogram_csv(const AxisReport& rep, std::ostream& out) {
  out << "axis,bin,lo,hi,count\n";
  for (int a = 0; a < 6; ++a) {
    const auto& h = rep.axes[a].histogram;
    const double w = h.bin_width();
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      out << kAxisNames[a] << ',' << b << ',' << fmt17(h.lo + w * b) << ','
          << fmt17(h.lo + w * (b + 1)) << ',' << h.counts[b] << '\n';
    }
  }
}

inline void write_crlb_csv(const std::vector<std::pair<double, CrlbResult>>& rows,
                           std::ostream& out) {
  out << "sigma_t,pos_bound_m,vel_bound_mps\n";
  for (const auto& [s, b] : rows) {
    out << fmt17(s) << ',' << fmt17(b.position_bound_m) << ',' << fmt17(b.velocity_bound_mps)
        << '\n';
  }
}

inline nlohmann::json to_json(const Ellipsoid& e) {
  nlohmann::json rot = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) {
    rot.push_back({e.rotation(r, 0), e.rotation(r, 1), e.rotation(r, 2)});
  }
  return {{"center_m", {e.center[0], e.center[1], e.center[2]}},
          {"semi_axes_m", {e.semi_axes[0], e.semi_axes[1], e.semi_axes[2]}},
          {"rotation", rot},
          {"confidence", e.confidence},
          {"chi2_quantile", e.chi2_quantile},
          {"volume_m3", e.volume()}};
}

}  // namespace iod
