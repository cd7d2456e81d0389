#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "iod/crlb.hpp"
#include "iod/errors.hpp"
#include "iod/estimator.hpp"
#include "iod/format.hpp"
#include "iod/measurement.hpp"
#include "iod/montecarlo.hpp"
#include "iod/scenario.hpp"
#include "iod/trilateration.hpp"

namespace iod::cli {

enum ExitCode : int { kOk = 0, kValidationError = 1, kEstimationError = 2 };

/// Flag values; unset optionals fall back to the scenario file, then defaults.
struct Overrides {
  std::string scenario_path;
  std::filesystem::path out_dir;
  std::optional<double> sigma_t;
  std::optional<int> runs;
  std::optional<std::uint64_t> seed;
  std::optional<double> confidence;
  std::optional<std::string> estimators;
  std::optional<std::string> measurements_path;
  std::uint64_t run_index = 0;
  unsigned threads = 0;
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline Scenario resolve(const Overrides& o) {
  Scenario sc = o.scenario_path.empty() ? default_reference_scenario() : load_scenario(o.scenario_path);
  if (o.sigma_t) sc.noise.sigma_t = *o.sigma_t;
  if (o.seed) sc.noise.seed = *o.seed;
  if (o.runs) sc.experiment.runs = *o.runs;
  if (o.confidence) sc.experiment.confidence = *o.confidence;
  if (o.estimators) sc.experiment.estimators = split_csv(*o.estimators);
  validate(sc);
  return sc;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  auto out = open_output(path);
  out << content;
}

}  // namespace detail

inline int cmd_simulate(const Overrides& o, std::ostream& out) {
  const Scenario sc = detail::resolve(o);
  const MeasurementSet m = simulate(sc.network, sc.target, sc.noise, o.run_index);
  std::ostringstream csv;
  write_measurements_csv(sc.network, m, csv);
  if (o.out_dir.empty()) {
    out << csv.str();
  } else {
    detail::write_file(o.out_dir / "measurements.csv", csv.str());
  }
  return kOk;
}

inline int cmd_estimate(const Overrides& o, std::ostream& out, std::ostream& err) {
  const Scenario sc = detail::resolve(o);
  const EstimatorSet set = EstimatorSet::from_names(sc.experiment.estimators);
  nlohmann::json result = nlohmann::json::object();
  if (set.wls) {
    MeasurementSet m;
    if (o.measurements_path) {
      std::ifstream in(*o.measurements_path);
      if (!in) throw ValidationError(*o.measurements_path + ": cannot open measurements file");
      m = read_measurements_csv(sc.network, sc.noise, in);
    } else {
      m = simulate(sc.network, sc.target, sc.noise, o.run_index);
    }
    result["wls"] = to_json(estimate(sc.network, m, {sc.experiment.stage1_passes}));
  }
  if (set.tri) {
    if (o.measurements_path) {
      err << "note: trilateration skipped; it needs ranges, not delay/Doppler files\n";
    } else {
      result["tri"] = to_json(trilaterate(derive_ranges(sc.network, sc.target, sc.noise, o.run_index)));
    }
  }
  const std::string text = result.dump(2) + "\n";
  out << text;
  if (!o.out_dir.empty()) detail::write_file(o.out_dir / "estimate.json", text);
  return kOk;
}

inline int cmd_montecarlo(const Overrides& o, std::ostream& out, std::ostream& err) {
  const Scenario sc = detail::resolve(o);
  ExperimentSpec spec = ExperimentSpec::from_scenario(sc);
  if (o.sigma_t) spec.sigma_grid = {*o.sigma_t};
  spec.threads = o.threads;
  const auto rows = rmse_sweep(sc, spec);
  std::ostringstream csv;
  write_rmse_csv(rows, csv);
  for (const auto& r : rows) {
    if (r.flagged) {
      err << "warning: sigma_t=" << fmt17(r.sigma_t) << " " << r.estimator << " failed in "
          << r.n_failed << " of " << (r.n_ok + r.n_failed) << " runs\n";
    }
  }
  out << csv.str();
  detail::write_file((o.out_dir.empty() ? std::filesystem::path(".") : o.out_dir) / "rmse.csv",
                     csv.str());
  return kOk;
}

inline int cmd_crlb(const Overrides& o, std::ostream& out) {
  const Scenario sc = detail::resolve(o);
  const std::vector<double> grid = o.sigma_t ? std::vector<double>{*o.sigma_t} : sc.experiment.sigma_grid;
  std::vector<std::pair<double, CrlbResult>> rows;
  for (double s : grid) {
    NoiseModel n = sc.noise;
    n.sigma_t = s;
    rows.emplace_back(s, crlb(sc.network, sc.target, n));
  }
  std::ostringstream csv;
  write_crlb_csv(rows, csv);
  out << csv.str();
  if (!o.out_dir.empty()) detail::write_file(o.out_dir / "crlb.csv", csv.str());
  return kOk;
}

inline int cmd_bias(const Overrides& o, std::ostream& out) {
  const Scenario sc = detail::resolve(o);
  const EstimatorSet set = EstimatorSet::from_names(sc.experiment.estimators);
  if (!set.wls) throw ValidationError("bias study needs the wls estimator");
  const int runs = o.runs ? *o.runs : sc.experiment.bias_runs;
  if (runs < 100) throw ValidationError("bias study needs --runs >= 100");
  const int bins = sc.experiment.histogram_bins;
  const auto records = run_batch(sc, sc.noise.sigma_t, runs, set, o.threads);
  const std::filesystem::path dir = o.out_dir.empty() ? "." : o.out_dir;

  const AxisReport bias = bias_study(sc, records, bins);
  std::ostringstream summary, hist;
  write_axis_summary_csv(bias, summary);
  write_axis_histogram_csv(bias, hist);
  detail::write_file(dir / "bias.csv", summary.str());
  detail::write_file(dir / "bias_hist.csv", hist.str());
  out << "# bias (estimate - truth)\n" << summary.str();

  if (set.tri) {
    const SigmaComparison cmp = uncertainty_comparison(records, bins);
    std::ostringstream s2, h2;
    write_axis_summary_csv(cmp.difference, s2);
    write_axis_histogram_csv(cmp.difference, h2);
    detail::write_file(dir / "sigma_diff.csv", s2.str());
    detail::write_file(dir / "sigma_diff_hist.csv", h2.str());
    out << "# sigma_wls - sigma_tri\n" << s2.str();
  }
  return kOk;
}

inline int cmd_ellipsoid(const Overrides& o, std::ostream& out) {
  const Scenario sc = detail::resolve(o);
  const EstimatorSet set = EstimatorSet::from_names(sc.experiment.estimators);
  const double conf = sc.experiment.confidence;
  nlohmann::json doc = nlohmann::json::object();
  if (set.wls) {
    const MeasurementSet m = simulate(sc.network, sc.target, sc.noise, o.run_index);
    doc["wls"] = to_json(ellipsoid_export(estimate(sc.network, m, {sc.experiment.stage1_passes}), conf));
  }
  if (set.tri) {
    doc["tri"] = to_json(ellipsoid_export(
        trilaterate(derive_ranges(sc.network, sc.target, sc.noise, o.run_index)), conf));
  }
  const std::string text = doc.dump(2) + "\n";
  out << text;
  detail::write_file((o.out_dir.empty() ? std::filesystem::path(".") : o.out_dir) / "ellipsoid.json",
                     text);
  return kOk;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"One-shot orbit determination from multistatic delay/Doppler measurements"};
  app.require_subcommand(1, 1);
  Overrides o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scenario", o.scenario_path,
                    "scenario JSON file (default: built-in reference scenario)");
    sub->add_option("--out", o.out_dir, "output directory for result files");
    sub->add_option("--sigma-t", o.sigma_t, "delay noise standard deviation [s]")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", o.seed, "RNG seed [unsigned 64-bit]");
    sub->add_option("--estimators", o.estimators, "comma-separated subset of wls,tri");
  };
  auto add_runs = [&](CLI::App* sub) {
    sub->add_option("--runs", o.runs, "Monte Carlo runs per noise level [count]")
        ->check(CLI::PositiveNumber);
    sub->add_option("--threads", o.threads, "worker threads (0 = all cores)");
  };
  auto add_run_index = [&](CLI::App* sub) {
    sub->add_option("--run", o.run_index, "run index selecting the noise draw [count]");
  };

  auto* simulate_cmd = app.add_subcommand("simulate", "write noisy delay/Doppler measurements.csv");
  add_common(simulate_cmd);
  add_run_index(simulate_cmd);

  auto* estimate_cmd = app.add_subcommand("estimate", "estimate state and covariance (JSON)");
  add_common(estimate_cmd);
  add_run_index(estimate_cmd);
  estimate_cmd->add_option("--measurements", o.measurements_path,
                           "measurements.csv to estimate from (columns i,j,tau_s,doppler_hz)");

  auto* mc_cmd = app.add_subcommand("montecarlo", "RMSE sweep over the sigma grid (rmse.csv)");
  add_common(mc_cmd);
  add_runs(mc_cmd);

  auto* crlb_cmd = app.add_subcommand("crlb", "Cramer-Rao bounds (crlb.csv)");
  add_common(crlb_cmd);

  auto* bias_cmd = app.add_subcommand(
      "bias", "per-axis bias and sigma-difference study (bias.csv, sigma_diff.csv)");
  add_common(bias_cmd);
  add_runs(bias_cmd);

  auto* ell_cmd = app.add_subcommand("ellipsoid", "position confidence ellipsoids (ellipsoid.json)");
  add_common(ell_cmd);
  add_run_index(ell_cmd);
  ell_cmd->add_option("--confidence", o.confidence, "ellipsoid confidence level [probability]")
      ->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidationError;
  }

  try {
    if (simulate_cmd->parsed()) return cmd_simulate(o, out);
    if (estimate_cmd->parsed()) return cmd_estimate(o, out, err);
    if (mc_cmd->parsed()) return cmd_montecarlo(o, out, err);
    if (crlb_cmd->parsed()) return cmd_crlb(o, out);
    if (bias_cmd->parsed()) return cmd_bias(o, out);
    if (ell_cmd->parsed()) return cmd_ellipsoid(o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  } catch (const EstimationError& e) {
    err << "estimation failed: " << e.what() << '\n';
    return kEstimationError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  }
  return kValidationError;
}

}  // namespace iod::cli
