#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glhad/detect.hpp"
#include "glhad/model.hpp"
#include "glhad/simulate.hpp"
#include "glhad/structure.hpp"
#include "glhad/types.hpp"

namespace glhad {

struct ExperimentPlan {
  std::vector<double> snr_levels;
  std::vector<int> stages_to_attack;
  int replications = 300;
  double alpha = 0.01;
  std::uint64_t master_seed = 0;
  LambdaPolicy lambda;     // GLHAD penalty policy
  int horizon = 1000;      // run-length censoring cap
  int null_replications = 0;  // 0 -> use `replications`
};

ExperimentPlan load_plan(const std::string& path);
ExperimentPlan parse_plan(const std::string& json_text);

struct RunLength {
  int length = 0;       // 1-based index of the first alarming product
  bool censored = false;
};

/// One cell of the study: a fixed (method, snr, attacked stage).
struct CellResult {
  Method method = Method::GLHAD;
  double snr = 0.0;
  int stage = 0;
  std::vector<RunLength> run_lengths;           // one per replicate
  std::vector<int> predicted;                   // single-product localization,
                                                // -1 = no alarm, per replicate
  double mean_run_length() const;
  double quartile(double q) const;              // q in [0,1], linear interp
  int alarmed_count() const;                    // predicted != -1
  double localization_accuracy() const;         // correct / alarmed
};

struct ExperimentReport {
  std::vector<CellResult> cells;                // method-major, then snr, stage
  double null_alarm_rate_glhad = 0.0;           // family-wise, single product
  double null_alarm_rate_benchmark = 0.0;
  int null_replications = 0;
  int num_stages = 0;

  /// Confusion counts for (method, snr): rows true stage, columns predicted.
  std::vector<std::vector<int>> confusion(Method method, double snr) const;
};

/// Generic run-length trial against an arbitrary alarm predicate; `alarm`
/// receives each product's measurement vector.
template <typename AlarmFn>
RunLength run_length_with(AlarmFn&& alarm, int horizon) {
  for (int i = 1; i <= horizon; ++i)
    if (alarm(i)) return {i, false};
  return {horizon, true};
}

/// Run-length of one detector under a fixed (stage, snr) attack with fresh
/// noise and a fresh attack direction per product.
RunLength run_length(const Simulator& simulator, const Matrix& sigma_eps,
                     const GlhadDetector* glhad, const BenchmarkDetector* benchmark, int stage,
                     double snr, int horizon, std::uint64_t replicate_seed);

/// Full study: null calibration block first, then every method x snr x stage
/// cell with `replications` trials each. Both methods see identical product
/// streams (common random numbers). `jobs` parallelizes over replicates;
/// results are deterministic in `plan.master_seed` regardless of `jobs`.
ExperimentReport run_experiment(const SystemModel& system, const ExperimentPlan& plan,
                                int jobs = 1);

/// Writes arl.csv, localization.csv and summary.csv into `out_dir`.
void write_report(const ExperimentReport& report, const std::string& out_dir,
                  bool timestamp = false);

}  // namespace glhad
