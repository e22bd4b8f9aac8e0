#include "glhad/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "glhad/control.hpp"
#include "glhad/csv.hpp"

namespace glhad {

namespace {

using nlohmann::json;

const char* method_label(Method m) { return m == Method::GLHAD ? "glhad" : "benchmark"; }

void check_plan(const ExperimentPlan& plan, const SystemModel& system) {
  if (plan.replications < 1) throw ModelError("plan: replications must be >= 1");
  if (plan.horizon < 1) throw ModelError("plan: horizon must be >= 1");
  if (!(plan.alpha > 0.0 && plan.alpha < 1.0)) throw ModelError("plan: alpha must lie in (0,1)");
  if (plan.snr_levels.empty()) throw ModelError("plan: snr_levels empty");
  for (double s : plan.snr_levels)
    if (s < 0.0) throw ModelError("plan: snr levels must be nonnegative");
  if (plan.stages_to_attack.empty()) throw ModelError("plan: stages_to_attack empty");
  for (int g : plan.stages_to_attack)
    if (g < 0 || g > system.num_stages()) throw ModelError("plan: attacked stage out of range");
}

/// Outcome of one replicate: run lengths and first-product localization for
/// both methods on an identical product stream.
struct TrialOutcome {
  RunLength gl, bm;
  int pred_gl = -1, pred_bm = -1;
};

TrialOutcome attack_trial(const Simulator& sim, const Matrix& sigma_eps,
                          const GlhadDetector* gl, const BenchmarkDetector* bm, int stage,
                          double snr, int horizon, std::uint64_t base_seed) {
  TrialOutcome out;
  bool gl_open = gl != nullptr, bm_open = bm != nullptr;
  const int n = sim.system().stages[stage].sensor_dim();

  for (int i = 1; i <= horizon && (gl_open || bm_open); ++i) {
    // Fresh noise and a fresh attack direction for every product.
    const std::uint64_t noise_seed = derive_seed(base_seed, 0, static_cast<std::uint64_t>(i));
    const std::uint64_t dir_seed = derive_seed(base_seed, 1, static_cast<std::uint64_t>(i));
    std::optional<AttackSpec> attack;
    if (snr > 0.0)
      attack = make_attack(sim.system(), sigma_eps, stage,
                           random_unit_direction(n, dir_seed), snr);
    const RunRecord rec = sim.run(attack, noise_seed);

    if (gl_open) {
      const DetectionResult d = gl->detect(rec.y);
      if (i == 1) out.pred_gl = d.localized.value_or(-1);
      if (d.alarmed()) {
        out.gl = {i, false};
        gl_open = false;
      }
    }
    if (bm_open) {
      const DetectionResult d = bm->detect(rec.y);
      if (i == 1) out.pred_bm = d.localized.value_or(-1);
      if (d.alarmed()) {
        out.bm = {i, false};
        bm_open = false;
      }
    }
  }
  if (gl_open) out.gl = {horizon, true};
  if (bm_open) out.bm = {horizon, true};
  return out;
}

/// Runs `count` trials indexed 0..count-1 across `jobs` threads; the work
/// function must only write its own slot, so completion order cannot affect
/// the aggregated result.
template <typename Fn>
void parallel_for(int count, int jobs, Fn&& fn) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

LambdaPolicy parse_lambda(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "auto") return LambdaPolicy::fraction_of_max(0.1);
    throw ModelError("plan: lambda must be a number or \"auto\"");
  }
  if (j.is_number()) return LambdaPolicy::fixed(j.get<double>());
  throw ModelError("plan: lambda must be a number or \"auto\"");
}

}  // namespace

ExperimentPlan parse_plan(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ModelError(std::string("plan parse error: ") + e.what());
  }
  ExperimentPlan plan;
  try {
    plan.snr_levels = j.at("snr_levels").get<std::vector<double>>();
    plan.stages_to_attack = j.at("stages_to_attack").get<std::vector<int>>();
    plan.replications = j.at("replications").get<int>();
    plan.alpha = j.value("alpha", 0.01);
    plan.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("lambda")) plan.lambda = parse_lambda(j.at("lambda"));
    plan.horizon = j.value("horizon", 1000);
    plan.null_replications = j.value("null_replications", 0);
  } catch (const json::exception& e) {
    throw ModelError(std::string("plan field error: ") + e.what());
  }
  return plan;
}

ExperimentPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open plan file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_plan(ss.str());
}

double CellResult::mean_run_length() const {
  double sum = 0.0;
  for (const auto& rl : run_lengths) sum += rl.length;
  return run_lengths.empty() ? 0.0 : sum / static_cast<double>(run_lengths.size());
}

double CellResult::quartile(double q) const {
  if (run_lengths.empty()) return 0.0;
  std::vector<int> sorted;
  sorted.reserve(run_lengths.size());
  for (const auto& rl : run_lengths) sorted.push_back(rl.length);
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return (1.0 - frac) * sorted[lo] + frac * sorted[lo + 1];
}

int CellResult::alarmed_count() const {
  return static_cast<int>(std::count_if(predicted.begin(), predicted.end(),
                                        [](int p) { return p >= 0; }));
}

double CellResult::localization_accuracy() const {
  const int alarmed = alarmed_count();
  if (alarmed == 0) return 0.0;
  const int correct =
      static_cast<int>(std::count(predicted.begin(), predicted.end(), stage));
  return static_cast<double>(correct) / static_cast<double>(alarmed);
}

std::vector<std::vector<int>> ExperimentReport::confusion(Method method, double snr) const {
  std::vector<std::vector<int>> mat(num_stages + 1, std::vector<int>(num_stages + 1, 0));
  for (const auto& cell : cells) {
    if (cell.method != method || cell.snr != snr) continue;
    for (int p : cell.predicted)
      if (p >= 0) ++mat[cell.stage][p];
  }
  return mat;
}

RunLength run_length(const Simulator& simulator, const Matrix& sigma_eps,
                     const GlhadDetector* glhad, const BenchmarkDetector* benchmark, int stage,
                     double snr, int horizon, std::uint64_t replicate_seed) {
  const TrialOutcome out = attack_trial(simulator, sigma_eps, glhad, benchmark, stage, snr,
                                        horizon, replicate_seed);
  return glhad != nullptr ? out.gl : out.bm;
}

ExperimentReport run_experiment(const SystemModel& system, const ExperimentPlan& plan,
                                int jobs) {
  check_plan(plan, system);
  SystemModel sys = system;
  if (!sys.has_gains()) sys = synthesize(std::move(sys));

  const StructureMatrices sm = build_structure(sys, StructureRoute::ClosedForm);
  const GlhadDetector gl(sys, sm, plan.alpha, plan.lambda);
  const BenchmarkDetector bm(sys, sm.Sigma_eps, plan.alpha);
  const Simulator sim(sys);

  ExperimentReport report;
  report.num_stages = sys.num_stages();

  // Null calibration block first: single-product family-wise alarm rates.
  const int null_reps = plan.null_replications > 0 ? plan.null_replications : plan.replications;
  report.null_replications = null_reps;
  {
    std::vector<int> gl_alarm(null_reps, 0), bm_alarm(null_reps, 0);
    parallel_for(null_reps, jobs, [&](int r) {
      const std::uint64_t seed =
          derive_seed(plan.master_seed, 1, static_cast<std::uint64_t>(r));
      const RunRecord rec = sim.run(std::nullopt, seed);
      gl_alarm[r] = gl.detect(rec.y).alarmed() ? 1 : 0;
      bm_alarm[r] = bm.detect(rec.y).alarmed() ? 1 : 0;
    });
    report.null_alarm_rate_glhad =
        static_cast<double>(std::accumulate(gl_alarm.begin(), gl_alarm.end(), 0)) / null_reps;
    report.null_alarm_rate_benchmark =
        static_cast<double>(std::accumulate(bm_alarm.begin(), bm_alarm.end(), 0)) / null_reps;
  }

  // Attack cells; both methods share each replicate's product stream.
  std::vector<CellResult> gl_cells, bm_cells;
  for (std::size_t si = 0; si < plan.snr_levels.size(); ++si) {
    for (int stage : plan.stages_to_attack) {
      const double snr = plan.snr_levels[si];
      std::vector<TrialOutcome> outcomes(plan.replications);
      const std::uint64_t stream =
          2 + 64 * static_cast<std::uint64_t>(si) + static_cast<std::uint64_t>(stage);
      parallel_for(plan.replications, jobs, [&](int r) {
        const std::uint64_t base =
            derive_seed(plan.master_seed, stream, static_cast<std::uint64_t>(r));
        outcomes[r] = attack_trial(sim, sm.Sigma_eps, &gl, &bm, stage, snr, plan.horizon, base);
      });

      CellResult cg, cb;
      cg.method = Method::GLHAD;
      cb.method = Method::BENCHMARK;
      cg.snr = cb.snr = snr;
      cg.stage = cb.stage = stage;
      for (const auto& out : outcomes) {
        cg.run_lengths.push_back(out.gl);
        cg.predicted.push_back(out.pred_gl);
        cb.run_lengths.push_back(out.bm);
        cb.predicted.push_back(out.pred_bm);
      }
      gl_cells.push_back(std::move(cg));
      bm_cells.push_back(std::move(cb));
    }
  }
  report.cells = std::move(gl_cells);
  report.cells.insert(report.cells.end(), bm_cells.begin(), bm_cells.end());
  return report;
}

void write_report(const ExperimentReport& report, const std::string& out_dir, bool timestamp) {
  std::filesystem::create_directories(out_dir);
  const auto path = [&](const char* name) {
    return (std::filesystem::path(out_dir) / name).string();
  };

  CsvWriter arl(path("arl.csv"),
                {"method", "snr", "stage", "replicate", "run_length", "censored"}, timestamp);
  for (const auto& c : report.cells)
    for (std::size_t r = 0; r < c.run_lengths.size(); ++r)
      arl.row({method_label(c.method), cell(c.snr), cell(c.stage), cell(static_cast<int>(r)),
               cell(c.run_lengths[r].length), cell(c.run_lengths[r].censored ? 1 : 0)});

  CsvWriter loc(path("localization.csv"),
                {"method", "snr", "true_stage", "predicted_stage", "count"}, timestamp);
  for (const auto& c : report.cells) {
    std::vector<int> counts(report.num_stages + 1, 0);
    for (int p : c.predicted)
      if (p >= 0) ++counts[p];
    for (int p = 0; p <= report.num_stages; ++p)
      loc.row({method_label(c.method), cell(c.snr), cell(c.stage), cell(p), cell(counts[p])});
  }

  // Null calibration rows carry stage -1 and the family-wise alarm rate in
  // the accuracy column; run-length statistics do not apply there.
  CsvWriter sum(path("summary.csv"),
                {"method", "snr", "stage", "replications", "mean_run_length", "q1", "median",
                 "q3", "censored", "alarmed", "accuracy"},
                timestamp);
  sum.row({"glhad", cell(0.0), cell(-1), cell(report.null_replications), "", "", "", "", "", "",
           cell(report.null_alarm_rate_glhad)});
  sum.row({"benchmark", cell(0.0), cell(-1), cell(report.null_replications), "", "", "", "", "",
           "", cell(report.null_alarm_rate_benchmark)});
  for (const auto& c : report.cells) {
    int censored = 0;
    for (const auto& rl : c.run_lengths) censored += rl.censored ? 1 : 0;
    sum.row({method_label(c.method), cell(c.snr), cell(c.stage),
             cell(static_cast<int>(c.run_lengths.size())), cell(c.mean_run_length()),
             cell(c.quartile(0.25)), cell(c.quartile(0.5)), cell(c.quartile(0.75)),
             cell(censored), cell(c.alarmed_count()), cell(c.localization_accuracy())});
  }
}

}  // namespace glhad
