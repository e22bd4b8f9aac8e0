#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "glhad/control.hpp"
#include "glhad/csv.hpp"
#include "glhad/detect.hpp"
#include "glhad/experiment.hpp"
#include "glhad/grouplasso.hpp"
#include "glhad/model.hpp"
#include "glhad/simulate.hpp"
#include "glhad/structure.hpp"

namespace {

using namespace glhad;

int log_level() {
  const char* env = std::getenv("MMS_GLHAD_LOG");
  return env ? std::atoi(env) : 0;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[glhad] " << msg << "\n";
}

SystemModel load_validated(const std::string& path) {
  SystemModel sys = load_system(path);
  const auto violations = validate(sys);
  if (!violations.empty()) {
    std::ostringstream oss;
    oss << "system config invalid:";
    for (const auto& v : violations) oss << "\n  " << to_string(v);
    throw ModelError(oss.str());
  }
  return sys;
}

LambdaPolicy parse_lambda_flag(const std::string& text) {
  if (text == "auto") return LambdaPolicy::fraction_of_max(0.1);
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size() || v < 0.0) throw std::invalid_argument(text);
    return LambdaPolicy::fixed(v);
  } catch (const std::exception&) {
    throw CLI::ValidationError("--lambda", "expected a nonnegative number or 'auto'");
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

int cmd_synthesize(const std::string& system_path, const std::string& out) {
  SystemModel sys = synthesize(load_validated(system_path));
  if (out.empty()) {
    std::cout << serialize_system(sys) << "\n";
  } else {
    save_system(sys, out);
    log_info("wrote synthesized system to " + out);
  }
  return 0;
}

void write_matrix_rows(CsvWriter& w, const std::string& name, const Matrix& m) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      w.row({name, cell(i), cell(j), cell(m(i, j))});
}

int cmd_dump_structure(const std::string& system_path, const std::string& out, bool timestamp) {
  SystemModel sys = synthesize(load_validated(system_path));
  const StructureMatrices sm = build_structure(sys, StructureRoute::ClosedForm);
  CsvWriter w(out, {"matrix", "row", "col", "value"}, timestamp);
  write_matrix_rows(w, "H", sm.H);
  write_matrix_rows(w, "H1", sm.H1);
  write_matrix_rows(w, "Hw", sm.Hw);
  write_matrix_rows(w, "Sigma_eps", sm.Sigma_eps);
  write_matrix_rows(w, "R", sm.R);
  log_info("wrote structure matrices to " + out);
  return 0;
}

int cmd_simulate(const std::string& system_path, const std::string& out, std::uint64_t seed,
                 int count, int attack_stage, double snr, bool timestamp) {
  SystemModel sys = synthesize(load_validated(system_path));
  const Simulator sim(sys);
  Matrix sigma;
  if (attack_stage >= 0) {
    const StructureMatrices sm = build_structure(sys, StructureRoute::ClosedForm);
    sigma = sm.Sigma_eps;
  }

  std::vector<std::string> header = {"replicate", "seed", "attack_stage", "snr"};
  for (int i = 0; i < sys.total_sensors(); ++i) header.push_back("y_" + std::to_string(i));
  CsvWriter w(out, header, timestamp);

  for (int r = 0; r < count; ++r) {
    const std::uint64_t product_seed = derive_seed(seed, 0, static_cast<std::uint64_t>(r));
    std::optional<AttackSpec> attack;
    if (attack_stage >= 0) {
      const std::uint64_t dir_seed = derive_seed(seed, 1, static_cast<std::uint64_t>(r));
      const int n = sys.stages[attack_stage].sensor_dim();
      attack = make_attack(sys, sigma, attack_stage, random_unit_direction(n, dir_seed), snr);
    }
    const RunRecord rec = sim.run(attack, product_seed);
    std::vector<std::string> row = {cell(r), cell(product_seed), cell(attack_stage),
                                    cell(attack_stage >= 0 ? snr : 0.0)};
    for (int i = 0; i < rec.y.size(); ++i) row.push_back(cell(rec.y(i)));
    w.row(row);
  }
  log_info("wrote " + std::to_string(count) + " runs to " + out);
  return 0;
}

int cmd_detect(const std::string& system_path, const std::string& input, const std::string& out,
               const std::string& method, double alpha, LambdaPolicy lambda, bool timestamp) {
  SystemModel sys = synthesize(load_validated(system_path));
  const StructureMatrices sm = build_structure(sys, StructureRoute::ClosedForm);
  const int N = sys.total_sensors();
  const int K = sys.num_stages();

  std::optional<GlhadDetector> gl;
  std::optional<BenchmarkDetector> bm;
  if (method == "glhad" || method == "both") gl.emplace(sys, sm, alpha, lambda);
  if (method == "benchmark" || method == "both") bm.emplace(sys, sm.Sigma_eps, alpha);

  std::ifstream in(input);
  if (!in) throw ModelError("cannot open input file " + input);

  std::vector<std::string> header = {"method", "alarmed", "localized"};
  for (int k = 0; k <= K; ++k) header.push_back("t2_" + std::to_string(k));
  for (int k = 0; k <= K; ++k) header.push_back("ucl_" + std::to_string(k));
  std::optional<CsvWriter> w;
  if (!out.empty()) w.emplace(out, header, timestamp);

  auto emit = [&](const DetectionResult& res) {
    std::vector<std::string> row = {res.method == Method::GLHAD ? "glhad" : "benchmark",
                                    cell(res.alarmed() ? 1 : 0), cell(res.localized.value_or(-1))};
    for (int k = 0; k < res.t2.size(); ++k) row.push_back(cell(res.t2(k)));
    for (int k = 0; k < res.ucl.size(); ++k) row.push_back(cell(res.ucl(k)));
    if (w) {
      w->row(row);
    } else {
      for (std::size_t i = 0; i < row.size(); ++i) std::cout << (i ? "," : "") << row[i];
      std::cout << "\n";
    }
  };
  if (!w) {
    for (std::size_t i = 0; i < header.size(); ++i) std::cout << (i ? "," : "") << header[i];
    std::cout << "\n";
  }

  std::string line;
  bool seen_header = false;
  int y_start = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv_line(line);
    if (!seen_header) {
      seen_header = true;
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i] == "y_0") y_start = static_cast<int>(i);
      if (y_start < 0) throw ModelError("input csv lacks y_0..y_" + std::to_string(N - 1));
      continue;
    }
    if (static_cast<int>(cells.size()) < y_start + N)
      throw ModelError("input csv row too short");
    Vector y(N);
    for (int i = 0; i < N; ++i) y(i) = std::stod(cells[y_start + i]);
    if (gl) emit(gl->detect(y));
    if (bm) emit(bm->detect(y));
  }
  return 0;
}

int cmd_experiment(const std::string& system_path, const std::string& plan_path,
                   const std::string& out_dir, int jobs, std::optional<std::uint64_t> seed,
                   std::optional<double> alpha, std::optional<int> horizon,
                   std::optional<LambdaPolicy> lambda, bool timestamp) {
  SystemModel sys = load_validated(system_path);
  ExperimentPlan plan = load_plan(plan_path);
  if (seed) plan.master_seed = *seed;
  if (alpha) plan.alpha = *alpha;
  if (horizon) plan.horizon = *horizon;
  if (lambda) plan.lambda = *lambda;
  const ExperimentReport report = run_experiment(sys, plan, jobs);
  write_report(report, out_dir, timestamp);
  log_info("experiment written to " + out_dir);
  return 0;
}

int cmd_selftest(const std::string& system_path) {
  SystemModel sys = synthesize(load_validated(system_path));
  bool all_ok = true;

  // Closed-form structure vs impulse-propagation oracle.
  {
    const Matrix H = closed_form_H(sys);
    const Matrix H1 = closed_form_H1(sys);
    const Matrix Hw = closed_form_Hw(sys);
    Matrix oH, oH1, oHw;
    oracle_structure_matrices(sys, oH, oH1, oHw);
    const double err = std::max({(H - oH).cwiseAbs().maxCoeff(),
                                 (H1 - oH1).cwiseAbs().maxCoeff(),
                                 (Hw - oHw).cwiseAbs().maxCoeff()});
    const bool ok = err <= 1e-8;
    all_ok = all_ok && ok;
    std::cout << "closed-form vs oracle: " << (ok ? "pass" : "FAIL") << " (max err "
              << format_double(err) << ")\n";
  }

  // Null calibration: family-wise alarm rate vs 1 - (1 - alpha)^(K+1).
  {
    const double alpha = 0.01;
    const int reps = 4000;
    const StructureMatrices sm = build_structure(sys, StructureRoute::ClosedForm);
    const GlhadDetector gl(sys, sm, alpha);
    const BenchmarkDetector bm(sys, sm.Sigma_eps, alpha);
    const Simulator sim(sys);
    int gl_alarms = 0, bm_alarms = 0;
    for (int r = 0; r < reps; ++r) {
      const RunRecord rec = sim.run(std::nullopt, derive_seed(9001, 1, r));
      gl_alarms += gl.detect(rec.y).alarmed() ? 1 : 0;
      bm_alarms += bm.detect(rec.y).alarmed() ? 1 : 0;
    }
    const double target = 1.0 - std::pow(1.0 - alpha, sys.num_stages() + 1);
    const double se = std::sqrt(target * (1.0 - target) / reps);
    const double g_rate = static_cast<double>(gl_alarms) / reps;
    const double b_rate = static_cast<double>(bm_alarms) / reps;
    const bool ok = std::abs(g_rate - target) <= 4 * se && std::abs(b_rate - target) <= 4 * se;
    all_ok = all_ok && ok;
    std::cout << "null calibration: " << (ok ? "pass" : "FAIL") << " (glhad "
              << format_double(g_rate) << ", benchmark " << format_double(b_rate) << ", target "
              << format_double(target) << ")\n";
  }

  std::cout << (all_ok ? "selftest: all checks passed" : "selftest: FAILURES") << "\n";
  return all_ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multistage manufacturing attack detection toolkit"};
  app.require_subcommand(1);

  std::string system_path, plan_path, out, input, method = "glhad", lambda_text;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double alpha = 0.01;
  bool alpha_set = false;
  int jobs = 1, horizon = 0, count = 1, attack_stage = -1;
  double snr = 0.0;
  bool no_timestamp = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--system", system_path, "system config (JSON)")->required();
    sub->add_flag("--no-timestamp", no_timestamp, "suppress the timestamp comment line");
  };

  auto* s_syn = app.add_subcommand("synthesize", "compute LQG and Kalman gains");
  add_common(s_syn);
  s_syn->add_option("--out", out, "output config path (stdout if omitted)");

  auto* s_dump = app.add_subcommand("dump-structure", "write structure matrices as CSV");
  add_common(s_dump);
  s_dump->add_option("--out", out, "output CSV path")->required();

  auto* s_sim = app.add_subcommand("simulate", "simulate products");
  add_common(s_sim);
  s_sim->add_option("--out", out, "output CSV path")->required();
  s_sim->add_option("--seed", seed, "master seed")->required();
  s_sim->add_option("--count", count, "number of products");
  s_sim->add_option("--attack-stage", attack_stage, "attacked stage (omit for clean runs)");
  s_sim->add_option("--snr", snr, "attack signal-to-noise ratio");

  auto* s_det = app.add_subcommand("detect", "run detectors over simulated products");
  add_common(s_det);
  s_det->add_option("--input", input, "runs CSV from `simulate`")->required();
  s_det->add_option("--out", out, "output CSV path (stdout if omitted)");
  s_det->add_option("--method", method, "glhad|benchmark|both")
      ->check(CLI::IsMember({"glhad", "benchmark", "both"}));
  s_det->add_option("--alpha", alpha, "per-stage significance level");
  s_det->add_option("--lambda", lambda_text, "group-lasso penalty: number or 'auto'");

  auto* s_exp = app.add_subcommand("experiment", "run the Monte-Carlo study");
  add_common(s_exp);
  s_exp->add_option("--plan", plan_path, "experiment plan (JSON)")->required();
  s_exp->add_option("--out", out, "output directory")->required();
  s_exp->add_option("--jobs", jobs, "parallel replication workers");
  s_exp->add_option("--seed", seed, "master seed override")->each([&](const std::string&) {
    seed_set = true;
  });
  s_exp->add_option("--alpha", alpha, "significance level override")
      ->each([&](const std::string&) { alpha_set = true; });
  s_exp->add_option("--horizon", horizon, "run-length censoring cap override");
  s_exp->add_option("--lambda", lambda_text, "group-lasso penalty override: number or 'auto'");

  auto* s_self = app.add_subcommand("selftest", "run built-in consistency checks");
  add_common(s_self);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const bool ts = !no_timestamp;
    if (s_syn->parsed()) return cmd_synthesize(system_path, out);
    if (s_dump->parsed()) return cmd_dump_structure(system_path, out, ts);
    if (s_sim->parsed()) return cmd_simulate(system_path, out, seed, count, attack_stage, snr, ts);
    if (s_det->parsed()) {
      LambdaPolicy lp;
      if (!lambda_text.empty()) lp = parse_lambda_flag(lambda_text);
      return cmd_detect(system_path, input, out, method, alpha, lp, ts);
    }
    if (s_exp->parsed()) {
      std::optional<LambdaPolicy> lp;
      if (!lambda_text.empty()) lp = parse_lambda_flag(lambda_text);
      return cmd_experiment(system_path, plan_path, out, jobs,
                            seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt,
                            alpha_set ? std::optional<double>(alpha) : std::nullopt,
                            horizon > 0 ? std::optional<int>(horizon) : std::nullopt, lp, ts);
    }
    if (s_self->parsed()) return cmd_selftest(system_path);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
