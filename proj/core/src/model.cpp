#include "glhad/model.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace glhad {

using nlohmann::json;

namespace {

constexpr double kSymTol = 1e-12;
constexpr double kPsdTol = -1e-10;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw ModelError("field '" + what + "' is not a matrix (array of rows)");
  const auto rows = j.size();
  const auto cols = j.front().size();
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw ModelError("field '" + what + "' has ragged rows");
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

Vector vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw ModelError("field '" + what + "' is not a vector");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

bool is_symmetric(const Matrix& m) {
  return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= kSymTol;
}

bool is_psd(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
  return es.eigenvalues().minCoeff() >= kPsdTol;
}

void check_cov(std::vector<Violation>& out, const Matrix& m, int stage,
               const std::string& field, int dim) {
  if (m.rows() != dim || m.cols() != dim) {
    out.push_back({"StageModel", stage, field, "covariance dimension mismatch"});
    return;
  }
  if (m.rows() > 0 && !is_symmetric(m)) {
    out.push_back({"StageModel", stage, field, "covariance not symmetric"});
    return;
  }
  if (m.rows() > 0 && !is_psd(m))
    out.push_back({"StageModel", stage, field, "covariance not positive semi-definite"});
}

}  // namespace

int SystemModel::total_sensors() const {
  int n = 0;
  for (const auto& s : stages) n += s.sensor_dim();
  return n;
}

int SystemModel::augmented_dim() const {
  int m = stages.empty() ? 0 : stages[0].state_dim();
  for (std::size_t k = 1; k < stages.size(); ++k) m += stages[k].state_dim();
  return m;
}

int SystemModel::sensor_offset(int k) const {
  int off = 0;
  for (int i = 0; i < k; ++i) off += stages[i].sensor_dim();
  return off;
}

std::string to_string(const Violation& v) {
  std::ostringstream os;
  os << v.type;
  if (v.stage >= 0) os << " stage " << v.stage;
  os << " field " << v.field << ": " << v.rule;
  return os.str();
}

std::vector<Violation> validate(const SystemModel& sys) {
  std::vector<Violation> out;
  const int K = sys.num_stages();
  if (K < 1) {
    out.push_back({"SystemModel", -1, "stages", "need at least stages 0 and 1"});
    return out;
  }

  const auto& s0 = sys.stages[0];
  if (s0.A.size() != 0 || s0.B.size() != 0 || s0.W.size() != 0)
    out.push_back({"StageModel", 0, "A", "stage 0 is measurement-only; A/B/W must be absent"});
  if (s0.C.size() == 0)
    out.push_back({"StageModel", 0, "C", "stage 0 requires C"});
  check_cov(out, s0.V, 0, "V", s0.sensor_dim());

  for (int k = 1; k <= K; ++k) {
    const auto& s = sys.stages[k];
    const int m = s.state_dim(), mprev = sys.stages[k - 1].state_dim();
    if (s.A.rows() != m || s.A.cols() != mprev)
      out.push_back({"StageModel", k, "A",
                     "A must be m_k x m_{k-1} = " + std::to_string(m) + "x" + std::to_string(mprev)});
    if (s.B.rows() != m)
      out.push_back({"StageModel", k, "B", "B must have m_k rows"});
    if (s.C.size() == 0)
      out.push_back({"StageModel", k, "C", "C required"});
    check_cov(out, s.W, k, "W", m);
    check_cov(out, s.V, k, "V", s.sensor_dim());
  }

  if (sys.x0.size() != s0.state_dim())
    out.push_back({"SystemModel", -1, "x0", "x0 dimension must equal m_0"});
  if (static_cast<int>(sys.refs.size()) != K) {
    out.push_back({"SystemModel", -1, "refs", "need exactly K reference vectors"});
  } else {
    for (int k = 1; k <= K; ++k)
      if (sys.refs[k - 1].size() != sys.stages[k].state_dim())
        out.push_back({"SystemModel", k, "refs", "x_k^r dimension must equal m_k"});
  }

  auto check_weight = [&](const Matrix& m, const std::string& field) {
    if (m.size() == 0 || !is_symmetric(m))
      out.push_back({"SystemModel", -1, field, "LQG weight must be symmetric"});
    else if (!is_psd(m))
      out.push_back({"SystemModel", -1, field, "LQG weight must be positive semi-definite"});
  };
  check_weight(sys.U, "U");
  check_weight(sys.Z, "Z");
  check_weight(sys.F, "F");
  if (sys.prior_cov.rows() != s0.state_dim() || sys.prior_cov.cols() != s0.state_dim())
    out.push_back({"SystemModel", -1, "prior_cov", "prior covariance must be m_0 x m_0"});
  else if (!is_symmetric(sys.prior_cov) || !is_psd(sys.prior_cov))
    out.push_back({"SystemModel", -1, "prior_cov", "prior covariance must be symmetric PSD"});

  if (sys.gains) {
    if (static_cast<int>(sys.gains->size()) != K + 1) {
      out.push_back({"SystemModel", -1, "gains", "gains must cover stages 0..K"});
    } else {
      if ((*sys.gains)[0].K.size() == 0)
        out.push_back({"SystemModel", 0, "gains", "stage 0 Kalman gain missing"});
      for (int k = 1; k <= K; ++k) {
        const auto& g = (*sys.gains)[k];
        if (g.L.size() == 0 || g.LR.size() == 0 || g.K.size() == 0)
          out.push_back({"SystemModel", k, "gains", "synthesized gains incomplete"});
      }
    }
  }
  return out;
}

std::string serialize_system(const SystemModel& sys) {
  json j;
  j["stages"] = json::array();
  for (const auto& s : sys.stages) {
    json js;
    js["k"] = s.k;
    if (s.k > 0) {
      js["A"] = matrix_to_json(s.A);
      js["B"] = matrix_to_json(s.B);
      js["W"] = matrix_to_json(s.W);
    }
    js["C"] = matrix_to_json(s.C);
    js["V"] = matrix_to_json(s.V);
    j["stages"].push_back(std::move(js));
  }
  j["x0"] = vector_to_json(sys.x0);
  j["refs"] = json::array();
  for (const auto& r : sys.refs) j["refs"].push_back(vector_to_json(r));
  j["lqg"] = {{"U", matrix_to_json(sys.U)},
              {"Z", matrix_to_json(sys.Z)},
              {"F", matrix_to_json(sys.F)}};
  j["prior_cov"] = matrix_to_json(sys.prior_cov);
  j["noise_seed"] = sys.noise_seed;
  if (sys.gains) {
    json jg;
    jg["K"] = json::array();
    jg["L"] = json::array();
    jg["LR"] = json::array();
    for (const auto& g : *sys.gains) {
      jg["K"].push_back(matrix_to_json(g.K));
      jg["L"].push_back(matrix_to_json(g.L));
      jg["LR"].push_back(matrix_to_json(g.LR));
    }
    j["gains"] = std::move(jg);
  }
  return j.dump(2) + "\n";
}

SystemModel parse_system(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ModelError("parse error in " + origin + ": " + e.what());
  }
  try {
    SystemModel sys;
    for (const auto& js : j.at("stages")) {
      StageModel s;
      s.k = js.at("k").get<int>();
      const std::string tag = "stage " + std::to_string(s.k);
      if (s.k > 0) {
        s.A = matrix_from_json(js.at("A"), tag + " A");
        s.B = matrix_from_json(js.at("B"), tag + " B");
        s.W = matrix_from_json(js.at("W"), tag + " W");
      }
      s.C = matrix_from_json(js.at("C"), tag + " C");
      s.V = matrix_from_json(js.at("V"), tag + " V");
      sys.stages.push_back(std::move(s));
    }
    sys.x0 = vector_from_json(j.at("x0"), "x0");
    for (const auto& r : j.at("refs")) sys.refs.push_back(vector_from_json(r, "refs"));
    sys.U = matrix_from_json(j.at("lqg").at("U"), "lqg.U");
    sys.Z = matrix_from_json(j.at("lqg").at("Z"), "lqg.Z");
    sys.F = matrix_from_json(j.at("lqg").at("F"), "lqg.F");
    sys.prior_cov = matrix_from_json(j.at("prior_cov"), "prior_cov");
    sys.noise_seed = j.value("noise_seed", std::uint64_t{0});
    if (j.contains("gains")) {
      const auto& jg = j.at("gains");
      std::vector<StageGains> gains;
      const auto count = jg.at("K").size();
      for (std::size_t k = 0; k < count; ++k) {
        StageGains g;
        g.K = matrix_from_json(jg.at("K")[k], "gains.K");
        if (k > 0) {
          g.L = matrix_from_json(jg.at("L")[k], "gains.L");
          g.LR = matrix_from_json(jg.at("LR")[k], "gains.LR");
        }
        gains.push_back(std::move(g));
      }
      sys.gains = std::move(gains);
    }

    auto violations = validate(sys);
    if (!violations.empty()) {
      std::string msg = "invalid system in " + origin + ":";
      for (const auto& v : violations) msg += "\n  " + to_string(v);
      throw ModelError(msg);
    }
    return sys;
  } catch (const json::exception& e) {
    throw ModelError("schema error in " + origin + ": " + e.what());
  }
}

SystemModel load_system(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open system file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_system(buf.str(), path.string());
}

void save_system(const SystemModel& sys, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ModelError("cannot write system file: " + path.string());
  out << serialize_system(sys);
}

}  // namespace glhad
