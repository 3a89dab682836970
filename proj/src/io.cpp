#include "mac/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

namespace mac {

using ordered_json = nlohmann::ordered_json;

LogLevel log_level() {
  const char* env = std::getenv("MAC_LOG");
  if (!env) return LogLevel::Info;
  const std::string v(env);
  if (v == "quiet") return LogLevel::Quiet;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::cerr << "[mac] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::Debug) std::cerr << "[mac:debug] " << msg << "\n";
}

namespace {

Eigen::MatrixXd parse_matrix(const ordered_json& j, const std::string& name) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw Error(name + ": expected an array of rows");
  }
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols) {
      throw Error(name + ": ragged rows");
    }
    for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

Eigen::VectorXd parse_vector(const ordered_json& j, const std::string& name) {
  if (!j.is_array()) throw Error(name + ": expected an array");
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i].get<double>();
  return v;
}

ordered_json dump_matrix(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (int i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

NoiseKind parse_noise(const std::string& s) {
  if (s == "gaussian") return NoiseKind::Gaussian;
  if (s == "impulse") return NoiseKind::Impulse;
  if (s == "sinusoid") return NoiseKind::Sinusoid;
  if (s == "worst_case") return NoiseKind::WorstCase;
  if (s == "zero") return NoiseKind::Zero;
  throw Error("unknown noise kind: " + s);
}

}  // namespace

ProblemFile load_problem(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open problem file " + path);
  ordered_json j;
  try {
    j = ordered_json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("parse error in " + path + ": " + e.what());
  }

  ProblemFile p;
  const std::string mode = j.at("mode").get<std::string>();
  p.gamma = j.value("gamma", 0.0);
  if (j.contains("tau")) p.tau = j.at("tau").get<int>();

  if (j.contains("sim")) {
    const auto& s = j["sim"];
    p.sim.n_steps = s.value("N", 100);
    p.sim.seed = s.value("seed", std::uint64_t{0});
    if (s.contains("noise")) p.sim.noise = parse_noise(s["noise"]);
    p.sim.true_model = s.value("true_model", 0);
    if (s.contains("x0")) p.sim.x0_true = parse_vector(s["x0"], "sim.x0");
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    p.solver.epsilon = s.value("epsilon", 1e-6);
    p.solver.max_iter = s.value("max_iter", 60000);
    p.solver.verify_tol = s.value("verify_tol", 1e-8);
  }

  if (mode == "state_feedback") {
    p.mode = ProblemFile::Mode::StateFeedback;
    StateFeedbackSpec spec;
    spec.Q = SymMatrix(parse_matrix(j.at("Q"), "Q"));
    spec.R = SymMatrix(parse_matrix(j.at("R"), "R"));
    spec.gamma = p.gamma;
    spec.x0 = parse_vector(j.at("x0"), "x0");
    for (const auto& m : j.at("models")) {
      spec.models.push_back(StateFeedbackModel{
          parse_matrix(m.at("A"), "A"), parse_matrix(m.at("B"), "B"),
          m.at("label").get<std::string>()});
    }
    p.sf = std::move(spec);
  } else if (mode == "output_feedback") {
    p.mode = ProblemFile::Mode::OutputFeedback;
    OutputFeedbackSpec spec;
    spec.Q = SymMatrix(parse_matrix(j.at("Q"), "Q"));
    spec.R = SymMatrix(parse_matrix(j.at("R"), "R"));
    spec.gamma = p.gamma;
    for (const auto& m : j.at("models")) {
      spec.models.push_back(OutputFeedbackModel{
          parse_matrix(m.at("A"), "A"), parse_matrix(m.at("B"), "B"),
          parse_matrix(m.at("G"), "G"), parse_matrix(m.at("C"), "C"),
          parse_matrix(m.at("D"), "D"), m.at("label").get<std::string>()});
    }
    if (j.contains("xhat0")) {
      for (const auto& x : j["xhat0"]) {
        spec.xhat0.push_back(parse_vector(x, "xhat0"));
      }
    }
    p.of = std::move(spec);
  } else if (mode == "principal") {
    p.mode = ProblemFile::Mode::Principal;
    PrincipalProblem prob;
    prob.A_hat = parse_matrix(j.at("A_hat"), "A_hat");
    prob.B_hat = parse_matrix(j.at("B_hat"), "B_hat");
    prob.G_hat = parse_matrix(j.at("G_hat"), "G_hat");
    prob.z0 = parse_vector(j.at("z0"), "z0");
    const auto& part = j.at("partition");
    const BlockPartition bp{part.at("n_z").get<int>(),
                            part.at("n_u").get<int>(),
                            part.at("n_d").get<int>()};
    for (const auto& m : j.at("models")) {
      prob.models.push_back(PartitionedHessian(
          SymMatrix(parse_matrix(m.at("H"), "H")), bp,
          m.at("label").get<std::string>()));
    }
    prob.check();
    p.principal = std::move(prob);
  } else {
    throw Error("unknown mode: " + mode);
  }
  return p;
}

void save_certificate(const std::string& path,
                      const SynthesisCertificate& cert) {
  ordered_json j;
  j["tau"] = cert.tau;
  j["gamma"] = cert.gamma;
  ordered_json gains;
  for (const auto& g : cert.gains) gains[g.label] = dump_matrix(g.K);
  j["gains"] = std::move(gains);
  ordered_json pj;
  int idx = 0;
  for (int i = 1; i <= cert.n_models; ++i) {
    for (int jj = i; jj <= cert.n_models; ++jj) {
      pj[std::to_string(i) + "," + std::to_string(jj)] =
          dump_matrix(cert.P[idx].mat());
      ++idx;
    }
  }
  j["P"] = std::move(pj);
  ordered_json sj = ordered_json::object();
  for (const auto& [key, mat] : cert.P_stage) {
    sj[std::to_string(key[0]) + "," + std::to_string(key[1]) + "," +
       std::to_string(key[2]) + "," + std::to_string(key[3])] =
        dump_matrix(mat.mat());
  }
  j["P_stage"] = std::move(sj);
  j["margins"] = cert.margins;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write certificate " + path);
  f << j.dump(2) << "\n";
}

SynthesisCertificate load_certificate(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open certificate " + path);
  ordered_json j;
  try {
    j = ordered_json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("parse error in " + path + ": " + e.what());
  }
  SynthesisCertificate cert;
  cert.tau = j.at("tau").get<int>();
  cert.gamma = j.at("gamma").get<double>();
  for (auto it = j.at("gains").begin(); it != j.at("gains").end(); ++it) {
    cert.gains.push_back(GainMatrix{parse_matrix(it.value(), "gain"),
                                    it.key()});
  }
  cert.n_models = static_cast<int>(cert.gains.size());
  // Pairs in row-major i <= j order.
  for (int i = 1; i <= cert.n_models; ++i) {
    for (int jj = i; jj <= cert.n_models; ++jj) {
      const std::string key = std::to_string(i) + "," + std::to_string(jj);
      cert.P.push_back(SymMatrix(parse_matrix(j.at("P").at(key), "P")));
    }
  }
  for (auto it = j.at("P_stage").begin(); it != j.at("P_stage").end(); ++it) {
    std::array<int, 4> key{};
    std::sscanf(it.key().c_str(), "%d,%d,%d,%d", &key[0], &key[1], &key[2],
                &key[3]);
    cert.P_stage.emplace(key, SymMatrix(parse_matrix(it.value(), "P_stage")));
  }
  cert.margins = j.at("margins").get<std::vector<double>>();
  cert.verified = false;  // re-established by verify()
  return cert;
}

void write_manifest(const std::string& path, const RunManifest& m) {
  ordered_json j;
  j["input_hash"] = m.input_hash;
  j["command"] = m.command;
  j["parameters"] = m.parameters;
  j["outcome"] = m.outcome;
  j["output_paths"] = m.output_paths;
  j["wall_time_s"] = m.wall_time_s;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write manifest " + path);
  f << j.dump(2) << "\n";
}

std::string hash_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for hashing");
  std::uint64_t h = 1469598103934665603ull;
  char c;
  while (f.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return std::string("fnv1a64:") + buf;
}

}  // namespace mac
