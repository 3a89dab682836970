#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mac/reduce.hpp"
#include "mac/sim.hpp"
#include "mac/synth.hpp"

namespace mac {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

// Level from the MAC_LOG environment variable (quiet|info|debug).
LogLevel log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

struct SimSection {
  int n_steps = 100;
  std::uint64_t seed = 0;
  NoiseKind noise = NoiseKind::Gaussian;
  int true_model = 0;
  std::optional<Eigen::VectorXd> x0_true;
};

struct SolverSection {
  double epsilon = 1e-6;
  int max_iter = 60000;
  double verify_tol = 1e-8;
};

// Parsed problem definition file.
struct ProblemFile {
  enum class Mode { StateFeedback, OutputFeedback, Principal } mode;
  std::optional<StateFeedbackSpec> sf;
  std::optional<OutputFeedbackSpec> of;
  std::optional<PrincipalProblem> principal;
  double gamma = 0.0;
  std::optional<int> tau;
  SimSection sim;
  SolverSection solver;
};

// Throws Error with a line/column diagnostic on malformed input.
ProblemFile load_problem(const std::string& path);

void save_certificate(const std::string& path,
                      const SynthesisCertificate& cert);
SynthesisCertificate load_certificate(const std::string& path);

struct RunManifest {
  std::string input_hash;
  std::string command;
  std::string parameters;  // rendered key=value list
  std::string outcome;
  std::vector<std::string> output_paths;
  double wall_time_s = 0.0;
};

void write_manifest(const std::string& path, const RunManifest& m);

// FNV-1a 64-bit of the file bytes, rendered as hex.
std::string hash_file(const std::string& path);

}  // namespace mac
