#pragma once

#include "swingfreq/controllers.hpp"
#include "swingfreq/training.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace swingfreq {

enum ExitCode : int {
  kExitOk = 0,
  kExitInput = 2,
  kExitDiverged = 3,
  kExitCertify = 4,
};

struct RunConfig {
  std::filesystem::path case_path;
  std::string controller;  // type name or controller file
  std::vector<std::filesystem::path> checkpoints;
  std::uint64_t seed = 0;
  int scenarios = 0;  // 0: command default
  int epochs = 200;
  int batch_size = 10;
  double lr = 0.0;  // 0: kTrainLearningRate
  double dt = 0.0;  // 0: command default
  double horizon = 0.0;
  double noise = 0.0;
  std::filesystem::path out_dir = ".";
  std::optional<Integrator> method;
  bool smooth_max = false;
  std::optional<double> saturate;
  // simulate only: explicit steps "bus:magnitude[@onset]" (1-based bus)
  std::vector<std::string> steps;
  bool no_loads = false;

  /// Throws std::invalid_argument on bad values or missing paths.
  void validate() const;
};

/// Seed of the per-network action-cost coefficients.
inline constexpr std::uint64_t kCostSeed = 39;
/// Evaluation protocol: disturbance at 2 s, 17 s horizon.
inline constexpr double kEvalOnset = 2.0;
inline constexpr double kEvalHorizon = 17.0;
/// Adam step size used by `train`. At 1e-3 the desk-scale 200-epoch run
/// barely moves the parameters.
inline constexpr double kTrainLearningRate = 0.05;

/// Untrained controller of a named type sized for n buses. The adaptive
/// types expect the bundled three-feature sinusoid basis.
Controller default_controller(const std::string& type, int n);
/// A type name or a path to a controller / checkpoint file.
Controller resolve_controller(const std::string& spec, int n,
                              std::optional<TrainState>* state = nullptr);

/// Test scenarios used by evaluate; disjoint from training draws.
ScenarioSet evaluation_scenarios(const Network& net,
                                 const Eigen::VectorXd& delta_star, int count,
                                 std::uint64_t seed, double noise);
/// Training scenarios with onset 0.
ScenarioSet training_scenarios(const Network& net,
                               const Eigen::VectorXd& delta_star, int count,
                               std::uint64_t seed, double noise);

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_certify(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace swingfreq
