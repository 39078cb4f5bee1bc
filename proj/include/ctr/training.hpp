#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctr/dataset.hpp"
#include "ctr/lbfgs.hpp"
#include "ctr/network.hpp"
#include "ctr/pinn_loss.hpp"

namespace ctr {

enum class Stage { synthetic, experimental };
const char* to_string(Stage s);
Stage stage_from_string(const std::string& s);

struct TrainingConfig {
  Stage stage = Stage::synthetic;
  int n_collocation = kDefaultCollocation;
  int n_boundary = kDefaultBoundary;
  std::uint64_t seed = 1;
  std::vector<int> hidden{100, 100, 100, 100, 100, 100};
  ActuationDomain domain{};
  LbfgsConfig lbfgs{};
  LossWeights weights{};
  LossNorm norm = LossNorm::euclidean;
  int threads = 1;
  /// Iterations between checkpoints; 0 writes only the final one.
  int checkpoint_every = 100;
  /// Stage 2: keep the stage-1 observations next to the experimental ones.
  bool augment = true;

  [[nodiscard]] nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j);
};

struct TrainingPaths {
  std::filesystem::path weights_out;
  std::filesystem::path log;
  std::filesystem::path checkpoint;
};

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainingResult {
  Network net;
  LbfgsState state;
  StopReason stop = StopReason::none;
  bool resumed = false;
};

/// Header line of the append-only training log.
std::string training_log_header();

/// Collocation and boundary sets are drawn from `cfg.seed`, so a checkpoint
/// only needs the optimizer state to continue exactly.
/// `initial` is the starting network (stage 2: the stage-1 weights); when
/// null, a Xavier-initialized network is used.
/// Non-finite losses abort with NumericalFailure; the last checkpoint stays.
TrainingResult train(const RobotSpec& robot, const TrainingConfig& cfg,
                     const std::vector<ObservationRecord>& observations, const Network* initial,
                     const TrainingPaths& paths, bool resume,
                     const std::function<void(const IterationRecord&)>& progress = {});

/// Checkpoint file: CBOR document with config, network and optimizer state.
void save_checkpoint(const std::filesystem::path& path, const TrainingConfig& cfg,
                     const Network& net, const LbfgsState& state, double wall_time);
struct Checkpoint {
  TrainingConfig cfg;
  Network net;
  LbfgsState state;
  double wall_time = 0.0;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ctr
