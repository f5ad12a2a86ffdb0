#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "lgsgm/evaluator.hpp"
#include "lgsgm/graphdata.hpp"
#include "lgsgm/model.hpp"
#include "lgsgm/params.hpp"

namespace lgsgm {

// How the in-batch negative of each true pair is chosen.
enum class NegativeMining {
  kHardest,        // highest-scoring non-matching candidate
  kLeastMatching,  // lowest-scoring non-matching candidate
};

NegativeMining parse_negative_mining(const std::string& name);
const char* negative_mining_name(NegativeMining m);

// Bidirectional hinge loss over a square score matrix whose diagonal holds
// the true pairs:
//   sum_k max(0, m - S_kk + S_k,l(k)) + max(0, m - S_kk + S_i(k),k)
// where l(k) and i(k) are the mined caption and image negatives of pair k.
// The diagonal is never mined; ties go to the lower index.
// ContractError unless the matrix is square with at least 2 rows.
num::Tensor batch_loss(const num::Tensor& scores, double margin, NegativeMining mining = NegativeMining::kHardest);

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  explicit Adam(const AdamConfig& config = {}) : config_(config) {}

  // One bias-corrected update of every trainable entry. ContractError naming
  // the parameter when a trainable entry carries no gradient; nothing is
  // updated in that case.
  void step(ParameterSet& params);

  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

  // Restores optimiser state, e.g. from a checkpoint.
  void restore(std::uint64_t steps, std::map<std::string, Moments> moments);

 private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

struct TrainConfig {
  double margin = 0.35;
  std::size_t batch_size = 16;
  double learning_rate = 3e-4;
  std::size_t epochs = 30;  // total epoch count, including resumed ones
  std::uint64_t seed = 7;
  NegativeMining mining = NegativeMining::kHardest;
  double clip_norm = 0.0;   // global gradient-norm clip; 0 disables
  std::size_t patience = 0; // stop after this many epochs without a better validation R-Sum; 0 disables
  std::size_t threads = 1;  // evaluation workers

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::vector<double> batch_losses;
  double val_rsum = 0.0;  // both directions, percent; 0 without a validation split
  double val_i2t_r1 = 0.0;
  double val_t2i_r1 = 0.0;
};

nlohmann::json to_json(const EpochLog& e);
EpochLog epoch_log_from_json(const nlohmann::json& j);

struct TrainState {
  std::size_t epochs_done = 0;
  Adam adam;
  std::vector<EpochLog> log;
  double best_val_rsum = -1.0;
  std::size_t best_epoch = 0;
  std::size_t stale_epochs = 0;
  ParameterSet best_params;  // empty until a validation pass has run
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochLog&, const TrainState&)>;

// Runs epochs state.epochs_done + 1 .. config.epochs. Each epoch shuffles
// the training pairs with a seed derived from (config.seed, epoch), takes one
// caption per image (cycling through captions across epochs), scores the
// full in-batch matrix, applies batch_loss and one Adam step per batch. A
// non-finite loss aborts with NumericError naming the first non-finite op.
void train(Model& model, const PairedDataset& train_set, const PairedDataset* val_set, const TrainConfig& config,
           TrainState& state, const EpochCallback& on_epoch = {});

// Score matrix of one mini-batch (images x captions), recorded on the active
// tape if any.
num::Tensor batch_scores(const Model& model, std::span<const ImageEncoding> images,
                         std::span<const CaptionEncoding> captions);

// ---------------------------------------------------------------- checkpoints

enum class CheckpointDtype { kF64, kF32 };

struct Checkpoint {
  nlohmann::json model_config;
  nlohmann::json extra;
  ParameterSet tensors;  // model parameters and buffers
  std::map<std::string, Adam::Moments> optimizer;
  std::uint64_t optimizer_steps = 0;
};

constexpr int kCheckpointVersion = 1;

// Manifest line (JSON) followed by a little-endian blob. f64 is bit-exact;
// f32 rounds every value.
std::string encode_checkpoint(const Checkpoint& ckpt, CheckpointDtype dtype = CheckpointDtype::kF64);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt,
                     CheckpointDtype dtype = CheckpointDtype::kF64);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Checkpoint of the model's registry, plus optimiser and schedule when
// `state` is given.
Checkpoint make_checkpoint(const Model& model, const TrainState* state = nullptr,
                           const TrainConfig* config = nullptr);

// Copies the checkpoint's tensors into `params`. Every registry entry must be
// present with the same shape; DimensionError names the first mismatch and
// nothing is modified.
void restore_params(const Checkpoint& ckpt, ParameterSet& params);

// Builds a model from the stored config and restores its tensors.
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt);

// Rebuilds optimiser state, epoch count and log.
void restore_train_state(const Checkpoint& ckpt, TrainState& state);

}  // namespace lgsgm
