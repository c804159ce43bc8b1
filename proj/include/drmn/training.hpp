#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "drmn/corpus.hpp"
#include "drmn/model.hpp"
#include "drmn/optimizer.hpp"
#include "drmn/retrieval.hpp"

namespace drmn {

/// drmn: memory over the top_k retrieved conversations.
/// esm_off: no retrieved conversations anywhere, memory vector is zero.
/// concat_tc_sc: retrieved turns are prepended to the context, memory off.
enum class Mode { kDrmn, kEsmOff, kConcat };
Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

MemoryKeys parse_memory_keys(const std::string& name);
std::string memory_keys_name(MemoryKeys keys);

struct TrainConfig {
  int word_dim = 300;
  int role_dim = 100;
  int hidden = 300;
  int layers = 2;
  double keep_prob = 0.8;
  double learning_rate = 5e-4;
  int batch_size = 32;
  int top_k = 1;
  Mode mode = Mode::kDrmn;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 1;
  int max_epochs = 30;
  int patience = 5;
  double clip_norm = 5.0;
  MemoryKeys memory_keys = MemoryKeys::kWords;
  bool bank_target_only = false;
  std::string target_role = "judge";
  std::size_t max_tokens_per_turn = 30;
  std::size_t max_context_turns = 20;

  /// Throws UsageError on inconsistent settings.
  void validate() const;
  ModelConfig model_config(int vocab_size, int role_count) const;
  TruncationLimits limits() const { return {max_tokens_per_turn, max_context_turns}; }

  /// `key=value` lines in a fixed order.
  std::string serialize() const;
  /// Applies one `key=value` setting; throws UsageError for unknown keys.
  void set(const std::string& key, const std::string& value);
  static TrainConfig parse(const std::string& text);
};

/// Builds model inputs for one split of examples. `cache` supplies the
/// retrieved neighbors of each example (ignored by esm_off).
std::vector<ModelInput> build_inputs(const std::vector<TrainingExample>& examples, const Corpus& corpus,
                                     const Vocabulary& vocab, const RetrievalCache* cache, Mode mode, int top_k,
                                     const TruncationLimits& limits);

struct Dataset {
  std::vector<ModelInput> train;
  std::vector<ModelInput> dev;
  std::vector<ModelInput> test;
};

/// Examples of `config.target_role`, split by conversation id.
Dataset build_dataset(const Corpus& corpus, const Vocabulary& vocab, const RetrievalCache* cache,
                      const TrainConfig& config);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double seconds = 0.0;
};
std::string format_log_header();
std::string format_log_line(const EpochLog& log);

struct EvalStats {
  double loss = 0.0;      // mean per-example loss
  double accuracy = 0.0;  // per-token argmax accuracy
  std::size_t tokens = 0;
};

/// Teacher-forced evaluation with dropout off.
EvalStats evaluate_loss(const Model& model, const std::vector<ModelInput>& inputs);

/// Resumable training state; everything needed for an exact continuation.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  TrainConfig config;
  int vocab_size = 0;
  std::vector<std::string> roles;
  int epoch = 0;
  std::uint64_t rng_state = 0;
  std::uint64_t optimizer_steps = 0;
  double best_dev = 0.0;
  int bad_epochs = 0;
  std::vector<std::pair<std::string, ad::Matrix>> tensors;  // parameters, moments, best snapshot
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& bytes, const std::string& source = "<memory>");
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

class Trainer {
 public:
  Trainer(const TrainConfig& config, int vocab_size, std::vector<std::string> roles);
  /// Restores a trainer from a checkpoint, including optimizer and generator state.
  static Trainer resume(const Checkpoint& checkpoint);

  /// One pass over `train` in a shuffled order, then dev evaluation.
  EpochLog run_epoch(const std::vector<ModelInput>& train, const std::vector<ModelInput>& dev);
  /// Epochs until max_epochs or early stop. `on_epoch` sees every log line.
  std::vector<EpochLog> fit(const std::vector<ModelInput>& train, const std::vector<ModelInput>& dev,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

  /// Loss and gradient of one mini-batch; throws NumericError when non-finite.
  double batch_gradients(const std::vector<const ModelInput*>& batch, ad::Gradients& grads);

  Checkpoint checkpoint() const;
  /// Model with the best dev-loss parameters seen so far (current if none).
  Model best_model() const;

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  Optimizer& optimizer() { return optimizer_; }
  const TrainConfig& config() const { return config_; }
  void set_max_epochs(int n) { config_.max_epochs = n; }
  const std::vector<std::string>& roles() const { return roles_; }
  int epoch() const { return epoch_; }
  bool stopped() const { return bad_epochs_ >= config_.patience; }
  double best_dev() const { return best_dev_; }
  /// Global gradient norm before clipping, from the most recent step.
  double last_grad_norm() const { return last_norm_; }

 private:
  TrainConfig config_;
  std::vector<std::string> roles_;
  Model model_;
  Optimizer optimizer_;
  SplitMix64 rng_;
  int epoch_ = 0;
  double best_dev_;
  int bad_epochs_ = 0;
  std::vector<ad::Matrix> best_params_;
  double last_norm_ = 0.0;
};

/// Restores a model for inference from a checkpoint's best snapshot.
Model model_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace drmn
