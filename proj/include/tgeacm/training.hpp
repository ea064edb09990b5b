#pragma once

// Composite loss, SGD, seq2seq pre-training / warm start, gradient checking
// and the training loop.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tgeacm/model.hpp"

namespace tgeacm {

struct TrainConfig {
  double alpha = 0.5;  // L = alpha L_e + (1 - alpha) L_NLL
  double learning_rate = 0.5;
  int batch_size = 16;
  int max_steps = 1000;
  std::uint64_t seed = 1;
  double clip_norm = 5.0;  // <= 0 disables clipping
  int pretrain_steps = 0;
  int log_every = 1;
  int eval_every = 100;        // validation accuracy / KL cadence, 0 = never
  int checkpoint_every = 0;    // 0 = only step 0 and the final step
  int validation_size = 500;   // held out from the corpus; 0 = evaluate on training pairs
  int max_len = 30;            // decode length and sequence truncation
  int max_vocab = 512;
};

// Throws ConfigError on out-of-range fields.
void validate(const TrainConfig& config);

struct LossBreakdown {
  double total = 0.0;
  double post = 0.0;         // L_p
  double prior = 0.0;        // L_r
  double recognition = 0.0;  // L_r'
  double kl = 0.0;           // L_KL
  double nll = 0.0;          // L_NLL
  double emotion() const { return post + prior + recognition + kl; }
};

// Graph of the full objective for one batch. The decoder is fed e_r'
// (recognition) or e_r (prior).
struct LossGraph {
  ad::Var total;
  ad::Var emotion;  // L_e
  ad::Var nll;
  SelectorLosses selector;
  PriorOutput prior;
  RecognitionOutput recognition;
};

LossGraph build_loss(ad::Graph& g, const Model& model, const Batch& batch, double alpha,
                     EmotionFeed feed = EmotionFeed::Recognition);

LossBreakdown read_losses(const ad::Graph& g, const LossGraph& loss);

// Forward only.
LossBreakdown total_loss(const Model& model, const Batch& batch, double alpha);

// Forward + backward; `grads` is overwritten.
LossBreakdown loss_and_gradients(const Model& model, const Batch& batch, double alpha, Gradients& grads);

// p <- p - lr * g after rescaling g to global norm <= clip_norm (when
// clip_norm > 0). Gradients are rescaled in place. Returns the pre-clip norm.
double sgd_step(ParamStore& params, Gradients& grads, double learning_rate, double clip_norm);

// Plain attention seq2seq objective (no emotion input, no W_3 term).
double seq2seq_nll(const Model& model, const Batch& batch, Gradients* grads = nullptr);

// Trains the generator as the plain seq2seq baseline on NLL only with W_3
// held at zero. Selector tensors are left untouched. Returns the per-step NLL.
std::vector<double> pretrain_seq2seq(Model& model, const std::vector<ConversationPair>& pairs,
                                     const TrainConfig& config);

// Copies the generator and semantic-embedding tensors of a pretrained model
// into `model` and zeroes W_3. Vocabularies and shapes must agree.
void warm_start(Model& model, const Model& pretrained);

// Selector predictions on a set of pairs.
struct SelectorEval {
  std::vector<EmotionVector> prior;        // e_r
  std::vector<EmotionVector> recognition;  // e_r'
  std::vector<EmotionVector> gold;         // response labels
  double acc_prior = 0.0;
  double acc_recognition = 0.0;
  double kl = 0.0;  // mean L_KL
};

SelectorEval evaluate_selector(const Model& model, const std::vector<ConversationPair>& pairs, int batch_size);

// Mean Euclidean distance between matched prior / recognition emotion
// vectors after a joint 2-D PCA projection.
double prior_posterior_distance(const SelectorEval& eval);

struct MetricRecord {
  int step = 0;
  LossBreakdown loss;
  std::optional<double> acc_prior;
  std::optional<double> acc_recognition;
  std::optional<double> val_kl;
};

std::string to_json_line(const MetricRecord& record);

// Called with the model at step 0, every checkpoint_every steps and at the end.
using CheckpointSink = std::function<void(const Model& model, int step, const Rng& shuffle_rng)>;
using MetricSink = std::function<void(const MetricRecord& record)>;

struct TrainResult {
  std::vector<MetricRecord> records;
  int steps = 0;
};

// Seeded shuffled mini-batches, teacher forcing, recognition emotion feed.
// Throws DivergenceError on a non-finite loss.
TrainResult train(Model& model, const std::vector<ConversationPair>& pairs,
                  const std::vector<ConversationPair>& validation, const TrainConfig& config,
                  const CheckpointSink& on_checkpoint = {}, const MetricSink& on_record = {});

// Indices of a seeded permutation: all but the last `validation_size` go to
// training. validation_size == 0 puts everything in training.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
SplitIndices split_indices(std::size_t n, int validation_size, std::uint64_t seed);

struct DataSplit {
  std::vector<ConversationPair> train;
  std::vector<ConversationPair> validation;
};
DataSplit split_validation(const std::vector<ConversationPair>& pairs, int validation_size, std::uint64_t seed);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// Central differences of `loss` against `analytic`, for every scalar in
// `params` (restored afterwards). Relative error is
// |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).
GradCheckReport gradient_check(ParamStore& params, const Gradients& analytic,
                               const std::function<double(const ParamStore&)>& loss, double eps = 1e-4);

// Checks L_total for several alphas with one finite-difference sweep.
std::vector<GradCheckReport> gradient_check(Model& model, const Batch& batch, const std::vector<double>& alphas,
                                            double eps = 1e-4);

}  // namespace tgeacm
