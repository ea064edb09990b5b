#pragma once

// Target-guided emotion selector.
//
// Prior network: prior encoder (emotional embeddings of the post) and the
// intermediate encoder (semantic embeddings of the post) are pooled, fused,
// and mapped to the predicted response emotion e_r. The prior encoder alone
// also predicts the post emotion e_p.
// Recognition network: recognition encoder (semantic embeddings of the
// response) and the same intermediate encoder, fused and mapped to e_r'.
// Both fused states are projected through a shared W_kl and tied together by
// a Bernoulli KL term.

#include <optional>
#include <string>

#include "tgeacm/corpus.hpp"
#include "tgeacm/encoders.hpp"

namespace tgeacm {

struct AffineParams {
  ParamId W;
  ParamId b;
};

enum class KlDirection {
  PriorToRecognition,  // KL(s(W_kl h_pe + b) || s(W_kl h_re + b))
  RecognitionToPrior,  // KL(s(W_kl h_re + b) || s(W_kl h_pe + b))
};

struct SelectorOptions {
  ad::EmotionXent xent = ad::EmotionXent::PositiveTerm;
  bool share_fusion = false;  // recognition path reuses the prior fusion + head
  bool kl_stop_grad = false;  // no gradient through the recognition-side KL argument
  KlDirection kl_direction = KlDirection::PriorToRecognition;
};

struct SelectorParams {
  GruStack prior_gru;
  AttnPool prior_pool;
  GruStack inter_gru;
  AttnPool inter_pool;
  GruStack recog_gru;
  AttnPool recog_pool;
  AffineParams prior_fusion;  // (h x 2h), (h x 1)
  AffineParams recog_fusion;
  AffineParams post_head;   // (K x h)
  AffineParams prior_head;  // (K x h)
  AffineParams recog_head;  // (K x h)
  AffineParams kl_proj;     // (m x h), shared by both KL arguments
};

struct SelectorDims {
  int embed_dim = 0;
  int hidden_dim = 0;
  int layers = 1;
  int attn_width = 0;
  int kl_dim = 0;
};

SelectorParams make_selector(ParamStore& ps, const SelectorDims& dims, const SelectorOptions& opts, Rng& rng);
SelectorParams bind_selector(const ParamStore& ps, int layers, const SelectorOptions& opts);

// Predicted post emotion: logits = W_p h_p + b_p, probabilities sigmoid(logits).
struct EmotionPrediction {
  ad::Var logits;  // (K x B)
  ad::Var probs;   // (K x B)
};

EmotionPrediction predict_emotion(ad::Graph& g, const ParamStore& ps, const AffineParams& head, ad::Var pooled);

// Emotion cross-entropy, mean over the batch. Labels (K x B) must be label-form.
ad::Var emotion_loss(ad::Graph& g, const EmotionPrediction& pred, const Mat& labels, ad::EmotionXent mode);

struct Fusion {
  ad::Var gate;   // w = sigmoid(W_f [a; b] + b_f)
  ad::Var fused;  // w * tanh(a) + (1 - w) * tanh(b)
};

Fusion fuse(ad::Graph& g, const ParamStore& ps, const AffineParams& fusion, ad::Var a, ad::Var b);

// One view of the post (or response) as a padded batch: (d x B) embedded
// tokens per position and a (T x B) mask.
struct EmbeddedBatch {
  std::vector<ad::Var> tokens;
  Mat mask;
};

struct PriorOutput {
  PooledSequence prior;         // h_p
  PooledSequence intermediate;  // h_e
  Fusion fusion;                // h_pe
  EmotionPrediction post_emotion;
  EmotionPrediction response_emotion;  // e_r
};

PriorOutput prior_forward(ad::Graph& g, const ParamStore& ps, const SelectorParams& sel,
                          const EmbeddedBatch& post_emotional, const EmbeddedBatch& post_semantic);

struct RecognitionOutput {
  PooledSequence recognition;   // h_r
  PooledSequence intermediate;  // h_e
  Fusion fusion;                // h_re
  EmotionPrediction response_emotion;  // e_r'
};

// `intermediate` may carry an already computed pooling of the post by the
// shared intermediate encoder; otherwise it is recomputed.
RecognitionOutput recognition_forward(ad::Graph& g, const ParamStore& ps, const SelectorParams& sel,
                                      const EmbeddedBatch& post_semantic, const EmbeddedBatch* response_semantic,
                                      const std::optional<PooledSequence>& intermediate = std::nullopt);

// Batch-mean Bernoulli KL between sigmoid(W_kl h_pe + b) and sigmoid(W_kl h_re + b).
ad::Var kl_hidden(ad::Graph& g, const ParamStore& ps, const AffineParams& kl_proj, ad::Var h_pe, ad::Var h_re,
                  const SelectorOptions& opts);

struct SelectorLosses {
  ad::Var post;         // L_p
  ad::Var prior;        // L_r
  ad::Var recognition;  // L_r'
  ad::Var kl;           // L_KL
  ad::Var total;        // L_e = L_p + L_r + L_r' + L_KL
};

SelectorLosses selector_loss(ad::Graph& g, const ParamStore& ps, const SelectorParams& sel,
                             const SelectorOptions& opts, const PriorOutput& prior, const RecognitionOutput& recog,
                             const Mat& post_labels, const Mat& response_labels);

}  // namespace tgeacm
