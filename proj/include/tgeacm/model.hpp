#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tgeacm/corpus.hpp"
#include "tgeacm/generator.hpp"
#include "tgeacm/selector.hpp"

namespace tgeacm {

struct ModelConfig {
  int embed_dim = 32;
  int emotion_dim = 32;  // d_e, width of V_e
  int hidden_dim = 32;
  int layers = 2;
  int attn_width = 32;  // equal to hidden_dim unless overridden
  int kl_dim = 64;
  SelectorOptions selector;
};

// "tiny" (h=d=8), "desk" (h=d=32), "paper" (h=256, d=200).
ModelConfig model_preset(const std::string& name);

// The complete trainable model: two embedding tables, selector and generator,
// all tensors living in one ParamStore.
struct Model {
  ModelConfig config;
  Vocabulary vocab;
  ParamStore params;
  ParamId semantic_table;   // (|V| x d)
  ParamId emotional_table;  // (|V| x d)
  SelectorParams selector;
  GeneratorParams generator;

  // Fresh parameters from the seed. Embedding tables come from the optional
  // text files or are initialised randomly.
  static Model create(const ModelConfig& config, const Vocabulary& vocab, std::uint64_t seed,
                      const std::optional<std::string>& semantic_embeddings = std::nullopt,
                      const std::optional<std::string>& emotional_embeddings = std::nullopt);

  // Re-derive module views from parameter names.
  void rebind();
};

inline constexpr const char* kSemanticTableName = "embedding.semantic";
inline constexpr const char* kEmotionalTableName = "embedding.emotional";

// A padded mini-batch of conversation pairs.
struct Batch {
  std::size_t size = 0;
  std::vector<std::vector<int>> post_ids;  // [t][b]
  Mat post_mask;                           // (T x B)
  std::vector<std::vector<int>> response_ids;
  Mat response_mask;
  DecoderTargets decoder;
  Mat post_labels;      // (K x B)
  Mat response_labels;  // (K x B)
};

Batch make_batch(const std::vector<const ConversationPair*>& pairs);
Batch make_batch(const std::vector<ConversationPair>& pairs);

// Padded ids plus mask for a list of sequences.
void pad_sequences(const std::vector<const TokenSequence*>& seqs, std::vector<std::vector<int>>& ids, Mat& mask);

EmbeddedBatch embed_tokens(ad::Graph& g, ad::Var table, const std::vector<std::vector<int>>& ids, const Mat& mask);

// Which emotion vector the decoder sees.
enum class EmotionFeed {
  Recognition,  // e_r' (training)
  Prior,        // e_r (inference)
};

}  // namespace tgeacm
