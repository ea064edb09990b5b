#include "tgeacm/model.hpp"

#include "tgeacm/embeddings.hpp"
#include "tgeacm/error.hpp"

namespace tgeacm {

ModelConfig model_preset(const std::string& name) {
  ModelConfig c;
  if (name == "tiny") {
    c.embed_dim = c.emotion_dim = c.hidden_dim = c.attn_width = 8;
    c.kl_dim = 8;
  } else if (name == "desk") {
    c.embed_dim = c.emotion_dim = c.hidden_dim = c.attn_width = 32;
    c.kl_dim = 64;
  } else if (name == "paper") {
    c.embed_dim = c.emotion_dim = 200;
    c.hidden_dim = c.attn_width = 256;
    c.kl_dim = 64;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected tiny, desk or paper)");
  }
  c.layers = 2;
  return c;
}

Model Model::create(const ModelConfig& config, const Vocabulary& vocab, std::uint64_t seed,
                    const std::optional<std::string>& semantic_embeddings,
                    const std::optional<std::string>& emotional_embeddings) {
  Model m;
  m.config = config;
  m.vocab = vocab;
  const int d = config.embed_dim;
  auto table = [&](EmbeddingKind kind, const std::optional<std::string>& path) {
    return path ? load_embeddings(*path, vocab, d, kind, seed) : random_embeddings(vocab, d, kind, seed);
  };
  m.semantic_table = m.params.add(kSemanticTableName, table(EmbeddingKind::Semantic, semantic_embeddings));
  m.emotional_table = m.params.add(kEmotionalTableName, table(EmbeddingKind::Emotional, emotional_embeddings));

  Rng selector_rng = Rng::derive(seed, "init.selector");
  SelectorDims sd{d, config.hidden_dim, config.layers, config.attn_width, config.kl_dim};
  m.selector = make_selector(m.params, sd, config.selector, selector_rng);

  Rng generator_rng = Rng::derive(seed, "init.generator");
  GeneratorDims gd{d, config.emotion_dim, config.hidden_dim, config.layers, config.attn_width, vocab.size()};
  m.generator = make_generator(m.params, gd, generator_rng);
  m.params.round_to_float();
  return m;
}

void Model::rebind() {
  semantic_table = params.id(kSemanticTableName);
  emotional_table = params.id(kEmotionalTableName);
  selector = bind_selector(params, config.layers, config.selector);
  generator = bind_generator(params, config.layers);
  if (params[semantic_table].rows() != vocab.size() || params[emotional_table].rows() != vocab.size())
    throw IntegrityError("embedding tables do not match the vocabulary size");
}

void pad_sequences(const std::vector<const TokenSequence*>& seqs, std::vector<std::vector<int>>& ids, Mat& mask) {
  std::size_t longest = 0;
  for (const auto* s : seqs) {
    if (s->empty()) throw InvalidInput("empty token sequence in batch");
    longest = std::max(longest, s->size());
  }
  ids.assign(longest, std::vector<int>(seqs.size(), Vocabulary::kPad));
  mask = Mat::Zero(static_cast<Eigen::Index>(longest), static_cast<Eigen::Index>(seqs.size()));
  for (std::size_t b = 0; b < seqs.size(); ++b)
    for (std::size_t t = 0; t < seqs[b]->size(); ++t) {
      ids[t][b] = (*seqs[b])[t];
      mask(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(b)) = 1.0;
    }
}

Batch make_batch(const std::vector<const ConversationPair*>& pairs) {
  if (pairs.empty()) throw InvalidInput("empty batch");
  Batch b;
  b.size = pairs.size();
  std::vector<const TokenSequence*> posts, responses;
  const auto n = static_cast<Eigen::Index>(pairs.size());
  b.post_labels = Mat::Zero(kNumEmotions, n);
  b.response_labels = Mat::Zero(kNumEmotions, n);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    posts.push_back(&pairs[i]->post);
    responses.push_back(&pairs[i]->response);
    for (int k = 0; k < kNumEmotions; ++k) {
      b.post_labels(k, static_cast<Eigen::Index>(i)) = pairs[i]->post_emotion[static_cast<std::size_t>(k)];
      b.response_labels(k, static_cast<Eigen::Index>(i)) = pairs[i]->response_emotion[static_cast<std::size_t>(k)];
    }
  }
  pad_sequences(posts, b.post_ids, b.post_mask);
  pad_sequences(responses, b.response_ids, b.response_mask);
  b.decoder = teacher_forcing(responses);
  return b;
}

Batch make_batch(const std::vector<ConversationPair>& pairs) {
  std::vector<const ConversationPair*> ptrs;
  for (const auto& p : pairs) ptrs.push_back(&p);
  return make_batch(ptrs);
}

EmbeddedBatch embed_tokens(ad::Graph&, ad::Var table, const std::vector<std::vector<int>>& ids, const Mat& mask) {
  EmbeddedBatch e;
  e.mask = mask;
  e.tokens.reserve(ids.size());
  for (const auto& step : ids) e.tokens.push_back(ad::lookup(table, step));
  return e;
}

}  // namespace tgeacm
