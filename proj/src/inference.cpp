#include "tgeacm/inference.hpp"

#include "tgeacm/error.hpp"

namespace tgeacm {

EmotionVector predict_response_emotion(const Model& m, const TokenSequence& post) {
  if (post.empty()) throw InvalidInput("empty post");
  ad::Graph g(ad::Mode::Inference);
  std::vector<std::vector<int>> ids;
  for (int id : post) ids.push_back({id});
  const Mat mask = Mat::Ones(static_cast<Eigen::Index>(post.size()), 1);
  const EmbeddedBatch semantic = embed_tokens(g, g.param(m.params, m.semantic_table), ids, mask);
  const EmbeddedBatch emotional = embed_tokens(g, g.param(m.params, m.emotional_table), ids, mask);
  const PriorOutput prior = prior_forward(g, m.params, m.selector, emotional, semantic);
  const Mat& p = g.value(prior.response_emotion.probs);
  EmotionVector e{};
  for (int k = 0; k < kNumEmotions; ++k) e[static_cast<std::size_t>(k)] = p(k, 0);
  return e;
}

TokenSequence respond(const Model& m, const TokenSequence& post, int max_len) {
  return greedy_decode(m.params, m.generator, m.semantic_table, post, predict_response_emotion(m, post), max_len);
}

TokenSequence encode_post(const Model& m, const std::string& text) { return encode_text(tokenize(text), m.vocab); }

}  // namespace tgeacm
