#include "tgeacm/generator.hpp"

#include "tgeacm/error.hpp"

namespace tgeacm {

using ad::Var;

GeneratorParams make_generator(ParamStore& ps, const GeneratorDims& d, Rng& rng) {
  if (d.vocab_size <= Vocabulary::kReserved) throw ConfigError("vocabulary too small for the generator");
  const double r = kParamInitRange;
  const int h = d.hidden_dim;
  GeneratorParams gen;
  gen.encoder = make_gru_stack(ps, "generator.encoder.gru", d.embed_dim, h, d.layers, rng);
  gen.W_e = ps.add_uniform("generator.W_e", d.emotion_dim, kNumEmotions, r, rng);
  gen.v = ps.add_uniform("generator.attn.v", 1, d.attn_width, r, rng);
  gen.W_1 = ps.add_uniform("generator.attn.W_1", d.attn_width, h, r, rng);
  gen.W_2 = ps.add_uniform("generator.attn.W_2", d.attn_width, h, r, rng);
  gen.W_3 = ps.add_uniform("generator.attn.W_3", d.attn_width, d.emotion_dim, r, rng);
  gen.W_4 = ps.add_uniform("generator.W_4", h, 2 * h, r, rng);
  gen.decoder = make_gru_stack(ps, "generator.decoder.gru", d.embed_dim + d.emotion_dim, h, d.layers, rng);
  for (int l = 0; l < d.layers; ++l)
    gen.W_init.push_back(ps.add_uniform("generator.W_init.l" + std::to_string(l), h, h, r, rng));
  gen.W_out = ps.add_uniform("generator.out.W", d.vocab_size, h, r, rng);
  gen.b_out = ps.add_uniform("generator.out.b", d.vocab_size, 1, r, rng);
  return gen;
}

GeneratorParams bind_generator(const ParamStore& ps, int layers) {
  GeneratorParams gen;
  gen.encoder = bind_gru_stack(ps, "generator.encoder.gru", layers);
  gen.W_e = ps.id("generator.W_e");
  gen.v = ps.id("generator.attn.v");
  gen.W_1 = ps.id("generator.attn.W_1");
  gen.W_2 = ps.id("generator.attn.W_2");
  gen.W_3 = ps.id("generator.attn.W_3");
  gen.W_4 = ps.id("generator.W_4");
  gen.decoder = bind_gru_stack(ps, "generator.decoder.gru", layers);
  for (int l = 0; l < layers; ++l) gen.W_init.push_back(ps.id("generator.W_init.l" + std::to_string(l)));
  gen.W_out = ps.id("generator.out.W");
  gen.b_out = ps.id("generator.out.b");
  return gen;
}

Var embed_emotion(ad::Graph& g, const ParamStore& ps, const GeneratorParams& gen, Var emotion) {
  if (g.value(emotion).rows() != kNumEmotions) throw ShapeError("embed_emotion: expected K rows");
  return ad::matmul(g.param(ps, gen.W_e), emotion);
}

Vec embed_emotion(const ParamStore& ps, const GeneratorParams& gen, const EmotionVector& emotion) {
  ad::Graph g(ad::Mode::Inference);
  Vec e = Eigen::Map<const Vec>(emotion.data(), kNumEmotions);
  return g.value(embed_emotion(g, ps, gen, g.constant(e))).col(0);
}

AttentionMemory attention_memory(ad::Graph& g, const ParamStore& ps, const GeneratorParams& gen,
                                 const std::vector<Var>& states, const Mat& mask) {
  AttentionMemory m;
  m.states = states;
  m.mask = mask;
  Var W1 = g.param(ps, gen.W_1);
  for (Var h : states) m.keys.push_back(ad::matmul(W1, h));
  return m;
}

Attention emotion_biased_attention(ad::Graph& g, const ParamStore& ps, const GeneratorParams& gen,
                                   const AttentionMemory& memory, Var s_t, std::optional<Var> emotion_embedding) {
  if (memory.states.empty()) throw ShapeError("attention over an empty memory");
  for (Eigen::Index c = 0; c < memory.mask.cols(); ++c)
    if ((memory.mask.col(c).array() == 0.0).all()) throw InvalidInput("attention: every encoder position is masked");
  Var query = ad::matmul(g.param(ps, gen.W_2), s_t);
  if (emotion_embedding) query = ad::add(query, ad::matmul(g.param(ps, gen.W_3), *emotion_embedding));
  Var v = g.param(ps, gen.v);
  std::vector<Var> scores;
  scores.reserve(memory.keys.size());
  for (Var key : memory.keys) scores.push_back(ad::matmul(v, ad::tanh(ad::add(key, query))));
  Var weights = ad::masked_softmax_cols(ad::stack_rows(scores), memory.mask);
  return Attention{weights, ad::weighted_sum(memory.states, weights)};
}

DecoderState initial_decoder_state(ad::Graph& g, const ParamStore& ps, const GeneratorParams& gen,
                                   const std::vector<Var>& encoder_final) {
  if (encoder_final.size() != gen.W_init.size()) throw ShapeError("decoder and encoder layer counts differ");
  DecoderState s;
  for (std::size_t l = 0; l < encoder_final.size(); ++l)
    s.layers.push_back(ad::tanh(ad::matmul(g.param(ps, gen.W_init[l]), encoder_final[l])));
  return s;
}

DecoderStep decoder_step(ad::Graph& g, const ParamStore& ps, const GeneratorParams& gen, const DecoderState& prev,
                         Var prev_token_embedding, std::optional<Var> emotion_embedding,
                         const AttentionMemory& memory) {
  const Eigen::Index batch = g.value(prev_token_embedding).cols();
  const Eigen::Index emotion_dim = ps[gen.W_e].rows();
  Var emotion_input = emotion_embedding ? *emotion_embedding : g.constant(Mat::Zero(emotion_dim, batch));
  Var input = ad::concat_rows({prev_token_embedding, emotion_input});

  DecoderStep step;
  for (std::size_t l = 0; l < gen.decoder.layers.size(); ++l) {
    Var h = gru_step(g, ps, gen.decoder.layers[l], prev.layers[l], input);
    step.next.layers.push_back(h);
    input = h;
  }
  step.s = input;
  step.attention = emotion_biased_attention(g, ps, gen, memory, step.s, emotion_embedding);
  step.s_fused = ad::matmul(g.param(ps, gen.W_4), ad::concat_rows({step.s, step.attention.context}));
  step.next.layers.back() = step.s_fused;
  step.logits = ad::add_bias(ad::matmul(g.param(ps, gen.W_out), step.s_fused), g.param(ps, gen.b_out));
  return step;
}

DecoderTargets teacher_forcing(const std::vector<const TokenSequence*>& responses) {
  std::size_t longest = 0;
  for (const auto* r : responses) longest = std::max(longest, r->size());
  const std::size_t steps = longest + 1;
  const auto batch = static_cast<Eigen::Index>(responses.size());
  DecoderTargets d;
  d.inputs.assign(steps, std::vector<int>(responses.size(), Vocabulary::kPad));
  d.targets.assign(steps, std::vector<int>(responses.size(), Vocabulary::kPad));
  d.mask = Mat::Zero(static_cast<Eigen::Index>(steps), batch);
  for (std::size_t b = 0; b < responses.size(); ++b) {
    const auto& r = *responses[b];
    for (std::size_t t = 0; t <= r.size(); ++t) {
      d.inputs[t][b] = t == 0 ? Vocabulary::kBos : r[t - 1];
      d.targets[t][b] = t == r.size() ? Vocabulary::kEos : r[t];
      d.mask(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(b)) = 1.0;
    }
  }
  return d;
}

GeneratorTrace generator_forward(ad::Graph& g, const ParamStore& ps, const GeneratorParams& gen, Var semantic_table,
                                 const EmbeddedBatch& post_semantic, const DecoderTargets& decoder,
                                 std::optional<Var> emotion) {
  GeneratorTrace trace;
  trace.encoded = encode_sequence(g, ps, gen.encoder, post_semantic.tokens, post_semantic.mask);
  AttentionMemory memory = attention_memory(g, ps, gen, trace.encoded.states, post_semantic.mask);
  std::optional<Var> emotion_embedding;
  if (emotion) emotion_embedding = embed_emotion(g, ps, gen, *emotion);
  DecoderState state = initial_decoder_state(g, ps, gen, trace.encoded.final_states);
  for (const auto& inputs : decoder.inputs) {
    DecoderStep step = decoder_step(g, ps, gen, state, ad::lookup(semantic_table, inputs), emotion_embedding, memory);
    state = step.next;
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

Var nll_loss(ad::Graph&, const std::vector<Var>& logits, const std::vector<std::vector<int>>& targets,
             const Mat& mask) {
  if (logits.size() != targets.size() || mask.rows() != static_cast<Eigen::Index>(logits.size()))
    throw ShapeError("nll_loss: logits, targets and mask differ in length");
  const double tokens = mask.sum();
  if (tokens <= 0.0) throw InvalidInput("nll_loss: no unmasked target positions");
  Var total;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    const Eigen::RowVectorXd w = mask.row(static_cast<Eigen::Index>(t)) / tokens;
    if (static_cast<Eigen::Index>(targets[t].size()) != w.size()) throw ShapeError("nll_loss: batch mismatch");
    Var step = ad::softmax_xent(logits[t], targets[t], w);
    total = t == 0 ? step : ad::add(total, step);
  }
  return total;
}

Var nll_loss(ad::Graph& g, const GeneratorTrace& trace, const DecoderTargets& decoder) {
  std::vector<Var> logits;
  logits.reserve(trace.steps.size());
  for (const auto& s : trace.steps) logits.push_back(s.logits);
  return nll_loss(g, logits, decoder.targets, decoder.mask);
}

TokenSequence greedy_decode(const ParamStore& ps, const GeneratorParams& gen, ParamId semantic_table,
                            const TokenSequence& post, const std::optional<EmotionVector>& emotion, int max_len) {
  if (post.empty()) throw InvalidInput("greedy_decode: empty post");
  if (max_len < 1) throw InvalidInput("greedy_decode: max_len must be at least 1");
  ad::Graph g(ad::Mode::Inference);
  Var table = g.param(ps, semantic_table);
  EmbeddedBatch src;
  src.mask = Mat::Ones(static_cast<Eigen::Index>(post.size()), 1);
  for (int id : post) src.tokens.push_back(ad::lookup(table, {id}));
  EncodedSequence enc = encode_sequence(g, ps, gen.encoder, src.tokens, src.mask);
  AttentionMemory memory = attention_memory(g, ps, gen, enc.states, src.mask);
  std::optional<Var> emotion_embedding;
  if (emotion) {
    Vec e = Eigen::Map<const Vec>(emotion->data(), kNumEmotions);
    emotion_embedding = embed_emotion(g, ps, gen, g.constant(e));
  }
  DecoderState state = initial_decoder_state(g, ps, gen, enc.final_states);
  TokenSequence out;
  int prev = Vocabulary::kBos;
  for (int t = 0; t < max_len; ++t) {
    DecoderStep step = decoder_step(g, ps, gen, state, ad::lookup(table, {prev}), emotion_embedding, memory);
    const Mat& logits = g.value(step.logits);
    int best = 0;
    for (Eigen::Index i = 1; i < logits.rows(); ++i)
      if (logits(i, 0) > logits(best, 0)) best = static_cast<int>(i);
    if (best == Vocabulary::kEos) break;
    out.push_back(best);
    prev = best;
    state = step.next;
  }
  return out;
}

}  // namespace tgeacm
