#include "tgeacm/selector.hpp"

#include "tgeacm/error.hpp"

namespace tgeacm {

using ad::Var;

namespace {

AffineParams make_affine(ParamStore& ps, const std::string& prefix, int out, int in, Rng& rng) {
  return AffineParams{ps.add_uniform(prefix + ".W", out, in, kParamInitRange, rng),
                      ps.add_uniform(prefix + ".b", out, 1, kParamInitRange, rng)};
}

AffineParams bind_affine(const ParamStore& ps, const std::string& prefix) {
  return AffineParams{ps.id(prefix + ".W"), ps.id(prefix + ".b")};
}

Var affine(ad::Graph& g, const ParamStore& ps, const AffineParams& p, Var x) {
  return ad::add_bias(ad::matmul(g.param(ps, p.W), x), g.param(ps, p.b));
}

Eigen::RowVectorXd batch_mean_weights(Eigen::Index batch) {
  return Eigen::RowVectorXd::Constant(batch, 1.0 / static_cast<double>(batch));
}

}  // namespace

SelectorParams make_selector(ParamStore& ps, const SelectorDims& d, const SelectorOptions& opts, Rng& rng) {
  SelectorParams s;
  const int h = d.hidden_dim;
  s.prior_gru = make_gru_stack(ps, "selector.prior.gru", d.embed_dim, h, d.layers, rng);
  s.prior_pool = make_attn_pool(ps, "selector.prior.pool", h, d.attn_width, rng);
  s.inter_gru = make_gru_stack(ps, "selector.intermediate.gru", d.embed_dim, h, d.layers, rng);
  s.inter_pool = make_attn_pool(ps, "selector.intermediate.pool", h, d.attn_width, rng);
  s.recog_gru = make_gru_stack(ps, "selector.recognition.gru", d.embed_dim, h, d.layers, rng);
  s.recog_pool = make_attn_pool(ps, "selector.recognition.pool", h, d.attn_width, rng);
  s.prior_fusion = make_affine(ps, "selector.prior.fusion", h, 2 * h, rng);
  s.post_head = make_affine(ps, "selector.post_head", kNumEmotions, h, rng);
  s.prior_head = make_affine(ps, "selector.prior.head", kNumEmotions, h, rng);
  if (opts.share_fusion) {
    s.recog_fusion = s.prior_fusion;
    s.recog_head = s.prior_head;
  } else {
    s.recog_fusion = make_affine(ps, "selector.recognition.fusion", h, 2 * h, rng);
    s.recog_head = make_affine(ps, "selector.recognition.head", kNumEmotions, h, rng);
  }
  if (d.kl_dim <= 0) throw ConfigError("KL projection width must be positive");
  s.kl_proj = make_affine(ps, "selector.kl_proj", d.kl_dim, h, rng);
  return s;
}

SelectorParams bind_selector(const ParamStore& ps, int layers, const SelectorOptions& opts) {
  SelectorParams s;
  s.prior_gru = bind_gru_stack(ps, "selector.prior.gru", layers);
  s.prior_pool = bind_attn_pool(ps, "selector.prior.pool");
  s.inter_gru = bind_gru_stack(ps, "selector.intermediate.gru", layers);
  s.inter_pool = bind_attn_pool(ps, "selector.intermediate.pool");
  s.recog_gru = bind_gru_stack(ps, "selector.recognition.gru", layers);
  s.recog_pool = bind_attn_pool(ps, "selector.recognition.pool");
  s.prior_fusion = bind_affine(ps, "selector.prior.fusion");
  s.post_head = bind_affine(ps, "selector.post_head");
  s.prior_head = bind_affine(ps, "selector.prior.head");
  s.recog_fusion = opts.share_fusion ? s.prior_fusion : bind_affine(ps, "selector.recognition.fusion");
  s.recog_head = opts.share_fusion ? s.prior_head : bind_affine(ps, "selector.recognition.head");
  s.kl_proj = bind_affine(ps, "selector.kl_proj");
  return s;
}

EmotionPrediction predict_emotion(ad::Graph& g, const ParamStore& ps, const AffineParams& head, Var pooled) {
  Var logits = affine(g, ps, head, pooled);
  return EmotionPrediction{logits, ad::sigmoid(logits)};
}

Var emotion_loss(ad::Graph& g, const EmotionPrediction& pred, const Mat& labels, ad::EmotionXent mode) {
  const Mat& z = g.value(pred.logits);
  if (labels.rows() != kNumEmotions || labels.cols() != z.cols()) throw ShapeError("emotion_loss: label shape");
  for (Eigen::Index c = 0; c < labels.cols(); ++c) {
    EmotionVector v;
    for (int k = 0; k < kNumEmotions; ++k) v[static_cast<std::size_t>(k)] = labels(k, c);
    if (!is_label_vector(v)) throw ConfigError("emotion labels must be multi-hot with at least one positive");
  }
  return ad::sigmoid_xent(pred.logits, labels, mode, batch_mean_weights(z.cols()));
}

Fusion fuse(ad::Graph& g, const ParamStore& ps, const AffineParams& fusion, Var a, Var b) {
  const Mat& av = g.value(a);
  const Mat& bv = g.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) throw ShapeError("fuse: inputs differ in shape");
  Var gate = ad::sigmoid(affine(g, ps, fusion, ad::concat_rows({a, b})));
  Var fused = ad::add(ad::cmul(gate, ad::tanh(a)), ad::cmul(ad::one_minus(gate), ad::tanh(b)));
  return Fusion{gate, fused};
}

PriorOutput prior_forward(ad::Graph& g, const ParamStore& ps, const SelectorParams& sel,
                          const EmbeddedBatch& post_emotional, const EmbeddedBatch& post_semantic) {
  if (post_emotional.tokens.size() != post_semantic.tokens.size())
    throw ShapeError("prior_forward: emotional and semantic views differ in length");
  PriorOutput out;
  auto prior_states = encode_sequence(g, ps, sel.prior_gru, post_emotional.tokens, post_emotional.mask);
  out.prior = self_attention_pool(g, ps, sel.prior_pool, prior_states.states, post_emotional.mask);
  auto inter_states = encode_sequence(g, ps, sel.inter_gru, post_semantic.tokens, post_semantic.mask);
  out.intermediate = self_attention_pool(g, ps, sel.inter_pool, inter_states.states, post_semantic.mask);
  out.fusion = fuse(g, ps, sel.prior_fusion, out.prior.pooled, out.intermediate.pooled);
  out.post_emotion = predict_emotion(g, ps, sel.post_head, out.prior.pooled);
  out.response_emotion = predict_emotion(g, ps, sel.prior_head, out.fusion.fused);
  return out;
}

RecognitionOutput recognition_forward(ad::Graph& g, const ParamStore& ps, const SelectorParams& sel,
                                      const EmbeddedBatch& post_semantic, const EmbeddedBatch* response_semantic,
                                      const std::optional<PooledSequence>& intermediate) {
  if (response_semantic == nullptr || response_semantic->tokens.empty())
    throw InvalidInput("recognition network needs the response");
  RecognitionOutput out;
  auto recog_states = encode_sequence(g, ps, sel.recog_gru, response_semantic->tokens, response_semantic->mask);
  out.recognition = self_attention_pool(g, ps, sel.recog_pool, recog_states.states, response_semantic->mask);
  if (intermediate) {
    out.intermediate = *intermediate;
  } else {
    auto inter_states = encode_sequence(g, ps, sel.inter_gru, post_semantic.tokens, post_semantic.mask);
    out.intermediate = self_attention_pool(g, ps, sel.inter_pool, inter_states.states, post_semantic.mask);
  }
  out.fusion = fuse(g, ps, sel.recog_fusion, out.recognition.pooled, out.intermediate.pooled);
  out.response_emotion = predict_emotion(g, ps, sel.recog_head, out.fusion.fused);
  return out;
}

Var kl_hidden(ad::Graph& g, const ParamStore& ps, const AffineParams& kl_proj, Var h_pe, Var h_re,
              const SelectorOptions& opts) {
  Var prior = affine(g, ps, kl_proj, h_pe);
  Var recog = affine(g, ps, kl_proj, h_re);
  const auto w = batch_mean_weights(g.value(h_pe).cols());
  if (opts.kl_direction == KlDirection::PriorToRecognition) return ad::bernoulli_kl(prior, recog, w, opts.kl_stop_grad);
  // Reverse order; the stop-gradient still applies to the recognition side.
  if (opts.kl_stop_grad) {
    Var frozen = g.constant(g.value(recog));
    return ad::bernoulli_kl(frozen, prior, w);
  }
  return ad::bernoulli_kl(recog, prior, w);
}

SelectorLosses selector_loss(ad::Graph& g, const ParamStore& ps, const SelectorParams& sel,
                             const SelectorOptions& opts, const PriorOutput& prior, const RecognitionOutput& recog,
                             const Mat& post_labels, const Mat& response_labels) {
  SelectorLosses l;
  l.post = emotion_loss(g, prior.post_emotion, post_labels, opts.xent);
  l.prior = emotion_loss(g, prior.response_emotion, response_labels, opts.xent);
  l.recognition = emotion_loss(g, recog.response_emotion, response_labels, opts.xent);
  l.kl = kl_hidden(g, ps, sel.kl_proj, prior.fusion.fused, recog.fusion.fused, opts);
  l.total = ad::add(ad::add(l.post, l.prior), ad::add(l.recognition, l.kl));
  return l;
}

}  // namespace tgeacm
