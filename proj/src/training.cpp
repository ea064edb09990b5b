#include "tgeacm/training.hpp"

#include <cmath>
#include <numeric>

#include "json.hpp"
#include "tgeacm/error.hpp"
#include "tgeacm/evaluation.hpp"
#include "tgeacm/reference.hpp"

namespace tgeacm {

using ad::Var;

void validate(const TrainConfig& c) {
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (c.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (c.max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (!std::isfinite(c.clip_norm)) throw ConfigError("clip_norm must be finite");
  if (c.pretrain_steps < 0) throw ConfigError("pretrain_steps must be non-negative");
  if (c.log_every < 1) throw ConfigError("log_every must be at least 1");
  if (c.eval_every < 0) throw ConfigError("eval_every must be non-negative");
  if (c.checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  if (c.validation_size < 0) throw ConfigError("validation_size must be non-negative");
  if (c.max_len < 1) throw ConfigError("max_len must be at least 1");
  if (c.max_vocab < Vocabulary::kReserved + 1) throw ConfigError("max_vocab too small");
}

namespace {

struct BatchViews {
  Var semantic;
  EmbeddedBatch post_semantic;
  EmbeddedBatch post_emotional;
  EmbeddedBatch response_semantic;
};

BatchViews embed_batch(ad::Graph& g, const Model& m, const Batch& b) {
  BatchViews v;
  v.semantic = g.param(m.params, m.semantic_table);
  Var emotional = g.param(m.params, m.emotional_table);
  v.post_semantic = embed_tokens(g, v.semantic, b.post_ids, b.post_mask);
  v.post_emotional = embed_tokens(g, emotional, b.post_ids, b.post_mask);
  v.response_semantic = embed_tokens(g, v.semantic, b.response_ids, b.response_mask);
  return v;
}

double scalar(const ad::Graph& g, Var v) { return g.value(v)(0, 0); }

EmotionVector column(const Mat& m, Eigen::Index c) {
  EmotionVector e{};
  for (int k = 0; k < kNumEmotions; ++k) e[static_cast<std::size_t>(k)] = m(k, c);
  return e;
}

}  // namespace

LossGraph build_loss(ad::Graph& g, const Model& m, const Batch& b, double alpha, EmotionFeed feed) {
  BatchViews v = embed_batch(g, m, b);
  LossGraph l;
  l.prior = prior_forward(g, m.params, m.selector, v.post_emotional, v.post_semantic);
  l.recognition =
      recognition_forward(g, m.params, m.selector, v.post_semantic, &v.response_semantic, l.prior.intermediate);
  l.selector = selector_loss(g, m.params, m.selector, m.config.selector, l.prior, l.recognition, b.post_labels,
                             b.response_labels);
  l.emotion = l.selector.total;
  Var emotion =
      feed == EmotionFeed::Recognition ? l.recognition.response_emotion.probs : l.prior.response_emotion.probs;
  GeneratorTrace trace = generator_forward(g, m.params, m.generator, v.semantic, v.post_semantic, b.decoder, emotion);
  l.nll = nll_loss(g, trace, b.decoder);
  l.total = ad::add(ad::scale(l.emotion, alpha), ad::scale(l.nll, 1.0 - alpha));
  return l;
}

LossBreakdown read_losses(const ad::Graph& g, const LossGraph& l) {
  LossBreakdown r;
  r.total = scalar(g, l.total);
  r.post = scalar(g, l.selector.post);
  r.prior = scalar(g, l.selector.prior);
  r.recognition = scalar(g, l.selector.recognition);
  r.kl = scalar(g, l.selector.kl);
  r.nll = scalar(g, l.nll);
  return r;
}

LossBreakdown total_loss(const Model& m, const Batch& b, double alpha) {
  ad::Graph g(ad::Mode::Inference);
  return read_losses(g, build_loss(g, m, b, alpha));
}

LossBreakdown loss_and_gradients(const Model& m, const Batch& b, double alpha, Gradients& grads) {
  grads.zero();
  ad::Graph g(ad::Mode::Record);
  LossGraph l = build_loss(g, m, b, alpha);
  g.backward(l.total, grads);
  return read_losses(g, l);
}

double sgd_step(ParamStore& params, Gradients& grads, double learning_rate, double clip_norm) {
  if (grads.size() != params.size()) throw IntegrityError("gradients and parameters differ in tensor count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params.tensor(i);
    if (grads.name(i) != p.name) throw IntegrityError("gradient '" + grads.name(i) + "' paired with '" + p.name + "'");
    if (grads.at(i).rows() != p.value.rows() || grads.at(i).cols() != p.value.cols())
      throw IntegrityError("gradient shape mismatch for '" + p.name + "'");
  }
  const double norm = grads.global_norm();
  if (clip_norm > 0.0 && norm > clip_norm) grads.scale(clip_norm / norm);
  for (std::size_t i = 0; i < params.size(); ++i) params.tensor(i).value -= learning_rate * grads.at(i);
  return norm;
}

double seq2seq_nll(const Model& m, const Batch& b, Gradients* grads) {
  ad::Graph g(grads ? ad::Mode::Record : ad::Mode::Inference);
  Var semantic = g.param(m.params, m.semantic_table);
  EmbeddedBatch post = embed_tokens(g, semantic, b.post_ids, b.post_mask);
  GeneratorTrace trace = generator_forward(g, m.params, m.generator, semantic, post, b.decoder, std::nullopt);
  Var nll = nll_loss(g, trace, b.decoder);
  if (grads) {
    grads->zero();
    g.backward(nll, *grads);
  }
  return scalar(g, nll);
}

namespace {

// Endless seeded walk over shuffled epochs.
class BatchStream {
 public:
  BatchStream(const std::vector<ConversationPair>& pairs, Rng& rng) : pairs_(pairs), rng_(rng) {
    order_.resize(pairs.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(order_);
  }

  std::vector<const ConversationPair*> next(int batch_size) {
    std::vector<const ConversationPair*> out;
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(batch_size), pairs_.size());
    while (out.size() < n) {
      if (cursor_ == order_.size()) {
        rng_.shuffle(order_);
        cursor_ = 0;
      }
      out.push_back(&pairs_[order_[cursor_++]]);
    }
    return out;
  }

 private:
  const std::vector<ConversationPair>& pairs_;
  Rng& rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

void check_finite(int step, const LossBreakdown& l, double grad_norm) {
  if (std::isfinite(l.total) && std::isfinite(grad_norm)) return;
  throw DivergenceError("non-finite values at step " + std::to_string(step) + ": L_total=" + std::to_string(l.total) +
                        " L_p=" + std::to_string(l.post) + " L_r=" + std::to_string(l.prior) +
                        " L_r'=" + std::to_string(l.recognition) + " L_KL=" + std::to_string(l.kl) +
                        " L_NLL=" + std::to_string(l.nll) + " |g|=" + std::to_string(grad_norm));
}

}  // namespace

std::vector<double> pretrain_seq2seq(Model& model, const std::vector<ConversationPair>& pairs,
                                     const TrainConfig& config) {
  validate(config);
  if (pairs.empty()) throw ConfigError("pre-training corpus is empty");
  model.params.mut(model.generator.W_3).setZero();
  Rng rng = Rng::derive(config.seed, "pretrain.shuffle");
  BatchStream stream(pairs, rng);
  Gradients grads(model.params);
  std::vector<double> history;
  for (int step = 1; step <= config.pretrain_steps; ++step) {
    Batch b = make_batch(stream.next(config.batch_size));
    LossBreakdown l;
    l.nll = l.total = seq2seq_nll(model, b, &grads);
    check_finite(step, l, grads.global_norm());
    sgd_step(model.params, grads, config.learning_rate, config.clip_norm);
    model.params.round_to_float();
    history.push_back(l.nll);
  }
  return history;
}

void warm_start(Model& model, const Model& pretrained) {
  if (model.vocab.tokens() != pretrained.vocab.tokens())
    throw IntegrityError("warm start: vocabularies differ");
  for (std::size_t i = 0; i < pretrained.params.size(); ++i) {
    const auto& t = pretrained.params.tensor(i);
    if (t.name.rfind("generator.", 0) != 0 && t.name != kSemanticTableName) continue;
    if (!model.params.contains(t.name)) throw IntegrityError("warm start: no tensor '" + t.name + "' in target");
    Mat& dst = model.params.mut(model.params.id(t.name));
    if (dst.rows() != t.value.rows() || dst.cols() != t.value.cols())
      throw IntegrityError("warm start: shape mismatch for '" + t.name + "'");
    dst = t.value;
  }
  model.params.mut(model.generator.W_3).setZero();
}

SelectorEval evaluate_selector(const Model& m, const std::vector<ConversationPair>& pairs, int batch_size) {
  if (pairs.empty()) throw UndefinedMetric("selector evaluation over zero pairs");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  SelectorEval ev;
  double kl_sum = 0.0;
  for (std::size_t start = 0; start < pairs.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<const ConversationPair*> chunk;
    for (std::size_t i = start; i < std::min(pairs.size(), start + static_cast<std::size_t>(batch_size)); ++i)
      chunk.push_back(&pairs[i]);
    Batch b = make_batch(chunk);
    ad::Graph g(ad::Mode::Inference);
    BatchViews v = embed_batch(g, m, b);
    PriorOutput prior = prior_forward(g, m.params, m.selector, v.post_emotional, v.post_semantic);
    RecognitionOutput recog =
        recognition_forward(g, m.params, m.selector, v.post_semantic, &v.response_semantic, prior.intermediate);
    kl_sum += scalar(g, kl_hidden(g, m.params, m.selector.kl_proj, prior.fusion.fused, recog.fusion.fused,
                                  m.config.selector)) *
              static_cast<double>(chunk.size());
    const Mat& ep = g.value(prior.response_emotion.probs);
    const Mat& er = g.value(recog.response_emotion.probs);
    for (Eigen::Index c = 0; c < ep.cols(); ++c) {
      ev.prior.push_back(column(ep, c));
      ev.recognition.push_back(column(er, c));
      ev.gold.push_back(column(b.response_labels, c));
    }
  }
  ev.acc_prior = emotion_accuracy(ev.prior, ev.gold);
  ev.acc_recognition = emotion_accuracy(ev.recognition, ev.gold);
  ev.kl = kl_sum / static_cast<double>(pairs.size());
  return ev;
}

double prior_posterior_distance(const SelectorEval& ev) {
  const auto n = static_cast<Eigen::Index>(ev.prior.size());
  if (n == 0 || ev.recognition.size() != ev.prior.size()) throw InvalidInput("unmatched prior/posterior samples");
  Mat data(2 * n, kNumEmotions);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < kNumEmotions; ++k) {
      data(i, k) = ev.prior[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      data(n + i, k) = ev.recognition[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
  const PcaProjection pca = pca_project(data, 2);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) total += (pca.coords.row(i) - pca.coords.row(n + i)).norm();
  return total / static_cast<double>(n);
}

std::string to_json_line(const MetricRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["L_total"] = r.loss.total;
  j["L_p"] = r.loss.post;
  j["L_r"] = r.loss.prior;
  j["L_r'"] = r.loss.recognition;
  j["L_KL"] = r.loss.kl;
  j["L_NLL"] = r.loss.nll;
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  j["acc_prior"] = opt(r.acc_prior);
  j["acc_recognition"] = opt(r.acc_recognition);
  j["val_KL"] = opt(r.val_kl);
  return j.dump();
}

SplitIndices split_indices(std::size_t n, int validation_size, std::uint64_t seed) {
  if (validation_size < 0) throw ConfigError("validation_size must be non-negative");
  SplitIndices s;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (validation_size == 0) {
    s.train = order;
    return s;
  }
  if (static_cast<std::size_t>(validation_size) >= n)
    throw ConfigError("validation_size " + std::to_string(validation_size) + " leaves no training pairs out of " +
                      std::to_string(n));
  Rng rng = Rng::derive(seed, "split");
  rng.shuffle(order);
  const std::size_t cut = n - static_cast<std::size_t>(validation_size);
  s.train.assign(order.begin(), order.begin() + static_cast<long>(cut));
  s.validation.assign(order.begin() + static_cast<long>(cut), order.end());
  return s;
}

DataSplit split_validation(const std::vector<ConversationPair>& pairs, int validation_size, std::uint64_t seed) {
  const SplitIndices idx = split_indices(pairs.size(), validation_size, seed);
  DataSplit s;
  for (std::size_t i : idx.train) s.train.push_back(pairs[i]);
  for (std::size_t i : idx.validation) s.validation.push_back(pairs[i]);
  return s;
}

TrainResult train(Model& model, const std::vector<ConversationPair>& pairs,
                  const std::vector<ConversationPair>& validation, const TrainConfig& config,
                  const CheckpointSink& on_checkpoint, const MetricSink& on_record) {
  validate(config);
  if (pairs.empty()) throw ConfigError("training corpus is empty");
  const auto& eval_pairs = validation.empty() ? pairs : validation;
  Rng rng = Rng::derive(config.seed, "shuffle");
  BatchStream stream(pairs, rng);
  Gradients grads(model.params);
  TrainResult result;
  if (on_checkpoint) on_checkpoint(model, 0, rng);

  for (int step = 1; step <= config.max_steps; ++step) {
    Batch b = make_batch(stream.next(config.batch_size));
    const LossBreakdown l = loss_and_gradients(model, b, config.alpha, grads);
    check_finite(step, l, grads.global_norm());
    sgd_step(model.params, grads, config.learning_rate, config.clip_norm);
    model.params.round_to_float();
    result.steps = step;

    const bool eval = config.eval_every > 0 && step % config.eval_every == 0;
    if (eval || step % config.log_every == 0 || step == config.max_steps) {
      MetricRecord rec;
      rec.step = step;
      rec.loss = l;
      if (eval) {
        const SelectorEval ev = evaluate_selector(model, eval_pairs, std::max(config.batch_size, 64));
        rec.acc_prior = ev.acc_prior;
        rec.acc_recognition = ev.acc_recognition;
        rec.val_kl = ev.kl;
      }
      result.records.push_back(rec);
      if (on_record) on_record(rec);
    }
    const bool periodic = config.checkpoint_every > 0 && step % config.checkpoint_every == 0;
    if (on_checkpoint && (periodic || step == config.max_steps)) on_checkpoint(model, step, rng);
  }
  return result;
}

GradCheckReport gradient_check(ParamStore& params, const Gradients& analytic,
                               const std::function<double(const ParamStore&)>& loss, double eps) {
  if (analytic.size() != params.size()) throw IntegrityError("gradient check: gradient buffer mismatch");
  GradCheckReport rep;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& value = params.tensor(i).value;
    const Mat& ga_all = analytic.at(i);
    for (Eigen::Index c = 0; c < value.cols(); ++c)
      for (Eigen::Index r = 0; r < value.rows(); ++r) {
        const double saved = value(r, c);
        value(r, c) = saved + eps;
        const double up = loss(params);
        value(r, c) = saved - eps;
        const double down = loss(params);
        value(r, c) = saved;
        const double gn = (up - down) / (2.0 * eps);
        const double ga = ga_all(r, c);
        if (!std::isfinite(gn) || !std::isfinite(ga))
          throw DivergenceError("gradient check: non-finite value in '" + params.tensor(i).name + "'");
        const double err = std::abs(ga - gn) / std::max({std::abs(ga), std::abs(gn), 1e-8});
        ++rep.checked;
        if (err > rep.max_rel_error || rep.checked == 1) {
          rep.max_rel_error = err;
          rep.worst_param = params.tensor(i).name;
          rep.worst_index = static_cast<std::size_t>(c * value.rows() + r);
          rep.analytic = ga;
          rep.numeric = gn;
        }
      }
  }
  return rep;
}

std::vector<GradCheckReport> gradient_check(Model& model, const Batch& batch, const std::vector<double>& alphas,
                                            double eps) {
  std::vector<Gradients> analytic;
  for (double a : alphas) {
    analytic.emplace_back(model.params);
    loss_and_gradients(model, batch, a, analytic.back());
  }
  auto parts = [&]() {
    const ReferenceLosses l = reference_losses(model, batch);
    return std::pair{l.emotion(), l.nll};
  };

  // Embedding rows of tokens absent from the batch cannot influence the loss;
  // they are counted but not perturbed.
  std::vector<bool> present(static_cast<std::size_t>(model.vocab.size()), false);
  for (const auto* ids : {&batch.post_ids, &batch.response_ids, &batch.decoder.inputs})
    for (const auto& step : *ids)
      for (int id : step) present[static_cast<std::size_t>(id)] = true;
  auto unused_row = [&](std::size_t tensor, Eigen::Index row) {
    const bool table = tensor == model.semantic_table.index || tensor == model.emotional_table.index;
    return table && !present[static_cast<std::size_t>(row)];
  };

  std::vector<GradCheckReport> reports(alphas.size());
  for (auto& r : reports) r.checked = 0;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    Mat& value = model.params.tensor(i).value;
    for (Eigen::Index c = 0; c < value.cols(); ++c)
      for (Eigen::Index r = 0; r < value.rows(); ++r) {
        const double saved = value(r, c);
        if (unused_row(i, r)) {
          for (auto& rep : reports) ++rep.checked;
          continue;
        }
        value(r, c) = saved + eps;
        const auto up = parts();
        value(r, c) = saved - eps;
        const auto down = parts();
        value(r, c) = saved;
        for (std::size_t k = 0; k < alphas.size(); ++k) {
          const double a = alphas[k];
          const double gn = static_cast<double>(
              (a * (up.first - down.first) + (1.0 - a) * (up.second - down.second)) / (2.0L * eps));
          const double ga = analytic[k].at(i)(r, c);
          if (!std::isfinite(gn) || !std::isfinite(ga))
            throw DivergenceError("gradient check: non-finite value in '" + model.params.tensor(i).name + "'");
          const double err = std::abs(ga - gn) / std::max({std::abs(ga), std::abs(gn), 1e-8});
          GradCheckReport& rep = reports[k];
          ++rep.checked;
          if (err > rep.max_rel_error || rep.checked == 1) {
            rep.max_rel_error = err;
            rep.worst_param = model.params.tensor(i).name;
            rep.worst_index = static_cast<std::size_t>(c * value.rows() + r);
            rep.analytic = ga;
            rep.numeric = gn;
          }
        }
      }
  }
  return reports;
}

}  // namespace tgeacm
