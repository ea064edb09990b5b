#include <cmath>

#include "doctest.h"
#include "tgeacm/error.hpp"
#include "tgeacm/model.hpp"

using namespace tgeacm;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill_random(ParamStore& ps, Rng& rng, double range) {
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (Eigen::Index k = 0; k < ps.tensor(i).value.size(); ++k)
      ps.tensor(i).value.data()[k] = rng.uniform(-range, range);
}

void zero_selector(Model& m) {
  for (std::size_t i = 0; i < m.params.size(); ++i)
    if (m.params.tensor(i).name.rfind("selector.", 0) == 0) m.params.tensor(i).value.setZero();
}

Vocabulary small_vocab() {
  std::vector<std::string> toks;
  for (int i = 0; i < 12; ++i) toks.push_back("w" + std::to_string(i));
  return Vocabulary(toks);
}

Model tiny_model(std::uint64_t seed, SelectorOptions opts = {}) {
  ModelConfig c = model_preset("tiny");
  c.selector = opts;
  return Model::create(c, small_vocab(), seed);
}

struct Views {
  EmbeddedBatch post_sem, post_emo, resp_sem;
};

Views embed(ad::Graph& g, const Model& m, const Batch& b) {
  Views v;
  v.post_sem = embed_tokens(g, g.param(m.params, m.semantic_table), b.post_ids, b.post_mask);
  v.post_emo = embed_tokens(g, g.param(m.params, m.emotional_table), b.post_ids, b.post_mask);
  v.resp_sem = embed_tokens(g, g.param(m.params, m.semantic_table), b.response_ids, b.response_mask);
  return v;
}

ConversationPair make_pair(TokenSequence post, TokenSequence resp, int pe, int re) {
  ConversationPair p;
  p.post = std::move(post);
  p.response = std::move(resp);
  p.post_emotion[static_cast<std::size_t>(pe)] = 1;
  p.response_emotion[static_cast<std::size_t>(re)] = 1;
  return p;
}

std::vector<ConversationPair> random_pairs(Rng& rng, int n) {
  std::vector<ConversationPair> out;
  for (int i = 0; i < n; ++i) {
    TokenSequence post, resp;
    const int lp = 1 + static_cast<int>(rng.below(5)), lr = 1 + static_cast<int>(rng.below(5));
    for (int t = 0; t < lp; ++t) post.push_back(4 + static_cast<int>(rng.below(12)));
    for (int t = 0; t < lr; ++t) resp.push_back(4 + static_cast<int>(rng.below(12)));
    auto p = make_pair(post, resp, static_cast<int>(rng.below(6)), static_cast<int>(rng.below(6)));
    if (rng.uniform() < 0.3) p.response_emotion[rng.below(6)] = 1;
    out.push_back(p);
  }
  return out;
}

// Scalar re-implementations used by the composition oracle.
Vec gru_scalar(const ParamStore& ps, const GruLayer& l, const Vec& h, const Vec& x) {
  const int n = l.hidden_dim;
  Vec z(n), r(n), out(n);
  for (int i = 0; i < n; ++i) {
    double sz = ps[l.b_z](i, 0), sr = ps[l.b_r](i, 0);
    for (int j = 0; j < x.size(); ++j) sz += ps[l.W_z](i, j) * x(j), sr += ps[l.W_r](i, j) * x(j);
    for (int j = 0; j < n; ++j) sz += ps[l.U_z](i, j) * h(j), sr += ps[l.U_r](i, j) * h(j);
    z(i) = sig(sz);
    r(i) = sig(sr);
  }
  for (int i = 0; i < n; ++i) {
    double sc = ps[l.b_h](i, 0);
    for (int j = 0; j < x.size(); ++j) sc += ps[l.W_h](i, j) * x(j);
    for (int j = 0; j < n; ++j) sc += ps[l.U_h](i, j) * r(j) * h(j);
    out(i) = (1 - z(i)) * h(i) + z(i) * std::tanh(sc);
  }
  return out;
}

Vec encode_pool_scalar(const ParamStore& ps, const GruStack& stack, const AttnPool& pool, const Mat& table,
                       const TokenSequence& ids) {
  std::vector<Vec> h(stack.layers.size(), Vec::Zero(stack.hidden_dim()));
  std::vector<Vec> top;
  for (int id : ids) {
    Vec x = table.row(id).transpose();
    for (std::size_t l = 0; l < stack.layers.size(); ++l) {
      h[l] = gru_scalar(ps, stack.layers[l], h[l], x);
      x = h[l];
    }
    top.push_back(x);
  }
  std::vector<double> s;
  for (const auto& t : top) {
    double acc = 0;
    for (int a = 0; a < ps[pool.W].rows(); ++a) {
      double u = 0;
      for (int j = 0; j < t.size(); ++j) u += ps[pool.W](a, j) * t(j);
      acc += ps[pool.v](0, a) * std::tanh(u);
    }
    s.push_back(acc);
  }
  double mx = *std::max_element(s.begin(), s.end()), z = 0;
  for (double v : s) z += std::exp(v - mx);
  Vec pooled = Vec::Zero(stack.hidden_dim());
  for (std::size_t t = 0; t < top.size(); ++t) pooled += std::exp(s[t] - mx) / z * top[t];
  return pooled;
}

Vec fuse_scalar(const ParamStore& ps, const AffineParams& f, const Vec& a, const Vec& b) {
  const int n = static_cast<int>(a.size());
  Vec out(n);
  for (int i = 0; i < n; ++i) {
    double s = ps[f.b](i, 0);
    for (int j = 0; j < n; ++j) s += ps[f.W](i, j) * a(j) + ps[f.W](i, n + j) * b(j);
    const double w = sig(s);
    out(i) = w * std::tanh(a(i)) + (1 - w) * std::tanh(b(i));
  }
  return out;
}

Vec head_scalar(const ParamStore& ps, const AffineParams& h, const Vec& x) {
  Vec out(kNumEmotions);
  for (int k = 0; k < kNumEmotions; ++k) {
    double s = ps[h.b](k, 0);
    for (int j = 0; j < x.size(); ++j) s += ps[h.W](k, j) * x(j);
    out(k) = sig(s);
  }
  return out;
}

}  // namespace

TEST_CASE("zero head gives 0.5 predictions and ln 2 per positive") {
  ParamStore ps;
  Rng rng(1);
  AffineParams head{ps.add_zero("h.W", kNumEmotions, 3), ps.add_zero("h.b", kNumEmotions, 1)};
  ad::Graph g;
  const auto pred = predict_emotion(g, ps, head, g.constant(Mat::Random(3, 1)));
  CHECK(g.value(pred.probs).isApproxToConstant(0.5, 0));

  Mat one = Mat::Zero(kNumEmotions, 1);
  one(2, 0) = 1;
  CHECK(g.value(emotion_loss(g, pred, one, ad::EmotionXent::PositiveTerm))(0, 0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
  Mat two = one;
  two(4, 0) = 1;
  CHECK(g.value(emotion_loss(g, pred, two, ad::EmotionXent::PositiveTerm))(0, 0) ==
        doctest::Approx(2 * std::log(2.0)).epsilon(1e-14));
  CHECK(g.value(emotion_loss(g, pred, one, ad::EmotionXent::Binary))(0, 0) ==
        doctest::Approx(kNumEmotions * std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(emotion_loss(g, pred, Mat::Zero(kNumEmotions, 1), ad::EmotionXent::Binary), ConfigError);
}

TEST_CASE("emotion loss matches a scalar-loop oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    ParamStore ps;
    AffineParams head{ps.add_uniform("h.W", kNumEmotions, 5, 1.0, rng), ps.add_uniform("h.b", kNumEmotions, 1, 1.0, rng)};
    Mat x(5, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-2, 2);
    Mat labels = Mat::Zero(kNumEmotions, 3);
    for (int c = 0; c < 3; ++c) {
      labels(static_cast<Eigen::Index>(rng.below(6)), c) = 1;
      if (rng.uniform() < 0.5) labels(static_cast<Eigen::Index>(rng.below(6)), c) = 1;
    }
    for (auto mode : {ad::EmotionXent::PositiveTerm, ad::EmotionXent::Binary}) {
      ad::Graph g;
      const auto pred = predict_emotion(g, ps, head, g.constant(x));
      const double got = g.value(emotion_loss(g, pred, labels, mode))(0, 0);
      double want = 0;
      for (int c = 0; c < 3; ++c)
        for (int k = 0; k < kNumEmotions; ++k) {
          double z = ps[head.b](k, 0);
          for (int j = 0; j < 5; ++j) z += ps[head.W](k, j) * x(j, c);
          const double p = sig(z);
          CHECK(g.value(pred.probs)(k, c) > 0.0);
          CHECK(g.value(pred.probs)(k, c) < 1.0);
          want -= labels(k, c) * std::log(p);
          if (mode == ad::EmotionXent::Binary) want -= (1 - labels(k, c)) * std::log(1 - p);
        }
      CHECK(got == doctest::Approx(want / 3).epsilon(1e-12));
      CHECK(got >= 0.0);
    }
  }
}

TEST_CASE("emotion loss shrinks monotonically as predictions approach the labels") {
  Mat labels = Mat::Zero(kNumEmotions, 1);
  labels(1, 0) = labels(3, 0) = 1;
  ParamStore ps;
  AffineParams head{ps.add("h.W", Mat::Identity(kNumEmotions, kNumEmotions)), ps.add_zero("h.b", kNumEmotions, 1)};
  for (auto mode : {ad::EmotionXent::PositiveTerm, ad::EmotionXent::Binary}) {
    double prev = std::numeric_limits<double>::infinity();
    for (double margin = 0.0; margin <= 12.0; margin += 0.5) {
      const Mat z = (2 * labels.array() - 1) * margin;
      ad::Graph g;
      const double l = g.value(emotion_loss(g, predict_emotion(g, ps, head, g.constant(z)), labels, mode))(0, 0);
      CHECK(l < prev);
      prev = l;
    }
    CHECK(prev < 1e-4);
  }
}

TEST_CASE("positive-term cross-entropy ignores the negative classes") {
  // Only the gold classes carry a gradient, so this form alone cannot push
  // the other probabilities down; the binary form can.
  ParamStore ps;
  AffineParams head{ps.add("h.W", Mat::Identity(kNumEmotions, kNumEmotions)), ps.add_zero("h.b", kNumEmotions, 1)};
  Mat labels = Mat::Zero(kNumEmotions, 1);
  labels(2, 0) = 1;
  Mat z(kNumEmotions, 1);
  z << 0.3, -0.1, 0.2, 0.9, -0.4, 0.0;
  for (auto mode : {ad::EmotionXent::PositiveTerm, ad::EmotionXent::Binary}) {
    ad::Graph g;
    Gradients grads(ps);
    auto pred = predict_emotion(g, ps, head, g.constant(z));
    g.backward(emotion_loss(g, pred, labels, mode), grads);
    const Mat& gb = grads[head.b];
    for (int k = 0; k < kNumEmotions; ++k) {
      if (k == 2) CHECK(gb(k, 0) < 0);
      else if (mode == ad::EmotionXent::PositiveTerm) CHECK(gb(k, 0) == 0.0);
      else CHECK(gb(k, 0) > 0);
    }
  }
}

TEST_CASE("fusion gate") {
  ParamStore ps;
  AffineParams f{ps.add_zero("f.W", 4, 8), ps.add_zero("f.b", 4, 1)};
  Rng rng(3);
  Mat a(4, 2), b(4, 2);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(-2, 2), b.data()[i] = rng.uniform(-2, 2);

  SUBCASE("zero gate parameters average the two tanh vectors") {
    ad::Graph g;
    const Fusion fu = fuse(g, ps, f, g.constant(a), g.constant(b));
    CHECK(g.value(fu.gate).isApproxToConstant(0.5, 0));
    const Mat want = 0.5 * (a.array().tanh() + b.array().tanh());
    CHECK((g.value(fu.fused) - want).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("equal inputs give tanh(a) for any gate") {
    fill_random(ps, rng, 3.0);
    ad::Graph g;
    const Fusion fu = fuse(g, ps, f, g.constant(a), g.constant(a));
    CHECK((g.value(fu.fused) - Mat(a.array().tanh())).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("random inputs match the elementwise oracle and stay in the envelope") {
    for (int trial = 0; trial < 20; ++trial) {
      fill_random(ps, rng, 1.0);
      ad::Graph g;
      const Fusion fu = fuse(g, ps, f, g.constant(a), g.constant(b));
      for (int c = 0; c < 2; ++c) {
        const Vec want = fuse_scalar(ps, f, a.col(c), b.col(c));
        for (int i = 0; i < 4; ++i) {
          const double v = g.value(fu.fused)(i, c);
          CHECK(v == doctest::Approx(want(i)).epsilon(1e-12));
          const double lo = std::min(std::tanh(a(i, c)), std::tanh(b(i, c)));
          const double hi = std::max(std::tanh(a(i, c)), std::tanh(b(i, c)));
          CHECK(v >= lo - 1e-15);
          CHECK(v <= hi + 1e-15);
        }
      }
    }
  }
}

TEST_CASE("zero selector predicts 0.5 on both paths") {
  Model m = tiny_model(1);
  zero_selector(m);
  Rng rng(5);
  const Batch b = make_batch(random_pairs(rng, 3));
  ad::Graph g;
  const Views v = embed(g, m, b);
  const PriorOutput p = prior_forward(g, m.params, m.selector, v.post_emo, v.post_sem);
  const RecognitionOutput r = recognition_forward(g, m.params, m.selector, v.post_sem, &v.resp_sem);
  CHECK(g.value(p.response_emotion.probs).isApproxToConstant(0.5, 0));
  CHECK(g.value(p.post_emotion.probs).isApproxToConstant(0.5, 0));
  CHECK(g.value(r.response_emotion.probs).isApproxToConstant(0.5, 0));
}

TEST_CASE("prior and recognition forward are deterministic and match a composition oracle") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Model m = tiny_model(seed);
    Rng rng(seed + 10);
    fill_random(m.params, rng, 0.5);
    const auto pairs = random_pairs(rng, 4);
    const Batch b = make_batch(pairs);
    ad::Graph g1, g2;
    const Views v1 = embed(g1, m, b);
    const Views v2 = embed(g2, m, b);
    const PriorOutput p1 = prior_forward(g1, m.params, m.selector, v1.post_emo, v1.post_sem);
    const PriorOutput p2 = prior_forward(g2, m.params, m.selector, v2.post_emo, v2.post_sem);
    CHECK(g1.value(p1.response_emotion.probs) == g2.value(p2.response_emotion.probs));
    const RecognitionOutput r1 = recognition_forward(g1, m.params, m.selector, v1.post_sem, &v1.resp_sem);

    const auto& s = m.selector;
    const Mat& sem = m.params[m.semantic_table];
    const Mat& emo = m.params[m.emotional_table];
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Vec hp = encode_pool_scalar(m.params, s.prior_gru, s.prior_pool, emo, pairs[i].post);
      const Vec he = encode_pool_scalar(m.params, s.inter_gru, s.inter_pool, sem, pairs[i].post);
      const Vec hr = encode_pool_scalar(m.params, s.recog_gru, s.recog_pool, sem, pairs[i].response);
      const Vec er = head_scalar(m.params, s.prior_head, fuse_scalar(m.params, s.prior_fusion, hp, he));
      const Vec ep = head_scalar(m.params, s.post_head, hp);
      const Vec err = head_scalar(m.params, s.recog_head, fuse_scalar(m.params, s.recog_fusion, hr, he));
      const auto c = static_cast<Eigen::Index>(i);
      for (int k = 0; k < kNumEmotions; ++k) {
        CHECK(g1.value(p1.response_emotion.probs)(k, c) == doctest::Approx(er(k)).epsilon(1e-12));
        CHECK(g1.value(p1.post_emotion.probs)(k, c) == doctest::Approx(ep(k)).epsilon(1e-12));
        CHECK(g1.value(r1.response_emotion.probs)(k, c) == doctest::Approx(err(k)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("recognition path fuses two encoders even when post equals response") {
  Model m = tiny_model(2);
  Rng rng(6);
  fill_random(m.params, rng, 0.5);
  const TokenSequence same{4, 5, 6};
  const Batch b = make_batch(std::vector<ConversationPair>{make_pair(same, same, 0, 0)});
  auto h_re = [&](const Model& model) {
    ad::Graph g;
    const Views v = embed(g, model, b);
    return Mat(g.value(recognition_forward(g, model.params, model.selector, v.post_sem, &v.resp_sem).fusion.fused));
  };
  const Mat base = h_re(m);
  Model poked = m;
  poked.params.mut(poked.selector.recog_gru.layers[0].b_h).array() += 0.3;
  CHECK((h_re(poked) - base).norm() > 1e-6);
  Model poked2 = m;
  poked2.params.mut(poked2.selector.inter_gru.layers[0].b_h).array() += 0.3;
  CHECK((h_re(poked2) - base).norm() > 1e-6);

  ad::Graph g;
  const Views v = embed(g, m, b);
  CHECK_THROWS_AS(recognition_forward(g, m.params, m.selector, v.post_sem, nullptr), InvalidInput);
}

TEST_CASE("the intermediate encoder is shared by both paths") {
  Model m = tiny_model(3);
  Rng rng(7);
  const Batch b = make_batch(random_pairs(rng, 3));
  auto states = [&](const Model& model) {
    ad::Graph g;
    const Views v = embed(g, model, b);
    const auto p = prior_forward(g, model.params, model.selector, v.post_emo, v.post_sem);
    const auto r = recognition_forward(g, model.params, model.selector, v.post_sem, &v.resp_sem);
    return std::pair<Mat, Mat>{g.value(p.fusion.fused), g.value(r.fusion.fused)};
  };
  const auto [pe0, re0] = states(m);
  m.params.mut(m.selector.inter_gru.layers[1].W_h).array() += 0.2;
  const auto [pe1, re1] = states(m);
  CHECK((pe1 - pe0).norm() > 1e-6);
  CHECK((re1 - re0).norm() > 1e-6);
}

TEST_CASE("Bernoulli KL on projected hidden states") {
  SUBCASE("equal states give zero") {
    ParamStore ps;
    Rng rng(8);
    AffineParams proj{ps.add_uniform("k.W", 64, 5, 0.5, rng), ps.add_uniform("k.b", 64, 1, 0.5, rng)};
    Mat h(5, 3);
    for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = rng.uniform(-1, 1);
    ad::Graph g;
    CHECK(std::abs(g.value(kl_hidden(g, ps, proj, g.constant(h), g.constant(h), {}))(0, 0)) < 1e-12);
  }
  SUBCASE("one-dimensional closed form") {
    ParamStore ps;
    AffineParams proj{ps.add("k.W", Mat::Ones(1, 1)), ps.add_zero("k.b", 1, 1)};
    ad::Graph g;
    const double got = g.value(kl_hidden(g, ps, proj, g.constant(Mat::Ones(1, 1)), g.constant(Mat::Zero(1, 1)), {}))(0, 0);
    const double p = sig(1.0);
    CHECK(got == doctest::Approx(p * std::log(p / 0.5) + (1 - p) * std::log((1 - p) / 0.5)).epsilon(1e-14));

    SelectorOptions rev;
    rev.kl_direction = KlDirection::RecognitionToPrior;
    const double back =
        g.value(kl_hidden(g, ps, proj, g.constant(Mat::Ones(1, 1)), g.constant(Mat::Zero(1, 1)), rev))(0, 0);
    CHECK(back == doctest::Approx(0.5 * std::log(0.5 / p) + 0.5 * std::log(0.5 / (1 - p))).epsilon(1e-14));
  }
  SUBCASE("random pairs are non-negative and match a scalar sum") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
      ParamStore ps;
      AffineParams proj{ps.add_uniform("k.W", 7, 4, 1.0, rng), ps.add_uniform("k.b", 7, 1, 1.0, rng)};
      Mat a(4, 2), b(4, 2);
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(-2, 2), b.data()[i] = rng.uniform(-2, 2);
      ad::Graph g;
      const double got = g.value(kl_hidden(g, ps, proj, g.constant(a), g.constant(b), {}))(0, 0);
      double want = 0;
      for (int c = 0; c < 2; ++c)
        for (int j = 0; j < 7; ++j) {
          double x = ps[proj.b](j, 0), y = ps[proj.b](j, 0);
          for (int i = 0; i < 4; ++i) x += ps[proj.W](j, i) * a(i, c), y += ps[proj.W](j, i) * b(i, c);
          const double p = sig(x), q = sig(y);
          want += p * std::log(p / q) + (1 - p) * std::log((1 - p) / (1 - q));
        }
      CHECK(got >= 0.0);
      CHECK(got == doctest::Approx(want / 2).epsilon(1e-10));
    }
  }
  SUBCASE("stop-gradient leaves the recognition side untouched") {
    ParamStore ps;
    Rng rng(10);
    AffineParams proj{ps.add_uniform("k.W", 3, 2, 1.0, rng), ps.add_uniform("k.b", 3, 1, 1.0, rng)};
    const ParamId h_re = ps.add_uniform("h_re", 2, 1, 1.0, rng);
    auto grad_of_h_re = [&](bool stop_grad) {
      SelectorOptions opts;
      opts.kl_stop_grad = stop_grad;
      ad::Graph g;
      Gradients grads(ps);
      g.backward(kl_hidden(g, ps, proj, g.constant(Mat::Constant(2, 1, 0.3)), g.param(ps, h_re), opts), grads);
      return Mat(grads[h_re]);
    };
    CHECK(grad_of_h_re(true).isZero(0));
    CHECK(grad_of_h_re(false).norm() > 0);
  }
}

TEST_CASE("selector loss is the sum of its terms") {
  Rng rng(11);
  for (auto xent : {ad::EmotionXent::PositiveTerm, ad::EmotionXent::Binary}) {
    SelectorOptions opts;
    opts.xent = xent;
    Model m = tiny_model(4, opts);
    const auto pairs = random_pairs(rng, 4);
    const Batch b = make_batch(pairs);
    ad::Graph g;
    const Views v = embed(g, m, b);
    const auto p = prior_forward(g, m.params, m.selector, v.post_emo, v.post_sem);
    const auto r = recognition_forward(g, m.params, m.selector, v.post_sem, &v.resp_sem, p.intermediate);
    const SelectorLosses l = selector_loss(g, m.params, m.selector, opts, p, r, b.post_labels, b.response_labels);
    const double lp = g.value(emotion_loss(g, p.post_emotion, b.post_labels, xent))(0, 0);
    const double lr = g.value(emotion_loss(g, p.response_emotion, b.response_labels, xent))(0, 0);
    const double lrr = g.value(emotion_loss(g, r.response_emotion, b.response_labels, xent))(0, 0);
    const double kl = g.value(kl_hidden(g, m.params, m.selector.kl_proj, p.fusion.fused, r.fusion.fused, opts))(0, 0);
    CHECK(g.value(l.post)(0, 0) == lp);
    CHECK(g.value(l.prior)(0, 0) == lr);
    CHECK(g.value(l.recognition)(0, 0) == lrr);
    CHECK(g.value(l.kl)(0, 0) == kl);
    CHECK(g.value(l.total)(0, 0) == doctest::Approx(lp + lr + lrr + kl).epsilon(1e-15));
  }
}

TEST_CASE("shared fusion option reuses the prior fusion and head") {
  SelectorOptions shared;
  shared.share_fusion = true;
  Model a = tiny_model(1, shared);
  Model b = tiny_model(1);
  CHECK(a.selector.recog_fusion.W.index == a.selector.prior_fusion.W.index);
  CHECK(a.selector.recog_head.b.index == a.selector.prior_head.b.index);
  CHECK(b.selector.recog_fusion.W.index != b.selector.prior_fusion.W.index);
  CHECK(a.params.size() + 4 == b.params.size());
  CHECK(a.params[a.selector.kl_proj.W].rows() == 8);
  CHECK(model_preset("desk").kl_dim == 64);
}
