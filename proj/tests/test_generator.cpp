#include <cmath>
#include <cstring>

#include "doctest.h"
#include "tgeacm/error.hpp"
#include "tgeacm/model.hpp"

using namespace tgeacm;

namespace {

void fill_random(ParamStore& ps, Rng& rng, double range) {
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (Eigen::Index k = 0; k < ps.tensor(i).value.size(); ++k)
      ps.tensor(i).value.data()[k] = rng.uniform(-range, range);
}

Vocabulary vocab_of(int n) {
  std::vector<std::string> toks;
  for (int i = 0; i < n; ++i) toks.push_back("w" + std::to_string(i));
  return Vocabulary(toks);
}

Model tiny(std::uint64_t seed, int words = 16) { return Model::create(model_preset("tiny"), vocab_of(words), seed); }

Mat random_mat(Rng& rng, int r, int c, double range = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-range, range);
  return m;
}

// Attention weights written out from the score formula.
std::vector<double> attention_oracle(const ParamStore& ps, const GeneratorParams& gen, const std::vector<Vec>& h,
                                     const Vec& s, const Vec* ve) {
  const Mat& W1 = ps[gen.W_1];
  const Mat& W2 = ps[gen.W_2];
  const Mat& W3 = ps[gen.W_3];
  const Mat& v = ps[gen.v];
  std::vector<double> u;
  for (const auto& hi : h) {
    double acc = 0;
    for (int a = 0; a < W1.rows(); ++a) {
      double x = 0;
      for (int j = 0; j < W1.cols(); ++j) x += W1(a, j) * hi(j);
      for (int j = 0; j < W2.cols(); ++j) x += W2(a, j) * s(j);
      if (ve)
        for (int j = 0; j < W3.cols(); ++j) x += W3(a, j) * (*ve)(j);
      acc += v(0, a) * std::tanh(x);
    }
    u.push_back(acc);
  }
  double mx = *std::max_element(u.begin(), u.end()), z = 0;
  for (double x : u) z += std::exp(x - mx);
  for (double& x : u) x = std::exp(x - mx) / z;
  return u;
}

AttentionMemory memory_of(ad::Graph& g, const ParamStore& ps, const GeneratorParams& gen, const std::vector<Vec>& h) {
  std::vector<ad::Var> states;
  for (const auto& x : h) states.push_back(g.constant(x));
  return attention_memory(g, ps, gen, states, Mat::Ones(static_cast<Eigen::Index>(h.size()), 1));
}

}  // namespace

TEST_CASE("emotion embedding is the linear map W_e") {
  Model m = tiny(1);
  const Mat& We = m.params[m.generator.W_e];
  REQUIRE(We.cols() == kNumEmotions);
  for (int i = 0; i < kNumEmotions; ++i) {
    EmotionVector e{};
    e[static_cast<std::size_t>(i)] = 1;
    CHECK(embed_emotion(m.params, m.generator, e) == We.col(i));
  }
  CHECK(embed_emotion(m.params, m.generator, EmotionVector{}).isZero(0));

  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    EmotionVector u{}, w{};
    for (int k = 0; k < kNumEmotions; ++k) u[k] = rng.uniform(), w[k] = rng.uniform();
    const Vec got = embed_emotion(m.params, m.generator, u);
    for (int r = 0; r < We.rows(); ++r) {
      double acc = 0;
      for (int k = 0; k < kNumEmotions; ++k) acc += We(r, k) * u[k];
      CHECK(got(r) == doctest::Approx(acc).epsilon(1e-12));
    }
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    EmotionVector mix{};
    for (int k = 0; k < kNumEmotions; ++k) mix[k] = a * u[k] + b * w[k];
    const Vec lin = a * got + b * embed_emotion(m.params, m.generator, w);
    CHECK((embed_emotion(m.params, m.generator, mix) - lin).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("emotion-biased attention") {
  Model m = tiny(3);
  Rng rng(4);
  fill_random(m.params, rng, 0.8);
  const int h = m.config.hidden_dim;

  SUBCASE("one state takes all the weight") {
    ad::Graph g;
    const Vec h1 = random_mat(rng, h, 1);
    const auto att = emotion_biased_attention(g, m.params, m.generator, memory_of(g, m.params, m.generator, {h1}),
                                              g.constant(random_mat(rng, h, 1)), std::nullopt);
    CHECK(g.value(att.weights)(0, 0) == 1.0);
    CHECK(g.value(att.context) == Mat(h1));
  }
  SUBCASE("random three-state case matches the softmax oracle and reacts to V_e") {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<Vec> hs;
      for (int t = 0; t < 3; ++t) hs.push_back(random_mat(rng, h, 1));
      const Vec s = random_mat(rng, h, 1);
      const Vec ve = random_mat(rng, m.config.emotion_dim, 1);
      ad::Graph g;
      const auto mem = memory_of(g, m.params, m.generator, hs);
      const auto att = emotion_biased_attention(g, m.params, m.generator, mem, g.constant(s), g.constant(ve));
      const auto want = attention_oracle(m.params, m.generator, hs, s, &ve);
      double total = 0;
      for (int t = 0; t < 3; ++t) {
        CHECK(g.value(att.weights)(t, 0) == doctest::Approx(want[static_cast<std::size_t>(t)]).epsilon(1e-12));
        CHECK(g.value(att.weights)(t, 0) >= 0);
        total += g.value(att.weights)(t, 0);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      const auto plain = emotion_biased_attention(g, m.params, m.generator, mem, g.constant(s), std::nullopt);
      CHECK((g.value(plain.weights) - g.value(att.weights)).cwiseAbs().maxCoeff() > 1e-9);
    }
  }
  SUBCASE("W_3 = 0 reduces to plain attention for any V_e") {
    m.params.mut(m.generator.W_3).setZero();
    std::vector<Vec> hs;
    for (int t = 0; t < 4; ++t) hs.push_back(random_mat(rng, h, 1));
    const Vec s = random_mat(rng, h, 1);
    ad::Graph g;
    const auto mem = memory_of(g, m.params, m.generator, hs);
    const auto a = emotion_biased_attention(g, m.params, m.generator, mem, g.constant(s),
                                            g.constant(random_mat(rng, m.config.emotion_dim, 1, 5.0)));
    const auto b = emotion_biased_attention(g, m.params, m.generator, mem, g.constant(s), std::nullopt);
    CHECK(g.value(a.weights) == g.value(b.weights));
    CHECK(g.value(a.context) == g.value(b.context));
  }
  SUBCASE("masked encoder positions get no weight") {
    ad::Graph g;
    std::vector<ad::Var> states;
    for (int t = 0; t < 3; ++t) states.push_back(g.constant(random_mat(rng, h, 2)));
    Mat mask(3, 2);
    mask << 1, 1, 1, 0, 0, 0;
    const auto mem = attention_memory(g, m.params, m.generator, states, mask);
    const auto att =
        emotion_biased_attention(g, m.params, m.generator, mem, g.constant(random_mat(rng, h, 2)), std::nullopt);
    CHECK(g.value(att.weights)(2, 0) == 0.0);
    CHECK(g.value(att.weights)(1, 1) == 0.0);
    CHECK(g.value(att.weights)(0, 1) == 1.0);
  }
}

TEST_CASE("decoder step with zero parameters") {
  Model m = tiny(5, 20);
  for (std::size_t i = 0; i < m.params.size(); ++i)
    if (m.params.tensor(i).name.rfind("generator.", 0) == 0) m.params.tensor(i).value.setZero();
  Rng rng(6);
  Mat bias(m.vocab.size(), 1);
  for (Eigen::Index i = 0; i < bias.size(); ++i) bias(i) = rng.uniform(-1, 1);
  m.params.mut(m.generator.b_out) = bias;

  const int h = m.config.hidden_dim;
  ad::Graph g;
  DecoderState prev;
  std::vector<Mat> prev_vals;
  for (int l = 0; l < m.config.layers; ++l) {
    prev_vals.push_back(random_mat(rng, h, 1));
    prev.layers.push_back(g.constant(prev_vals.back()));
  }
  const auto mem = memory_of(g, m.params, m.generator, {random_mat(rng, h, 1), random_mat(rng, h, 1)});
  const auto step = decoder_step(g, m.params, m.generator, prev, g.constant(random_mat(rng, m.config.embed_dim, 1)),
                                 std::nullopt, mem);
  CHECK((g.value(step.s) - 0.5 * prev_vals.back()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.value(step.logits).rows() == m.vocab.size());
  CHECK(g.value(step.logits) == bias);
}

TEST_CASE("two chained decoder steps match a manual composition") {
  Model m = tiny(7);
  Rng rng(8);
  fill_random(m.params, rng, 0.5);
  const auto& gen = m.generator;
  const auto& ps = m.params;
  const int h = m.config.hidden_dim;
  std::vector<Vec> hs;
  for (int t = 0; t < 3; ++t) hs.push_back(random_mat(rng, h, 1));
  EmotionVector e{};
  for (auto& x : e) x = rng.uniform();
  const Vec ve = embed_emotion(ps, gen, e);
  const std::vector<int> inputs = {Vocabulary::kBos, 6};

  ad::Graph g;
  const auto mem = memory_of(g, ps, gen, hs);
  const ad::Var ve_var = g.constant(ve);
  std::vector<Mat> enc_final = {random_mat(rng, h, 1), random_mat(rng, h, 1)};
  DecoderState state = initial_decoder_state(g, ps, gen, {g.constant(enc_final[0]), g.constant(enc_final[1])});

  std::vector<Vec> manual;
  for (std::size_t l = 0; l < 2; ++l) manual.push_back((ps[gen.W_init[l]] * enc_final[l]).array().tanh().matrix());
  const Mat& table = ps[m.semantic_table];
  for (int id : inputs) {
    const auto step =
        decoder_step(g, ps, gen, state, ad::lookup(g.param(ps, m.semantic_table), {id}), ve_var, mem);
    state = step.next;

    Vec x(m.config.embed_dim + m.config.emotion_dim);
    x << table.row(id).transpose(), ve;
    Vec below = x;
    for (std::size_t l = 0; l < 2; ++l) {
      manual[l] = gru_step(ps, gen.decoder.layers[l], manual[l], below);
      below = manual[l];
    }
    const auto w = attention_oracle(ps, gen, hs, below, &ve);
    Vec ctx = Vec::Zero(h);
    for (int t = 0; t < 3; ++t) ctx += w[static_cast<std::size_t>(t)] * hs[static_cast<std::size_t>(t)];
    Vec sc(2 * h);
    sc << below, ctx;
    const Vec s_fused = ps[gen.W_4] * sc;
    manual[1] = s_fused;
    const Vec logits = ps[gen.W_out] * s_fused + ps[gen.b_out];
    CHECK((g.value(step.s_fused) - s_fused).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((g.value(step.logits) - logits).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("teacher forcing layout") {
  const TokenSequence a{5, 6}, b{7};
  const auto d = teacher_forcing({&a, &b});
  REQUIRE(d.inputs.size() == 3);
  CHECK(d.inputs[0] == std::vector<int>{Vocabulary::kBos, Vocabulary::kBos});
  CHECK(d.inputs[1] == std::vector<int>{5, 7});
  CHECK(d.targets[0] == std::vector<int>{5, 7});
  CHECK(d.targets[1] == std::vector<int>{6, Vocabulary::kEos});
  CHECK(d.targets[2][0] == Vocabulary::kEos);
  CHECK(d.mask(2, 1) == 0.0);
  CHECK(d.mask.sum() == 5.0);
}

TEST_CASE("token NLL") {
  SUBCASE("uniform logits over 20 tokens give ln 20") {
    ad::Graph g;
    const std::vector<ad::Var> logits = {g.constant(Mat::Constant(20, 2, 0.37)), g.constant(Mat::Constant(20, 2, -1))};
    const double l = g.value(nll_loss(g, logits, {{3, 4}, {5, 6}}, Mat::Ones(2, 2)))(0, 0);
    CHECK(l == doctest::Approx(std::log(20.0)).epsilon(1e-14));
  }
  SUBCASE("a large margin on every target gives almost zero") {
    ad::Graph g;
    Mat z = Mat::Zero(20, 1);
    z(7, 0) = 60;
    const double l = g.value(nll_loss(g, {g.constant(z)}, {{7}}, Mat::Ones(1, 1)))(0, 0);
    CHECK(l >= 0.0);
    CHECK(l < 1e-20);
  }
  SUBCASE("random logits match a log-softmax oracle and skip masked positions") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
      ad::Graph g;
      std::vector<Mat> zs;
      std::vector<ad::Var> logits;
      std::vector<std::vector<int>> targets;
      for (int t = 0; t < 3; ++t) {
        zs.push_back(random_mat(rng, 9, 2, 4.0));
        logits.push_back(g.constant(zs.back()));
        targets.push_back({static_cast<int>(rng.below(9)), static_cast<int>(rng.below(9))});
      }
      Mat mask = Mat::Ones(3, 2);
      mask(2, 1) = 0;
      double want = 0;
      for (int t = 0; t < 3; ++t)
        for (int b = 0; b < 2; ++b) {
          if (mask(t, b) == 0) continue;
          double z = 0;
          for (int k = 0; k < 9; ++k) z += std::exp(zs[t](k, b));
          want -= zs[t](targets[t][b], b) - std::log(z);
        }
      want /= 5;
      CHECK(g.value(nll_loss(g, logits, targets, mask))(0, 0) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("W_3 = 0 with a zero emotion vector reproduces the plain seq2seq bit for bit") {
  Rng rng(10);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Model m = tiny(seed);
    m.params.mut(m.generator.W_3).setZero();
    std::vector<ConversationPair> pairs(3);
    for (auto& p : pairs) {
      for (int t = 0, n = 1 + static_cast<int>(rng.below(5)); t < n; ++t) p.post.push_back(4 + rng.below(16));
      for (int t = 0, n = 1 + static_cast<int>(rng.below(5)); t < n; ++t) p.response.push_back(4 + rng.below(16));
      p.post_emotion[0] = p.response_emotion[1] = 1;
    }
    const Batch b = make_batch(pairs);
    auto run = [&](bool with_emotion) {
      ad::Graph g;
      const ad::Var table = g.param(m.params, m.semantic_table);
      const EmbeddedBatch post = embed_tokens(g, table, b.post_ids, b.post_mask);
      std::optional<ad::Var> e;
      if (with_emotion) e = g.constant(Mat::Zero(kNumEmotions, 3));
      const auto trace = generator_forward(g, m.params, m.generator, table, post, b.decoder, e);
      std::vector<Mat> out;
      for (const auto& s : trace.steps) out.push_back(g.value(s.logits));
      out.push_back(g.value(nll_loss(g, trace, b.decoder)));
      return out;
    };
    const auto a = run(true), p = run(false);
    REQUIRE(a.size() == p.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(std::memcmp(a[i].data(), p[i].data(), sizeof(double) * static_cast<std::size_t>(a[i].size())) == 0);
  }
}

TEST_CASE("greedy decoding") {
  Model m = tiny(11);
  Rng rng(12);
  fill_random(m.params, rng, 0.6);
  const TokenSequence post{5, 9, 12};
  EmotionVector e{};
  e[2] = 0.8;
  const auto a = greedy_decode(m.params, m.generator, m.semantic_table, post, e, 10);
  const auto b = greedy_decode(m.params, m.generator, m.semantic_table, post, e, 10);
  CHECK(a == b);
  CHECK(a.size() <= 10);
  for (int id : a) CHECK(id != Vocabulary::kEos);
  CHECK(greedy_decode(m.params, m.generator, m.semantic_table, post, e, 1).size() <= 1);

  // Make EOS the argmax everywhere: nothing is emitted.
  m.params.mut(m.generator.W_out).setZero();
  m.params.mut(m.generator.b_out).setZero();
  m.params.mut(m.generator.b_out)(Vocabulary::kEos, 0) = 1;
  CHECK(greedy_decode(m.params, m.generator, m.semantic_table, post, e, 10).empty());
  // Ties go to the lowest id.
  m.params.mut(m.generator.b_out).setZero();
  const auto tie = greedy_decode(m.params, m.generator, m.semantic_table, post, std::nullopt, 3);
  CHECK(tie == TokenSequence{0, 0, 0});
}
