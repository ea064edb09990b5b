#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "tgeacm/error.hpp"
#include "tgeacm/inference.hpp"
#include "tgeacm/reference.hpp"
#include "tgeacm/training.hpp"

using namespace tgeacm;

namespace {

struct Data {
  Vocabulary vocab;
  std::vector<ConversationPair> pairs;
};

Data synthetic(std::size_t n, std::uint64_t seed, int max_vocab = 32, int lexicon = 3, int filler = 10) {
  const auto spec = default_synthetic_spec(PlantedPattern::Shift, n, 0.1, lexicon, filler);
  const auto text = generate_synthetic_corpus(spec, seed);
  Data d{build_vocab(text, max_vocab), {}};
  d.pairs = encode_corpus(text, d.vocab, 30);
  return d;
}

ModelConfig tiny_binary() {
  auto c = model_preset("tiny");
  c.selector.xent = ad::EmotionXent::Binary;
  return c;
}

bool same_bits(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool same_params(const ParamStore& a, const ParamStore& b) {
  if (!a.same_layout(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!same_bits(a.tensor(i).value, b.tensor(i).value)) return false;
  return true;
}

double mean_of(const std::vector<MetricRecord>& r, std::size_t from, std::size_t to, double LossBreakdown::*field) {
  double s = 0;
  for (std::size_t i = from; i < to; ++i) s += r[i].loss.*field;
  return s / static_cast<double>(to - from);
}

TrainConfig quiet(int steps) {
  TrainConfig c;
  c.max_steps = steps;
  c.eval_every = 0;
  c.log_every = 1;
  c.validation_size = 0;
  return c;
}

}  // namespace

TEST_CASE("total loss is affine in alpha") {
  const auto d = synthetic(40, 1);
  const Model m = Model::create(tiny_binary(), d.vocab, 2);
  const Batch b = make_batch(std::vector<ConversationPair>(d.pairs.begin(), d.pairs.begin() + 6));

  const auto l0 = total_loss(m, b, 0.0);
  const auto l1 = total_loss(m, b, 1.0);
  CHECK(l0.total == l0.nll);
  CHECK(l1.total == doctest::Approx(l1.emotion()).epsilon(1e-12));

  // components from the independent long-double implementation
  const auto ref = reference_losses(m, b);
  const double le = static_cast<double>(ref.emotion()), nll = static_cast<double>(ref.nll);
  CHECK(std::abs(total_loss(m, b, 0.5).total - 0.5 * (le + nll)) < 1e-9);
  for (double a : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0})
    CHECK(std::abs(total_loss(m, b, a).total - (a * le + (1 - a) * nll)) < 1e-9);

  const auto l = total_loss(m, b, 0.3);
  CHECK(std::abs(l.post - static_cast<double>(ref.post)) < 1e-9);
  CHECK(std::abs(l.prior - static_cast<double>(ref.prior)) < 1e-9);
  CHECK(std::abs(l.recognition - static_cast<double>(ref.recognition)) < 1e-9);
  CHECK(std::abs(l.kl - static_cast<double>(ref.kl)) < 1e-9);
  CHECK(std::abs(l.nll - static_cast<double>(ref.nll)) < 1e-9);
}

TEST_CASE("loss_and_gradients agrees with the forward pass") {
  const auto d = synthetic(20, 3);
  const Model m = Model::create(tiny_binary(), d.vocab, 4);
  const Batch b = make_batch(std::vector<ConversationPair>(d.pairs.begin(), d.pairs.begin() + 4));
  Gradients g(m.params);
  const auto a = loss_and_gradients(m, b, 0.5, g);
  const auto f = total_loss(m, b, 0.5);
  CHECK(a.total == f.total);
  CHECK(a.kl == f.kl);
  double norm = 0;
  for (std::size_t i = 0; i < g.size(); ++i) norm += g.at(i).squaredNorm();
  CHECK(norm > 0);
}

TEST_CASE("sgd step") {
  ParamStore ps;
  const ParamId p = ps.add("p", Mat::Constant(1, 1, 1.0));
  const ParamId q = ps.add("q", Mat::Constant(2, 1, -0.25));
  Gradients g(ps);

  SUBCASE("zero gradients leave parameters unchanged") {
    sgd_step(ps, g, 0.5, 5.0);
    CHECK(ps[p](0, 0) == 1.0);
    CHECK(ps[q](1, 0) == -0.25);
  }
  SUBCASE("zero learning rate leaves parameters unchanged") {
    g[p](0, 0) = 3.0;
    g[q].setConstant(-7.0);
    sgd_step(ps, g, 0.0, 5.0);
    CHECK(ps[p](0, 0) == 1.0);
    CHECK(ps[q](0, 0) == -0.25);
  }
  SUBCASE("single scalar, no clipping") {
    g[p](0, 0) = 0.2;
    sgd_step(ps, g, 0.5, 0.0);
    CHECK(ps[p](0, 0) == doctest::Approx(0.9));
    CHECK(ps[q](0, 0) == -0.25);
  }
  SUBCASE("clipping rescales to the global norm") {
    g[p](0, 0) = 6.0;
    g[q].setConstant(8.0 / std::sqrt(2.0));  // global norm 10
    const double norm = sgd_step(ps, g, 1.0, 5.0);
    CHECK(norm == doctest::Approx(10.0));
    CHECK(ps[p](0, 0) == doctest::Approx(1.0 - 3.0));
    CHECK(ps[q](0, 0) == doctest::Approx(-0.25 - 4.0 / std::sqrt(2.0)));
  }
  SUBCASE("norm below the threshold is not rescaled") {
    g[p](0, 0) = 3.0;
    g[q].setConstant(0.0);
    sgd_step(ps, g, 0.1, 5.0);
    CHECK(ps[p](0, 0) == doctest::Approx(0.7));
  }
  SUBCASE("gradients keyed differently are rejected") {
    ParamStore other;
    other.add("p", Mat::Zero(1, 1));
    other.add("r", Mat::Zero(2, 1));
    Gradients wrong(other);
    CHECK_THROWS_AS(sgd_step(ps, wrong, 0.5, 5.0), IntegrityError);
  }
}

TEST_CASE("gradient checker on a quadratic") {
  ParamStore ps;
  const ParamId a = ps.add("a", (Mat(2, 2) << 0.3, -1.2, 2.0, 0.7).finished());
  const ParamId b = ps.add("b", (Mat(3, 1) << 1.5, -0.4, 0.05).finished());
  Mat A(3, 3);
  A << 2.0, 0.5, 0.0, 0.5, 1.0, -0.3, 0.0, -0.3, 3.0;
  auto loss = [&](const ParamStore& p) {
    const Mat& x = p[b];
    return 0.5 * p[a].squaredNorm() + 0.5 * (x.transpose() * A * x)(0, 0);
  };
  Gradients g(ps);
  g[a] = ps[a];
  g[b] = A * ps[b];
  const auto r = gradient_check(ps, g, loss);
  CHECK(r.max_rel_error < 1e-8);
  CHECK(r.checked == 7);
  CHECK(ps[a](1, 0) == 2.0);  // restored

  g[b](2, 0) += 0.01;
  const auto bad = gradient_check(ps, g, loss);
  CHECK(bad.max_rel_error > 1e-3);
  CHECK(bad.worst_param == "b");
  CHECK(bad.worst_index == 2);
}

TEST_CASE("gradient check of the full tiny model") {
  const auto d = synthetic(64, 7);
  REQUIRE(d.vocab.size() <= 32);
  Model m = Model::create(tiny_binary(), d.vocab, 7);
  const Batch b = make_batch(std::vector<ConversationPair>(d.pairs.begin(), d.pairs.begin() + 2));
  const auto reports = gradient_check(m, b, {0.5, 0.0});
  REQUIRE(reports.size() == 2);
  for (const auto& r : reports) {
    INFO("worst " << r.worst_param << "[" << r.worst_index << "] analytic " << r.analytic << " numeric " << r.numeric);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.checked == m.params.scalar_count());
  }
}

TEST_CASE("pretraining lowers the seq2seq NLL") {
  const auto d = synthetic(32, 5);
  Model m = Model::create(tiny_binary(), d.vocab, 5);
  const Batch all = make_batch(d.pairs);
  const double before = seq2seq_nll(m, all);
  TrainConfig c = quiet(0);
  c.pretrain_steps = 300;
  const auto curve = pretrain_seq2seq(m, d.pairs, c);
  CHECK(curve.size() == 300);
  const double after = seq2seq_nll(m, all);
  CHECK(after < before);
  CHECK(m.params[m.generator.W_3].isZero(0));
}

TEST_CASE("pretraining leaves the selector untouched") {
  const auto d = synthetic(32, 6);
  Model m = Model::create(tiny_binary(), d.vocab, 6);
  const Model before = m;
  TrainConfig c = quiet(0);
  c.pretrain_steps = 20;
  pretrain_seq2seq(m, d.pairs, c);
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const auto& name = m.params.tensor(i).name;
    if (name.rfind("selector.", 0) == 0 || name == kEmotionalTableName) {
      INFO(name);
      CHECK(same_bits(m.params.tensor(i).value, before.params.tensor(i).value));
    }
  }
}

TEST_CASE("warm start with a zero emotion vector reproduces the pretrained seq2seq") {
  const auto d = synthetic(32, 8);
  Model pre = Model::create(tiny_binary(), d.vocab, 8);
  TrainConfig c = quiet(0);
  c.pretrain_steps = 50;
  pretrain_seq2seq(pre, d.pairs, c);

  Model m = Model::create(tiny_binary(), d.vocab, 99);
  warm_start(m, pre);
  CHECK(m.params[m.generator.W_3].isZero(0));

  const Batch b = make_batch(std::vector<ConversationPair>(d.pairs.begin(), d.pairs.begin() + 5));
  auto logits = [&](const Model& model, bool with_emotion) {
    ad::Graph g;
    const ad::Var table = g.param(model.params, model.semantic_table);
    const EmbeddedBatch post = embed_tokens(g, table, b.post_ids, b.post_mask);
    std::optional<ad::Var> e;
    if (with_emotion) e = g.constant(Mat::Zero(kNumEmotions, static_cast<Eigen::Index>(b.size)));
    const auto trace = generator_forward(g, model.params, model.generator, table, post, b.decoder, e);
    std::vector<Mat> out;
    for (const auto& s : trace.steps) out.push_back(g.value(s.logits));
    return out;
  };
  const auto warm = logits(m, true), plain = logits(pre, false);
  REQUIRE(warm.size() == plain.size());
  for (std::size_t t = 0; t < warm.size(); ++t) CHECK(same_bits(warm[t], plain[t]));

  Model mismatched = Model::create(model_preset("desk"), d.vocab, 1);
  CHECK_THROWS_AS(warm_start(mismatched, pre), IntegrityError);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto d = synthetic(60, 9);
  TrainConfig c = quiet(25);
  c.eval_every = 10;
  auto run = [&] {
    Model m = Model::create(tiny_binary(), d.vocab, 9);
    auto r = train(m, d.pairs, std::vector<ConversationPair>(d.pairs.begin(), d.pairs.begin() + 20), c);
    return std::make_pair(std::move(m), std::move(r));
  };
  const auto [m1, r1] = run();
  const auto [m2, r2] = run();
  REQUIRE(r1.records.size() == r2.records.size());
  for (std::size_t i = 0; i < r1.records.size(); ++i) CHECK(to_json_line(r1.records[i]) == to_json_line(r2.records[i]));
  CHECK(same_params(m1.params, m2.params));

  Model m3 = Model::create(tiny_binary(), d.vocab, 9);
  TrainConfig other = c;
  other.seed = 2;
  const auto r3 = train(m3, d.pairs, {}, other);
  CHECK_FALSE(same_params(m1.params, m3.params));
}

TEST_CASE("training keeps parameters float32-representable") {
  const auto d = synthetic(30, 10);
  Model m = Model::create(tiny_binary(), d.vocab, 10);
  train(m, d.pairs, {}, quiet(5));
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const Mat& v = m.params.tensor(i).value;
    for (Eigen::Index k = 0; k < v.size(); ++k)
      if (static_cast<double>(static_cast<float>(v.data()[k])) != v.data()[k]) FAIL(m.params.tensor(i).name);
  }
}

TEST_CASE("logging, evaluation and checkpoint cadence") {
  const auto d = synthetic(40, 11);
  Model m = Model::create(tiny_binary(), d.vocab, 11);
  TrainConfig c = quiet(20);
  c.log_every = 5;
  c.eval_every = 8;
  c.checkpoint_every = 7;
  std::vector<int> ckpt;
  std::vector<int> streamed;
  const auto r = train(
      m, d.pairs, std::vector<ConversationPair>(d.pairs.begin(), d.pairs.begin() + 10), c,
      [&](const Model&, int step, const Rng&) { ckpt.push_back(step); },
      [&](const MetricRecord& rec) { streamed.push_back(rec.step); });
  CHECK(r.steps == 20);
  CHECK(ckpt == std::vector<int>{0, 7, 14, 20});
  std::vector<int> logged;
  for (const auto& rec : r.records) {
    logged.push_back(rec.step);
    const bool eval = rec.step % 8 == 0;
    CHECK(rec.acc_prior.has_value() == eval);
    CHECK(rec.acc_recognition.has_value() == eval);
    CHECK(rec.val_kl.has_value() == eval);
    if (rec.acc_prior) {
      CHECK(*rec.acc_prior >= 0);
      CHECK(*rec.acc_prior <= 1);
    }
  }
  CHECK(logged == streamed);
  CHECK(logged == std::vector<int>{5, 8, 10, 15, 16, 20});
  for (int s : {5, 8, 10, 15, 16, 20}) CHECK(std::find(logged.begin(), logged.end(), s) != logged.end());
}

TEST_CASE("metric record JSON") {
  MetricRecord r;
  r.step = 12;
  r.loss = {1.5, 0.1, 0.2, 0.3, 0.4, 0.5};
  auto j = nlohmann::json::parse(to_json_line(r));
  for (const char* k : {"step", "L_total", "L_p", "L_r", "L_r'", "L_KL", "L_NLL", "acc_prior", "acc_recognition"})
    CHECK(j.contains(k));
  CHECK(j["step"] == 12);
  CHECK(j["L_r'"].get<double>() == 0.3);
  CHECK(j["acc_prior"].is_null());
  r.acc_prior = 0.25;
  r.acc_recognition = 0.5;
  j = nlohmann::json::parse(to_json_line(r));
  CHECK(j["acc_prior"].get<double>() == 0.25);
  CHECK(j["acc_recognition"].get<double>() == 0.5);
  CHECK(to_json_line(r).find('\n') == std::string::npos);
}

TEST_CASE("non-finite loss aborts training") {
  const auto d = synthetic(20, 12);
  Model m = Model::create(tiny_binary(), d.vocab, 12);
  m.params.mut(m.generator.b_out)(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train(m, d.pairs, {}, quiet(3)), DivergenceError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(validate(c));
  for (auto bad : std::vector<std::function<void(TrainConfig&)>>{
           [](TrainConfig& x) { x.alpha = -0.1; }, [](TrainConfig& x) { x.alpha = 1.5; },
           [](TrainConfig& x) { x.learning_rate = 0; }, [](TrainConfig& x) { x.batch_size = 0; },
           [](TrainConfig& x) { x.max_steps = -1; }}) {
    TrainConfig x;
    bad(x);
    CHECK_THROWS_AS(validate(x), ConfigError);
  }
}

TEST_CASE("split indices") {
  for (std::size_t n : {5u, 37u, 200u}) {
    for (int v : {0, 1, 4}) {
      const auto s = split_indices(n, v, 3);
      CHECK(s.validation.size() == static_cast<std::size_t>(v));
      CHECK(s.train.size() + s.validation.size() == n);
      std::set<std::size_t> all(s.train.begin(), s.train.end());
      all.insert(s.validation.begin(), s.validation.end());
      CHECK(all.size() == n);
      CHECK(*all.rbegin() == n - 1);
      CHECK(split_indices(n, v, 3).validation == s.validation);
    }
  }
  CHECK(split_indices(200, 20, 1).validation != split_indices(200, 20, 2).validation);
  CHECK_THROWS_AS(split_indices(10, 10, 1), ConfigError);
  CHECK_THROWS_AS(split_indices(10, -1, 1), ConfigError);
}

TEST_CASE("tiny model overfits 32 pairs in 2000 steps") {
  const auto d = synthetic(32, 13);
  Model m = Model::create(tiny_binary(), d.vocab, 13);
  const auto r = train(m, d.pairs, {}, quiet(2000));
  const double initial = r.records.front().loss.nll;
  const std::size_t tail = r.records.size() / 10;
  const double final_nll = mean_of(r.records, r.records.size() - tail, r.records.size(), &LossBreakdown::nll);
  INFO("initial " << initial << " final mean " << final_nll);
  CHECK(final_nll < 0.1 * initial);
}

TEST_CASE("mean KL falls during training on the synthetic corpus") {
  const auto d = synthetic(1000, 14, 64, 4, 20);
  Model m = Model::create(tiny_binary(), d.vocab, 14);
  const auto r = train(m, d.pairs, {}, quiet(1000));
  const std::size_t tail = r.records.size() / 10;
  const double first = mean_of(r.records, 0, tail, &LossBreakdown::kl);
  const double last = mean_of(r.records, r.records.size() - tail, r.records.size(), &LossBreakdown::kl);
  INFO("first " << first << " last " << last);
  CHECK(last < first);
}

TEST_CASE("a model overfit on one pair decodes its response") {
  Vocabulary vocab(std::vector<std::string>{"how", "are", "you", "fine", "thanks", "and", "bye"});
  ConversationPair p;
  p.post = {vocab.id("how"), vocab.id("are"), vocab.id("you")};
  p.response = {vocab.id("fine"), vocab.id("thanks"), vocab.id("and"), vocab.id("you")};
  p.post_emotion[kNumEmotions - 1] = 1;
  p.response_emotion[3] = 1;
  Model m = Model::create(tiny_binary(), vocab, 15);
  train(m, {p}, {}, quiet(1500));
  CHECK(respond(m, p.post, 10) == p.response);
}
