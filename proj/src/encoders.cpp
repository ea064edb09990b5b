#include "tgeacm/encoders.hpp"

#include "tgeacm/error.hpp"

namespace tgeacm {

using ad::Var;

GruLayer make_gru_layer(ParamStore& ps, const std::string& prefix, int input_dim, int hidden_dim, Rng& rng) {
  if (input_dim <= 0 || hidden_dim <= 0) throw ConfigError("GRU dimensions must be positive");
  GruLayer l;
  l.input_dim = input_dim;
  l.hidden_dim = hidden_dim;
  const double r = kParamInitRange;
  l.W_z = ps.add_uniform(prefix + ".W_z", hidden_dim, input_dim, r, rng);
  l.U_z = ps.add_uniform(prefix + ".U_z", hidden_dim, hidden_dim, r, rng);
  l.b_z = ps.add_uniform(prefix + ".b_z", hidden_dim, 1, r, rng);
  l.W_r = ps.add_uniform(prefix + ".W_r", hidden_dim, input_dim, r, rng);
  l.U_r = ps.add_uniform(prefix + ".U_r", hidden_dim, hidden_dim, r, rng);
  l.b_r = ps.add_uniform(prefix + ".b_r", hidden_dim, 1, r, rng);
  l.W_h = ps.add_uniform(prefix + ".W_h", hidden_dim, input_dim, r, rng);
  l.U_h = ps.add_uniform(prefix + ".U_h", hidden_dim, hidden_dim, r, rng);
  l.b_h = ps.add_uniform(prefix + ".b_h", hidden_dim, 1, r, rng);
  return l;
}

GruStack make_gru_stack(ParamStore& ps, const std::string& prefix, int input_dim, int hidden_dim, int layers,
                        Rng& rng) {
  if (layers < 1) throw ConfigError("GRU stack needs at least one layer");
  GruStack s;
  for (int i = 0; i < layers; ++i)
    s.layers.push_back(
        make_gru_layer(ps, prefix + ".l" + std::to_string(i), i == 0 ? input_dim : hidden_dim, hidden_dim, rng));
  return s;
}

AttnPool make_attn_pool(ParamStore& ps, const std::string& prefix, int hidden_dim, int width, Rng& rng) {
  if (width <= 0) throw ConfigError("attention width must be positive");
  AttnPool p;
  p.W = ps.add_uniform(prefix + ".W", width, hidden_dim, kParamInitRange, rng);
  p.v = ps.add_uniform(prefix + ".v", 1, width, kParamInitRange, rng);
  return p;
}

GruStack bind_gru_stack(const ParamStore& ps, const std::string& prefix, int layers) {
  GruStack s;
  for (int i = 0; i < layers; ++i) {
    const std::string p = prefix + ".l" + std::to_string(i);
    GruLayer l;
    l.W_z = ps.id(p + ".W_z");
    l.U_z = ps.id(p + ".U_z");
    l.b_z = ps.id(p + ".b_z");
    l.W_r = ps.id(p + ".W_r");
    l.U_r = ps.id(p + ".U_r");
    l.b_r = ps.id(p + ".b_r");
    l.W_h = ps.id(p + ".W_h");
    l.U_h = ps.id(p + ".U_h");
    l.b_h = ps.id(p + ".b_h");
    l.hidden_dim = static_cast<int>(ps[l.W_z].rows());
    l.input_dim = static_cast<int>(ps[l.W_z].cols());
    s.layers.push_back(l);
  }
  return s;
}

AttnPool bind_attn_pool(const ParamStore& ps, const std::string& prefix) {
  return AttnPool{ps.id(prefix + ".W"), ps.id(prefix + ".v")};
}

Var gru_step(ad::Graph& g, const ParamStore& ps, const GruLayer& l, Var h_prev, Var x) {
  const Mat& hv = g.value(h_prev);
  const Mat& xv = g.value(x);
  if (hv.rows() != l.hidden_dim || xv.rows() != l.input_dim || hv.cols() != xv.cols())
    throw ShapeError("gru_step: expected h " + std::to_string(l.hidden_dim) + ", x " + std::to_string(l.input_dim) +
                     "; got " + std::to_string(hv.rows()) + ", " + std::to_string(xv.rows()));
  auto affine = [&](ParamId W, ParamId U, ParamId b, Var state) {
    return ad::add_bias(ad::add(ad::matmul(g.param(ps, W), x), ad::matmul(g.param(ps, U), state)), g.param(ps, b));
  };
  Var z = ad::sigmoid(affine(l.W_z, l.U_z, l.b_z, h_prev));
  Var r = ad::sigmoid(affine(l.W_r, l.U_r, l.b_r, h_prev));
  Var cand = ad::tanh(affine(l.W_h, l.U_h, l.b_h, ad::cmul(r, h_prev)));
  return ad::add(ad::cmul(ad::one_minus(z), h_prev), ad::cmul(z, cand));
}

Vec gru_step(const ParamStore& ps, const GruLayer& layer, const Vec& h_prev, const Vec& x) {
  ad::Graph g(ad::Mode::Inference);
  Var out = gru_step(g, ps, layer, g.constant(h_prev), g.constant(x));
  return g.value(out).col(0);
}

EncodedSequence encode_sequence(ad::Graph& g, const ParamStore& ps, const GruStack& stack,
                                const std::vector<Var>& embedded, const Mat& mask) {
  if (embedded.empty()) throw ShapeError("encode_sequence: empty sequence");
  const Eigen::Index batch = g.value(embedded.front()).cols();
  if (mask.rows() != static_cast<Eigen::Index>(embedded.size()) || mask.cols() != batch)
    throw ShapeError("encode_sequence: mask shape does not match the sequence");
  std::vector<Var> state(stack.layers.size());
  for (std::size_t l = 0; l < stack.layers.size(); ++l)
    state[l] = g.constant(Mat::Zero(stack.layers[l].hidden_dim, batch));

  EncodedSequence out;
  out.states.reserve(embedded.size());
  for (std::size_t t = 0; t < embedded.size(); ++t) {
    const Mat m = mask.row(static_cast<Eigen::Index>(t));
    const bool all_real = (m.array() != 0.0).all();
    Var input = embedded[t];
    for (std::size_t l = 0; l < stack.layers.size(); ++l) {
      Var next = gru_step(g, ps, stack.layers[l], state[l], input);
      state[l] = all_real ? next : ad::blend(m, next, state[l]);
      input = state[l];
    }
    out.states.push_back(state.back());
  }
  out.final_states = state;
  return out;
}

PooledSequence self_attention_pool(ad::Graph& g, const ParamStore& ps, const AttnPool& pool,
                                   const std::vector<Var>& states, const Mat& mask) {
  if (states.empty()) throw ShapeError("self_attention_pool: no states");
  if (mask.rows() != static_cast<Eigen::Index>(states.size())) throw ShapeError("self_attention_pool: mask rows");
  for (Eigen::Index c = 0; c < mask.cols(); ++c)
    if ((mask.col(c).array() == 0.0).all()) throw InvalidInput("self_attention_pool: every position is masked");
  Var W = g.param(ps, pool.W);
  Var v = g.param(ps, pool.v);
  std::vector<Var> scores;
  scores.reserve(states.size());
  for (Var h : states) scores.push_back(ad::matmul(v, ad::tanh(ad::matmul(W, h))));
  Var weights = ad::masked_softmax_cols(ad::stack_rows(scores), mask);
  return PooledSequence{ad::weighted_sum(states, weights), weights};
}

}  // namespace tgeacm
