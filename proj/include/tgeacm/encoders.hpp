#pragma once

// GRU sequence encoding and self-attention pooling.
//
// GRU cell (input x, previous state h):
//   z  = sigmoid(W_z x + U_z h + b_z)          update gate
//   r  = sigmoid(W_r x + U_r h + b_r)          reset gate
//   c  = tanh(W_h x + U_h (r * h) + b_h)       candidate
//   h' = (1 - z) * h + z * c
//
// Self-attention pooling over states h_1..h_T:
//   score_i = v . tanh(W h_i),  a = masked softmax(score),  pooled = sum_i a_i h_i

#include <string>
#include <vector>

#include "tgeacm/autodiff.hpp"
#include "tgeacm/params.hpp"
#include "tgeacm/rng.hpp"

namespace tgeacm {

inline constexpr double kParamInitRange = 0.08;

struct GruLayer {
  ParamId W_z, U_z, b_z;
  ParamId W_r, U_r, b_r;
  ParamId W_h, U_h, b_h;
  int input_dim = 0;
  int hidden_dim = 0;
};

struct GruStack {
  std::vector<GruLayer> layers;
  int hidden_dim() const { return layers.empty() ? 0 : layers.back().hidden_dim; }
  int input_dim() const { return layers.empty() ? 0 : layers.front().input_dim; }
};

struct AttnPool {
  ParamId W;  // (a x h)
  ParamId v;  // (1 x a)
};

GruLayer make_gru_layer(ParamStore& ps, const std::string& prefix, int input_dim, int hidden_dim, Rng& rng);
GruStack make_gru_stack(ParamStore& ps, const std::string& prefix, int input_dim, int hidden_dim, int layers,
                        Rng& rng);
AttnPool make_attn_pool(ParamStore& ps, const std::string& prefix, int hidden_dim, int width, Rng& rng);

// Views are re-derived from parameter names (used after loading a checkpoint).
GruStack bind_gru_stack(const ParamStore& ps, const std::string& prefix, int layers);
AttnPool bind_attn_pool(const ParamStore& ps, const std::string& prefix);

// One batched GRU step: h_prev (h x B), x (in x B) -> (h x B).
ad::Var gru_step(ad::Graph& g, const ParamStore& ps, const GruLayer& layer, ad::Var h_prev, ad::Var x);

// Single-vector convenience form.
Vec gru_step(const ParamStore& ps, const GruLayer& layer, const Vec& h_prev, const Vec& x);

struct EncodedSequence {
  std::vector<ad::Var> states;        // top-layer state per position (h x B)
  std::vector<ad::Var> final_states;  // last state of every layer (h x B)
};

// Left-to-right recurrence from a zero state. mask is (T x B), 1 = real
// token; at masked positions every layer keeps its previous state.
EncodedSequence encode_sequence(ad::Graph& g, const ParamStore& ps, const GruStack& stack,
                                const std::vector<ad::Var>& embedded, const Mat& mask);

struct PooledSequence {
  ad::Var pooled;   // (h x B)
  ad::Var weights;  // (T x B), zero on masked positions
};

PooledSequence self_attention_pool(ad::Graph& g, const ParamStore& ps, const AttnPool& pool,
                                   const std::vector<ad::Var>& states, const Mat& mask);

}  // namespace tgeacm
