#pragma once

// Emotion-biased response generator.
//
//   V_e   = W_e e                                   soft emotion injection
//   u_i   = v . tanh(W_1 h_i + W_2 s_t + W_3 V_e)   emotion-biased attention
//   c_t   = sum_i softmax(u)_i h_i
//   s_t   = GRU(s'_{t-1}, [y_{t-1}; V_e])
//   s'_t  = W_4 [s_t; c_t]
//   logits = W_out s'_t + b_out
//
// Without an emotion vector the same code runs as the plain attention
// seq2seq baseline: the decoder input is [y_{t-1}; 0] and the W_3 term is
// dropped. A generator with W_3 = 0 fed e = 0 reproduces it bit for bit.

#include <optional>

#include "tgeacm/corpus.hpp"
#include "tgeacm/encoders.hpp"
#include "tgeacm/selector.hpp"

namespace tgeacm {

struct GeneratorDims {
  int embed_dim = 0;
  int emotion_dim = 0;
  int hidden_dim = 0;
  int layers = 1;
  int attn_width = 0;
  int vocab_size = 0;
};

struct GeneratorParams {
  GruStack encoder;
  ParamId W_e;  // (d_e x K)
  ParamId v;    // (1 x a)
  ParamId W_1;  // (a x h)
  ParamId W_2;  // (a x h)
  ParamId W_3;  // (a x d_e)
  ParamId W_4;  // (h x 2h)
  GruStack decoder;             // input width d + d_e
  std::vector<ParamId> W_init;  // per decoder layer (h x h)
  ParamId W_out;                // (|V| x h)
  ParamId b_out;                // (|V| x 1)
};

GeneratorParams make_generator(ParamStore& ps, const GeneratorDims& dims, Rng& rng);
GeneratorParams bind_generator(const ParamStore& ps, int layers);

ad::Var embed_emotion(ad::Graph& g, const ParamStore& ps, const GeneratorParams& gen, ad::Var emotion);
Vec embed_emotion(const ParamStore& ps, const GeneratorParams& gen, const EmotionVector& emotion);

struct AttentionMemory {
  std::vector<ad::Var> states;  // h_i
  std::vector<ad::Var> keys;    // W_1 h_i
  Mat mask;
};

AttentionMemory attention_memory(ad::Graph& g, const ParamStore& ps, const GeneratorParams& gen,
                                 const std::vector<ad::Var>& states, const Mat& mask);

struct Attention {
  ad::Var weights;  // (T x B)
  ad::Var context;  // (h x B)
};

// emotion_embedding == nullopt drops the W_3 term (plain attention).
Attention emotion_biased_attention(ad::Graph& g, const ParamStore& ps, const GeneratorParams& gen,
                                   const AttentionMemory& memory, ad::Var s_t,
                                   std::optional<ad::Var> emotion_embedding);

struct DecoderState {
  std::vector<ad::Var> layers;  // recurrent input per layer; back() is s'_{t-1}
};

// s'_0 per layer = tanh(W_init h_T) from the encoder's final states.
DecoderState initial_decoder_state(ad::Graph& g, const ParamStore& ps, const GeneratorParams& gen,
                                   const std::vector<ad::Var>& encoder_final);

struct DecoderStep {
  DecoderState next;
  ad::Var s;        // s_t (top GRU layer)
  ad::Var s_fused;  // s'_t
  ad::Var logits;   // (|V| x B)
  Attention attention;
};

DecoderStep decoder_step(ad::Graph& g, const ParamStore& ps, const GeneratorParams& gen, const DecoderState& prev,
                         ad::Var prev_token_embedding, std::optional<ad::Var> emotion_embedding,
                         const AttentionMemory& memory);

// Teacher-forcing layout: inputs are BOS + gold, targets gold + EOS.
struct DecoderTargets {
  std::vector<std::vector<int>> inputs;   // [step][batch]
  std::vector<std::vector<int>> targets;  // [step][batch]
  Mat mask;                               // (steps x B)
};

DecoderTargets teacher_forcing(const std::vector<const TokenSequence*>& responses);

struct GeneratorTrace {
  EncodedSequence encoded;
  std::vector<DecoderStep> steps;
};

// emotion: (K x B) probabilities, or nullopt for the plain baseline.
GeneratorTrace generator_forward(ad::Graph& g, const ParamStore& ps, const GeneratorParams& gen,
                                 ad::Var semantic_table, const EmbeddedBatch& post_semantic,
                                 const DecoderTargets& decoder, std::optional<ad::Var> emotion);

// Mean over unmasked target positions of -log softmax(logits)[target].
ad::Var nll_loss(ad::Graph& g, const std::vector<ad::Var>& logits, const std::vector<std::vector<int>>& targets,
                 const Mat& mask);
ad::Var nll_loss(ad::Graph& g, const GeneratorTrace& trace, const DecoderTargets& decoder);

// Greedy decoding from BOS until EOS or max_len tokens (EOS not included).
// Ties go to the lowest token id. emotion == nullopt decodes with the plain baseline.
TokenSequence greedy_decode(const ParamStore& ps, const GeneratorParams& gen, ParamId semantic_table,
                            const TokenSequence& post, const std::optional<EmotionVector>& emotion, int max_len);

}  // namespace tgeacm
