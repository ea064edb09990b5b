#pragma once

#include <string>

#include "tgeacm/model.hpp"

namespace tgeacm {

// Prior-network response emotion e_r for a post (no response needed).
EmotionVector predict_response_emotion(const Model& model, const TokenSequence& post);

// Greedy decoding conditioned on the prior emotion vector.
TokenSequence respond(const Model& model, const TokenSequence& post, int max_len);

// Whitespace tokenisation + vocabulary lookup (unknown words -> UNK).
TokenSequence encode_post(const Model& model, const std::string& text);

}  // namespace tgeacm
