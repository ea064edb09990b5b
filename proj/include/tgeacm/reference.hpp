#pragma once

// Plain-loop re-implementation of the full objective in long double, one
// example at a time. Slow; it is the finite-difference side of the gradient
// check (double rounding of L swamps differences of small gradients) and a
// forward-pass oracle for the batched code.

#include "tgeacm/model.hpp"

namespace tgeacm {

struct ReferenceLosses {
  long double post = 0;
  long double prior = 0;
  long double recognition = 0;
  long double kl = 0;
  long double nll = 0;
  long double emotion() const { return post + prior + recognition + kl; }
};

ReferenceLosses reference_losses(const Model& model, const Batch& batch);

}  // namespace tgeacm
