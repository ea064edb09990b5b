#include "tgeacm/reference.hpp"

#include <cmath>

#include "tgeacm/error.hpp"

namespace tgeacm {

namespace {

using R = long double;
using V = std::vector<R>;

struct M {
  Eigen::Index rows = 0, cols = 0;
  std::vector<R> a;  // row-major
  R operator()(Eigen::Index r, Eigen::Index c) const { return a[static_cast<std::size_t>(r * cols + c)]; }
};

M load(const ParamStore& ps, ParamId id) {
  const Mat& m = ps[id];
  M out{m.rows(), m.cols(), {}};
  out.a.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.a.push_back(static_cast<R>(m(r, c)));
  return out;
}

V mv(const M& m, const V& x) {
  V y(static_cast<std::size_t>(m.rows), 0);
  for (Eigen::Index r = 0; r < m.rows; ++r) {
    R s = 0;
    for (Eigen::Index c = 0; c < m.cols; ++c) s += m(r, c) * x[static_cast<std::size_t>(c)];
    y[static_cast<std::size_t>(r)] = s;
  }
  return y;
}

V plus(V a, const V& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

V column(const M& m) {
  V v(static_cast<std::size_t>(m.rows));
  for (Eigen::Index r = 0; r < m.rows; ++r) v[static_cast<std::size_t>(r)] = m(r, 0);
  return v;
}

V cat(V a, const V& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

R sigm(R x) { return 1 / (1 + std::exp(-x)); }
R softplus(R x) { return std::max<R>(x, 0) + std::log1p(std::exp(-std::abs(x))); }

struct Gru {
  M Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh;
  V step(const V& h, const V& x) const {
    const V az = plus(plus(mv(Wz, x), mv(Uz, h)), column(bz));
    const V ar = plus(plus(mv(Wr, x), mv(Ur, h)), column(br));
    V rh(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) rh[i] = sigm(ar[i]) * h[i];
    const V ac = plus(plus(mv(Wh, x), mv(Uh, rh)), column(bh));
    V out(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      const R z = sigm(az[i]);
      out[i] = (1 - z) * h[i] + z * std::tanh(ac[i]);
    }
    return out;
  }
};

std::vector<Gru> load_stack(const ParamStore& ps, const GruStack& s) {
  std::vector<Gru> out;
  for (const auto& l : s.layers)
    out.push_back(Gru{load(ps, l.W_z), load(ps, l.U_z), load(ps, l.b_z), load(ps, l.W_r), load(ps, l.U_r),
                      load(ps, l.b_r), load(ps, l.W_h), load(ps, l.U_h), load(ps, l.b_h)});
  return out;
}

struct Encoded {
  std::vector<V> states;  // top layer per position
  std::vector<V> final_states;
};

Encoded encode(const std::vector<Gru>& stack, const std::vector<V>& xs) {
  const std::size_t h = static_cast<std::size_t>(stack.front().Uz.rows);
  std::vector<V> state(stack.size(), V(h, 0));
  Encoded e;
  for (const V& x : xs) {
    V input = x;
    for (std::size_t l = 0; l < stack.size(); ++l) {
      state[l] = stack[l].step(state[l], input);
      input = state[l];
    }
    e.states.push_back(state.back());
  }
  e.final_states = state;
  return e;
}

V softmax(const V& s) {
  R mx = s.front();
  for (R x : s) mx = std::max(mx, x);
  V p(s.size());
  R z = 0;
  for (std::size_t i = 0; i < s.size(); ++i) z += p[i] = std::exp(s[i] - mx);
  for (R& x : p) x /= z;
  return p;
}

V attend(const std::vector<V>& states, const V& weights) {
  V out(states.front().size(), 0);
  for (std::size_t t = 0; t < states.size(); ++t)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += weights[t] * states[t][i];
  return out;
}

V pool(const M& W, const M& v, const std::vector<V>& states) {
  V scores;
  for (const V& h : states) {
    V a = mv(W, h);
    for (R& x : a) x = std::tanh(x);
    scores.push_back(mv(v, a)[0]);
  }
  return attend(states, softmax(scores));
}

V affine(const M& W, const M& b, const V& x) { return plus(mv(W, x), column(b)); }

V fuse(const M& W, const M& b, const V& a, const V& c) {
  const V gate = affine(W, b, cat(a, c));
  V out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const R w = sigm(gate[i]);
    out[i] = w * std::tanh(a[i]) + (1 - w) * std::tanh(c[i]);
  }
  return out;
}

R xent(const V& logits, const V& labels, ad::EmotionXent mode) {
  R loss = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    loss += labels[k] * softplus(-logits[k]);
    if (mode == ad::EmotionXent::Binary) loss += (1 - labels[k]) * softplus(logits[k]);
  }
  return loss;
}

R bernoulli_kl(const V& a, const V& b) {
  R kl = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const R p = sigm(a[j]);
    kl += p * (softplus(-b[j]) - softplus(-a[j])) + (1 - p) * (softplus(b[j]) - softplus(a[j]));
  }
  return kl;
}

std::vector<V> embed(const M& table, const std::vector<std::vector<int>>& ids, const Mat& mask, Eigen::Index b) {
  std::vector<V> out;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (mask(static_cast<Eigen::Index>(t), b) == 0.0) continue;
    V row(static_cast<std::size_t>(table.cols));
    for (Eigen::Index c = 0; c < table.cols; ++c) row[static_cast<std::size_t>(c)] = table(ids[t][static_cast<std::size_t>(b)], c);
    out.push_back(std::move(row));
  }
  return out;
}

V labels_of(const Mat& m, Eigen::Index b) {
  V v(kNumEmotions);
  for (int k = 0; k < kNumEmotions; ++k) v[static_cast<std::size_t>(k)] = m(k, b);
  return v;
}

}  // namespace

ReferenceLosses reference_losses(const Model& model, const Batch& batch) {
  const ParamStore& ps = model.params;
  const SelectorParams& s = model.selector;
  const GeneratorParams& g = model.generator;
  const SelectorOptions& opts = model.config.selector;

  const M sem = load(ps, model.semantic_table), emo = load(ps, model.emotional_table);
  const auto prior_gru = load_stack(ps, s.prior_gru), inter_gru = load_stack(ps, s.inter_gru),
             recog_gru = load_stack(ps, s.recog_gru);
  const M ppW = load(ps, s.prior_pool.W), ppv = load(ps, s.prior_pool.v);
  const M ipW = load(ps, s.inter_pool.W), ipv = load(ps, s.inter_pool.v);
  const M rpW = load(ps, s.recog_pool.W), rpv = load(ps, s.recog_pool.v);
  const M pfW = load(ps, s.prior_fusion.W), pfb = load(ps, s.prior_fusion.b);
  const M rfW = load(ps, s.recog_fusion.W), rfb = load(ps, s.recog_fusion.b);
  const M phW = load(ps, s.post_head.W), phb = load(ps, s.post_head.b);
  const M prW = load(ps, s.prior_head.W), prb = load(ps, s.prior_head.b);
  const M rhW = load(ps, s.recog_head.W), rhb = load(ps, s.recog_head.b);
  const M klW = load(ps, s.kl_proj.W), klb = load(ps, s.kl_proj.b);

  const auto enc_gru = load_stack(ps, g.encoder), dec_gru = load_stack(ps, g.decoder);
  const M We = load(ps, g.W_e), av = load(ps, g.v), W1 = load(ps, g.W_1), W2 = load(ps, g.W_2), W3 = load(ps, g.W_3),
          W4 = load(ps, g.W_4), Wout = load(ps, g.W_out), bout = load(ps, g.b_out);
  std::vector<M> Winit;
  for (ParamId id : g.W_init) Winit.push_back(load(ps, id));

  ReferenceLosses out;
  R nll_sum = 0;
  R tokens = 0;
  const auto B = static_cast<Eigen::Index>(batch.size);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto post_sem = embed(sem, batch.post_ids, batch.post_mask, b);
    const auto post_emo = embed(emo, batch.post_ids, batch.post_mask, b);
    const auto resp_sem = embed(sem, batch.response_ids, batch.response_mask, b);

    const V h_p = pool(ppW, ppv, encode(prior_gru, post_emo).states);
    const V h_e = pool(ipW, ipv, encode(inter_gru, post_sem).states);
    const V h_r = pool(rpW, rpv, encode(recog_gru, resp_sem).states);
    const V h_pe = fuse(pfW, pfb, h_p, h_e);
    const V h_re = fuse(rfW, rfb, h_r, h_e);

    const V post_logits = affine(phW, phb, h_p);
    const V prior_logits = affine(prW, prb, h_pe);
    const V recog_logits = affine(rhW, rhb, h_re);
    const V post_labels = labels_of(batch.post_labels, b), resp_labels = labels_of(batch.response_labels, b);
    out.post += xent(post_logits, post_labels, opts.xent);
    out.prior += xent(prior_logits, resp_labels, opts.xent);
    out.recognition += xent(recog_logits, resp_labels, opts.xent);
    const V kp = affine(klW, klb, h_pe), kr = affine(klW, klb, h_re);
    out.kl += opts.kl_direction == KlDirection::PriorToRecognition ? bernoulli_kl(kp, kr) : bernoulli_kl(kr, kp);

    // Generator, fed the recognition emotion vector.
    V e(kNumEmotions);
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = sigm(recog_logits[k]);
    const V Ve = mv(We, e);
    const V W3Ve = mv(W3, Ve);
    const Encoded enc = encode(enc_gru, post_sem);
    std::vector<V> keys;
    for (const V& h : enc.states) keys.push_back(mv(W1, h));
    std::vector<V> state;
    for (std::size_t l = 0; l < Winit.size(); ++l) {
      V s0 = mv(Winit[l], enc.final_states[l]);
      for (R& x : s0) x = std::tanh(x);
      state.push_back(s0);
    }
    for (std::size_t t = 0; t < batch.decoder.inputs.size(); ++t) {
      if (batch.decoder.mask(static_cast<Eigen::Index>(t), b) == 0.0) continue;
      const int prev = batch.decoder.inputs[t][static_cast<std::size_t>(b)];
      V y(static_cast<std::size_t>(sem.cols));
      for (Eigen::Index c = 0; c < sem.cols; ++c) y[static_cast<std::size_t>(c)] = sem(prev, c);
      V input = cat(y, Ve);
      for (std::size_t l = 0; l < dec_gru.size(); ++l) {
        state[l] = dec_gru[l].step(state[l], input);
        input = state[l];
      }
      const V& st = state.back();
      const V query = plus(mv(W2, st), W3Ve);
      V scores;
      for (const V& k : keys) {
        V a = plus(k, query);
        for (R& x : a) x = std::tanh(x);
        scores.push_back(mv(av, a)[0]);
      }
      const V ctx = attend(enc.states, softmax(scores));
      const V fused = mv(W4, cat(st, ctx));
      state.back() = fused;
      const V logits = affine(Wout, bout, fused);
      R mx = logits.front();
      for (R x : logits) mx = std::max(mx, x);
      R z = 0;
      for (R x : logits) z += std::exp(x - mx);
      const int target = batch.decoder.targets[t][static_cast<std::size_t>(b)];
      nll_sum += std::log(z) + mx - logits[static_cast<std::size_t>(target)];
      tokens += 1;
    }
  }
  const R n = static_cast<R>(B);
  out.post /= n;
  out.prior /= n;
  out.recognition /= n;
  out.kl /= n;
  if (tokens == 0) throw InvalidInput("reference loss: no target tokens");
  out.nll = nll_sum / tokens;
  return out;
}

}  // namespace tgeacm
