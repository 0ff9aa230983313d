#include "nstlab/loss/just.hpp"

#include "nstlab/core/ops.hpp"
#include "nstlab/loss/rnnt.hpp"
#include "nstlab/loss/ssl.hpp"
#include "nstlab/model/network.hpp"

namespace nstlab::loss {

using core::ContractViolation;

template <typename T>
Var<T> transducer_loss(const model::ModelSpec& spec, const core::ParamVars<T>& params, const Var<T>& encoded,
                       std::span<const int> tokens) {
  auto pred = model::label_encode(spec, params, tokens);
  auto lp = model::joint(spec, params, encoded, pred);
  return rnnt_loss(lp, encoded.shape()[0], tokens);
}

namespace {

template <typename T>
Var<T> zero() {
  return Var<T>::constant(Tensor<T>({1}));
}

template <typename T>
Var<T> mean_of(const std::vector<Var<T>>& terms) {
  Var<T> acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = core::add(acc, terms[i]);
  return core::scale(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

template <typename T>
JustOutput<T> just_loss(const model::ModelSpec& spec, const core::ParamVars<T>& params,
                        std::span<const Example<T>> batch, const JustWeights& weights, const SslConfig& ssl,
                        core::Prng& rng, double dropout) {
  if (weights.rnnt < 0 || weights.contrastive < 0 || weights.masked < 0)
    throw ContractViolation("just_loss: weights must be non-negative");
  if (weights.rnnt == 0 && !weights.ssl_active()) throw ContractViolation("just_loss: all weights are zero");
  if (weights.ssl_active() && !spec.ssl.enabled)
    throw ContractViolation("just_loss: self-supervised weights need a model with the ssl branch");
  if (batch.empty()) throw ContractViolation("just_loss: empty batch");

  JustOutput<T> out;
  std::vector<Var<T>> rnnt_terms;
  struct SslItem {
    std::size_t index;
    std::vector<std::size_t> mask;
    Var<T> context;
    Var<T> features;
  };
  std::vector<SslItem> ssl_items;
  std::vector<Var<T>> targets;
  const std::size_t target_width = spec.input_dim - spec.domain_dims;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    auto x = Var<T>::constant(ex.input);
    if (ex.tokens && weights.rnnt > 0) {
      ++out.labeled;
      auto enc = model::encode(spec, params, x, model::EncodeOptions{.mask_positions = {}, .rnnt_head = true, .w2v_head = false, .dropout = dropout, .rng = &rng});
      auto l = transducer_loss(spec, params, enc.rnnt, *ex.tokens);
      if (spec.cascade) l = core::scale(core::add(l, transducer_loss(spec, params, enc.second_pass, *ex.tokens)), 0.5);
      rnnt_terms.push_back(l);
    }
    if (weights.ssl_active()) {
      const std::size_t frames = ex.input.dim(0);
      auto mask = choose_mask(frames, ssl.mask_span, ssl.mask_prob, ssl.distractors + 1, rng);
      if (mask.size() <= ssl.distractors) continue;
      auto enc = model::encode(spec, params, x, model::EncodeOptions{.mask_positions = mask, .rnnt_head = false, .w2v_head = true, .dropout = dropout, .rng = &rng});
      auto context = core::linear(enc.w2v, params["ssl.context.w"], params["ssl.context.b"]);
      targets.push_back(
          core::linear(core::slice_cols(x, 0, target_width), params["ssl.target.w"], params["ssl.target.b"]));
      ssl_items.push_back({i, std::move(mask), context, enc.w2v});
    }
  }

  out.rnnt_term = zero<T>();
  if (!rnnt_terms.empty()) {
    auto m = mean_of(rnnt_terms);
    out.rnnt = static_cast<double>(m.item());
    out.rnnt_term = core::scale(m, weights.rnnt);
  }

  out.contrastive_term = zero<T>();
  out.masked_term = zero<T>();
  out.diversity_term = zero<T>();
  out.ssl_items = ssl_items.size();
  if (!ssl_items.empty()) {
    const auto& codebook = params["ssl.codebook"].value();
    auto all_targets = core::concat_rows(targets);
    auto q = quantize(codebook, all_targets, ssl.assignment_temperature);
    out.targets = all_targets.value();
    out.target_ids = q.ids;
    std::vector<Var<T>> con, mlm;
    std::size_t offset = 0;
    for (auto& item : ssl_items) {
      const std::size_t frames = item.context.shape()[0];
      auto quantized = core::slice_rows(q.quantized, offset, frames);
      std::span<const std::size_t> ids(q.ids.data() + offset, frames);
      offset += frames;
      if (weights.contrastive > 0)
        con.push_back(contrastive_loss(item.context, quantized, item.mask, ssl.distractors, ssl.kappa, rng));
      if (weights.masked > 0)
        mlm.push_back(masked_prediction_loss(item.features, ids, item.mask, params["ssl.mlm.w"], params["ssl.mlm.b"]));
    }
    if (!con.empty()) {
      auto m = mean_of(con);
      out.contrastive = static_cast<double>(m.item());
      out.contrastive_term = core::scale(m, weights.contrastive);
    }
    if (!mlm.empty()) {
      auto m = mean_of(mlm);
      out.masked = static_cast<double>(m.item());
      out.masked_term = core::scale(m, weights.masked);
    }
    out.diversity = static_cast<double>(q.diversity.item());
    out.diversity_term = core::scale(q.diversity, ssl.diversity_weight);
  }
  out.total = core::add(core::add(out.rnnt_term, out.contrastive_term), core::add(out.masked_term, out.diversity_term));
  return out;
}

#define NSTLAB_INSTANTIATE(T)                                                                                    \
  template Var<T> transducer_loss(const model::ModelSpec&, const core::ParamVars<T>&, const Var<T>&,            \
                                  std::span<const int>);                                                         \
  template JustOutput<T> just_loss(const model::ModelSpec&, const core::ParamVars<T>&,                          \
                                   std::span<const Example<T>>, const JustWeights&, const SslConfig&,           \
                                   core::Prng&, double);

NSTLAB_INSTANTIATE(float)
NSTLAB_INSTANTIATE(double)

#undef NSTLAB_INSTANTIATE

}  // namespace nstlab::loss
