#include "nstlab/eval/evaluate.hpp"

namespace nstlab::eval {

double EvalResult::wer_percent(std::size_t domain) const {
  auto it = per_domain.find(domain);
  if (it == per_domain.end()) throw core::ContractViolation("domain " + std::to_string(domain) + " was not evaluated");
  return 100.0 * it->second.wer();
}

const synth::Tokens& reference_of(const synth::UtteranceRecord& r) {
  if (!r.oracle_tokens.empty()) return r.oracle_tokens;
  if (r.tokens && r.label_source == synth::LabelSource::kHuman) return *r.tokens;
  throw core::ContractViolation("utterance " + r.utt_id + " has no reference transcript");
}

namespace {

void check_references(const synth::Manifest& manifest) {
  if (manifest.records.empty()) throw core::ContractViolation("evaluate: empty manifest");
  for (const auto& r : manifest.records) reference_of(r);
}

void score(EvalResult& result, const synth::UtteranceRecord& r, const synth::Tokens& hyp) {
  auto w = wer(reference_of(r), hyp);
  result.per_domain[r.domain] += w;
  result.overall += w;
}

}  // namespace

EvalResult evaluate_with(const synth::Manifest& manifest, const Decoder& decoder) {
  check_references(manifest);
  EvalResult result;
  for (const auto& r : manifest.records) score(result, r, decoder(r));
  return result;
}

EvalResult evaluate(const model::ModelSpec& spec, const core::ParameterSet<float>& params,
                    const synth::Manifest& manifest, const synth::FrontEnd& fe, const decode::DecodeOptions& options,
                    std::size_t threads) {
  check_references(manifest);
  std::vector<core::Tensor<float>> inputs;
  inputs.reserve(manifest.records.size());
  for (const auto& r : manifest.records) inputs.push_back(synth::load_model_input(manifest, r, fe));
  auto decoded = decode::decode_all(spec, params, inputs, options, threads);
  EvalResult result;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& hyp = decoded.hypotheses[i];
    if (!hyp) ++result.decode_failures;
    score(result, manifest.records[i], hyp ? hyp->tokens : synth::Tokens{});
  }
  return result;
}

}  // namespace nstlab::eval
