#pragma once

#include <functional>
#include <map>

#include "nstlab/core/params.hpp"
#include "nstlab/decode/greedy.hpp"
#include "nstlab/eval/wer.hpp"
#include "nstlab/synth/corpus.hpp"
#include "nstlab/synth/manifest.hpp"

namespace nstlab::eval {

struct EvalResult {
  std::map<std::size_t, WerResult> per_domain;
  WerResult overall;
  // Utterances whose decode failed; scored as empty hypotheses.
  std::size_t decode_failures = 0;

  // WER of one domain in percent; throws if the domain was not evaluated.
  double wer_percent(std::size_t domain) const;
};

// References are oracle tokens when present, otherwise the human labels.
const synth::Tokens& reference_of(const synth::UtteranceRecord& r);

using Decoder = std::function<synth::Tokens(const synth::UtteranceRecord&)>;

// Scores any decoder against a manifest; the manifest must carry references.
EvalResult evaluate_with(const synth::Manifest& manifest, const Decoder& decoder);

EvalResult evaluate(const model::ModelSpec& spec, const core::ParameterSet<float>& params,
                    const synth::Manifest& manifest, const synth::FrontEnd& fe, const decode::DecodeOptions& options = {},
                    std::size_t threads = 0);

}  // namespace nstlab::eval
