#pragma once

#include <span>
#include <vector>

namespace nstlab::eval {

struct WerResult {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t ref_tokens = 0;
  // Set when the reference was empty; wer then equals the insertion count.
  bool empty_reference = false;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  double wer() const;
  WerResult& operator+=(const WerResult& o);
  bool operator==(const WerResult&) const = default;
};

// Unit-cost Levenshtein alignment. Among optimal alignments the backtrace
// prefers substitution (or match), then insertion, then deletion.
WerResult wer(std::span<const int> ref, std::span<const int> hyp);

}  // namespace nstlab::eval
