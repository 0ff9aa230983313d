#include "nstlab/eval/wer.hpp"

#include <algorithm>

namespace nstlab::eval {

double WerResult::wer() const {
  if (ref_tokens == 0) return static_cast<double>(insertions);
  return static_cast<double>(errors()) / static_cast<double>(ref_tokens);
}

WerResult& WerResult::operator+=(const WerResult& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  ref_tokens += o.ref_tokens;
  empty_reference = empty_reference || o.empty_reference;
  return *this;
}

WerResult wer(std::span<const int> ref, std::span<const int> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i, j - 1) + 1, at(i - 1, j) + 1});
    }
  }
  WerResult r;
  r.ref_tokens = n;
  r.empty_reference = n == 0;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++r.substitutions;
      --i, --j;
    } else if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++r.insertions;
      --j;
    } else {
      ++r.deletions;
      --i;
    }
  }
  return r;
}

}  // namespace nstlab::eval
