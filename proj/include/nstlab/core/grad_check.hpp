#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "nstlab/core/params.hpp"

namespace nstlab::core {

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Entries checked per parameter tensor; 0 checks every entry. Larger
  // tensors are sampled with a seeded generator.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  // Set when the loss was non-finite at a perturbed point.
  bool failed = false;
  std::string failure;
};

// Central finite differences against reverse-mode gradients. The error for one
// entry is |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8); the result is the max
// over checked entries. Frozen parameters are skipped.
template <typename T>
GradCheckResult grad_check(const std::function<Var<T>(const ParamVars<T>&)>& loss_fn,
                           const ParameterSet<T>& params, const GradCheckOptions& options = {});

}  // namespace nstlab::core
