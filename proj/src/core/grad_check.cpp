#include "nstlab/core/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nstlab/core/prng.hpp"

namespace nstlab::core {

template <typename T>
GradCheckResult grad_check(const std::function<Var<T>(const ParamVars<T>&)>& loss_fn,
                           const ParameterSet<T>& params, const GradCheckOptions& options) {
  if (!(options.epsilon >= 1e-6 && options.epsilon <= 1e-3)) {
    throw ContractViolation("grad_check: epsilon must be in [1e-6, 1e-3]");
  }
  GradCheckResult result;

  std::vector<Tensor<T>> analytic;
  {
    ParamVars<T> vars(params);
    Var<T> loss = loss_fn(vars);
    backward(loss);
    analytic = vars.gradients();
  }

  ParameterSet<T> probe = params;
  Prng rng(options.seed, 0x67726164ULL);
  auto evaluate = [&]() -> double {
    ParamVars<T> vars(probe);
    return static_cast<double>(loss_fn(vars).item());
  };

  for (std::size_t p = 0; p < params.count(); ++p) {
    const auto& entry = params.entries()[p];
    if (entry.frozen) continue;
    std::vector<std::size_t> idx(entry.value.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (options.max_entries_per_param > 0 && idx.size() > options.max_entries_per_param) {
      rng.shuffle(idx);
      idx.resize(options.max_entries_per_param);
      std::sort(idx.begin(), idx.end());
    }
    auto& slot = probe.entries()[p].value.data;
    for (std::size_t i : idx) {
      T original = slot[i];
      double fp = 0, fm = 0;
      try {
        slot[i] = original + static_cast<T>(options.epsilon);
        fp = evaluate();
        slot[i] = original - static_cast<T>(options.epsilon);
        fm = evaluate();
      } catch (const NonFiniteError& e) {
        slot[i] = original;
        std::ostringstream os;
        os << "non-finite loss perturbing " << entry.name << "[" << i << "]: " << e.what();
        result.failed = true;
        result.failure = os.str();
        return result;
      }
      slot[i] = original;
      double fd = (fp - fm) / (2.0 * options.epsilon);
      double ad = static_cast<double>(analytic[p].data[i]);
      double denom = std::max({std::abs(ad), std::abs(fd), 1e-8});
      double err = std::abs(ad - fd) / denom;
      ++result.entries_checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_param = entry.name;
        result.worst_index = i;
        result.worst_analytic = ad;
        result.worst_numeric = fd;
      }
    }
  }
  return result;
}

template GradCheckResult grad_check(const std::function<Var<float>(const ParamVars<float>&)>&,
                                    const ParameterSet<float>&, const GradCheckOptions&);
template GradCheckResult grad_check(const std::function<Var<double>(const ParamVars<double>&)>&,
                                    const ParameterSet<double>&, const GradCheckOptions&);

}  // namespace nstlab::core
