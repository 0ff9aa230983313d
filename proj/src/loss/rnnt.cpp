#include "nstlab/loss/rnnt.hpp"

#include <cmath>
#include <limits>

#include "nstlab/core/ops.hpp"

namespace nstlab::loss {

using core::ContractViolation;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Views a flat [frames, labels + 1, width] array of log-probabilities.
struct LogProbView {
  const double* data;
  std::size_t labels;
  std::size_t width;
  double at(std::size_t t, std::size_t u, std::size_t k) const { return data[(t * (labels + 1) + u) * width + k]; }
};

void check_inputs(std::size_t frames, std::size_t width, std::span<const int> labels) {
  if (frames == 0) throw ContractViolation("rnnt_loss: zero frames");
  if (width < 2) throw ContractViolation("rnnt_loss: need blank plus at least one label");
  for (int l : labels)
    if (l < 1 || static_cast<std::size_t>(l) >= width)
      throw ContractViolation("rnnt_loss: label " + std::to_string(l) + " outside [1, " + std::to_string(width - 1) +
                              "]");
}

// Runs both recursions and writes d loss / d log_probs into `grad`.
Lattice run_lattice(const LogProbView& lp, std::size_t frames, std::span<const int> labels, double* grad) {
  const std::size_t u_max = labels.size();
  Lattice lat;
  lat.frames = frames;
  lat.labels = u_max;
  lat.alpha = Tensor<double>({frames + 1, u_max + 1}, kNegInf);
  lat.beta = Tensor<double>({frames + 1, u_max + 1}, kNegInf);
  auto& a = lat.alpha;
  auto& b = lat.beta;
  auto label = [&](std::size_t u) { return static_cast<std::size_t>(labels[u]); };

  a.at(0, 0) = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t u = 0; u <= u_max; ++u) {
      if (t == 0 && u == 0) continue;
      double from_blank = t > 0 ? a.at(t - 1, u) + lp.at(t - 1, u, 0) : kNegInf;
      double from_label = u > 0 ? a.at(t, u - 1) + lp.at(t, u - 1, label(u - 1)) : kNegInf;
      a.at(t, u) = core::logsumexp2(from_blank, from_label);
    }
  }
  for (std::size_t u = 0; u <= u_max; ++u) a.at(frames, u) = a.at(frames - 1, u) + lp.at(frames - 1, u, 0);

  b.at(frames, u_max) = 0.0;
  for (std::size_t t = frames; t-- > 0;) {
    for (std::size_t u = u_max + 1; u-- > 0;) {
      double via_blank = b.at(t + 1, u) + lp.at(t, u, 0);
      double via_label = u < u_max ? b.at(t, u + 1) + lp.at(t, u, label(u)) : kNegInf;
      b.at(t, u) = core::logsumexp2(via_blank, via_label);
    }
  }
  lat.log_prob_alpha = a.at(frames, u_max);
  lat.log_prob_beta = b.at(0, 0);
  if (!std::isfinite(lat.log_prob_alpha)) throw core::NonFiniteError("rnnt_loss: alignment lattice has zero mass");

  const double total = lat.log_prob_alpha;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t u = 0; u <= u_max; ++u) {
      const double at = a.at(t, u);
      if (at == kNegInf) continue;
      double* g = grad + (t * (u_max + 1) + u) * lp.width;
      const double next_blank = b.at(t + 1, u);
      if (next_blank != kNegInf) g[0] = -std::exp(at + lp.at(t, u, 0) + next_blank - total);
      if (u < u_max) {
        const double next_label = b.at(t, u + 1);
        if (next_label != kNegInf) g[label(u)] = -std::exp(at + lp.at(t, u, label(u)) + next_label - total);
      }
    }
  }
  return lat;
}

}  // namespace

RnntResult rnnt_loss(const Tensor<double>& log_probs, std::span<const int> labels) {
  if (log_probs.rank() != 3 || log_probs.dim(1) != labels.size() + 1)
    throw ContractViolation("rnnt_loss: log_probs must be [frames, labels + 1, V + 1]");
  const std::size_t frames = log_probs.dim(0), width = log_probs.dim(2);
  check_inputs(frames, width, labels);
  RnntResult r;
  r.grad = Tensor<double>(log_probs.shape);
  r.lattice = run_lattice({log_probs.data.data(), labels.size(), width}, frames, labels, r.grad.data.data());
  r.loss = -r.lattice.log_prob_alpha;
  return r;
}

RnntHatResult rnnt_loss_hat(const Tensor<double>& log_blank, const Tensor<double>& log_labels,
                            std::span<const int> labels) {
  if (log_blank.rank() != 2 || log_labels.rank() != 3 || log_blank.dim(0) != log_labels.dim(0) ||
      log_blank.dim(1) != labels.size() + 1 || log_labels.dim(1) != labels.size() + 1)
    throw ContractViolation("rnnt_loss_hat: expected log_blank [frames, U+1] and log_labels [frames, U+1, V]");
  const std::size_t frames = log_blank.dim(0), v = log_labels.dim(2), cells = frames * (labels.size() + 1);
  Tensor<double> combined({frames, labels.size() + 1, v + 1});
  for (std::size_t c = 0; c < cells; ++c) {
    combined.data[c * (v + 1)] = log_blank.data[c];
    for (std::size_t k = 0; k < v; ++k) combined.data[c * (v + 1) + 1 + k] = log_labels.data[c * v + k];
  }
  auto full = rnnt_loss(combined, labels);
  RnntHatResult r;
  r.loss = full.loss;
  r.lattice = std::move(full.lattice);
  r.grad_blank = Tensor<double>(log_blank.shape);
  r.grad_labels = Tensor<double>(log_labels.shape);
  for (std::size_t c = 0; c < cells; ++c) {
    r.grad_blank.data[c] = full.grad.data[c * (v + 1)];
    for (std::size_t k = 0; k < v; ++k) r.grad_labels.data[c * v + k] = full.grad.data[c * (v + 1) + 1 + k];
  }
  return r;
}

template <typename T>
Var<T> rnnt_loss(const Var<T>& log_probs, std::size_t frames, std::span<const int> labels) {
  const auto& shape = log_probs.shape();
  if (shape.size() != 2 || shape[0] != frames * (labels.size() + 1))
    throw ContractViolation("rnnt_loss: joint rows " + core::shape_string(shape) + " do not match frames " +
                            std::to_string(frames) + " x (labels + 1) " + std::to_string(labels.size() + 1));
  const std::size_t width = shape[1];
  check_inputs(frames, width, labels);
  std::vector<double> lp(log_probs.value().data.begin(), log_probs.value().data.end());
  std::vector<double> grad(lp.size(), 0.0);
  const auto lat = run_lattice({lp.data(), labels.size(), width}, frames, labels, grad.data());
  Tensor<T> out({1}, static_cast<T>(-lat.log_prob_alpha));
  return core::make_op<T>("rnnt_loss", std::move(out), {log_probs}, [grad = std::move(grad)](core::Node<T>& node) {
    auto& g = node.parent(0).grad_buffer();
    const double upstream = node.grad[0];
    for (std::size_t i = 0; i < grad.size(); ++i) g[i] += static_cast<T>(upstream * grad[i]);
  });
}

template Var<float> rnnt_loss(const Var<float>&, std::size_t, std::span<const int>);
template Var<double> rnnt_loss(const Var<double>&, std::size_t, std::span<const int>);

}  // namespace nstlab::loss
