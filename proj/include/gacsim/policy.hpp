#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

// Tabular softmax policy over (context, action) pairs.  Parameters are raw
// logits, one row per context, flattened row-major so the whole policy is a
// single parameter vector for gradient purposes.

namespace gacsim {

struct PolicySnapshot {
  std::vector<double> theta;  // row-major logits, shape (context_count, action_count)
  int context_count = 0;
  int action_count = 0;
  int version = 0;  // learner step at which this snapshot was captured

  static PolicySnapshot zeros(int context_count, int action_count) {
    if (context_count <= 0 || action_count <= 0)
      throw std::invalid_argument("PolicySnapshot: empty table");
    PolicySnapshot s;
    s.context_count = context_count;
    s.action_count = action_count;
    s.theta.assign(static_cast<std::size_t>(context_count) *
                       static_cast<std::size_t>(action_count),
                   0.0);
    return s;
  }

  std::size_t param_count() const { return theta.size(); }

  std::span<const double> row(int context) const {
    return std::span<const double>(theta).subspan(
        static_cast<std::size_t>(context) *
            static_cast<std::size_t>(action_count),
        static_cast<std::size_t>(action_count));
  }

  bool finite() const {
    for (double v : theta)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// Max-shifted softmax over one context row.
inline std::vector<double> softmax_row(const PolicySnapshot& p, int context) {
  const auto logits = p.row(context);
  double zmax = logits[0];
  for (double z : logits) zmax = std::max(zmax, z);
  std::vector<double> probs(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(logits[k] - zmax);
    total += probs[k];
  }
  for (double& v : probs) v /= total;
  return probs;
}

// log softmax, computed as z - zmax - log(sum exp(z - zmax)) so large logits
// stay finite.
inline std::vector<double> log_softmax_row(const PolicySnapshot& p,
                                           int context) {
  const auto logits = p.row(context);
  double zmax = logits[0];
  for (double z : logits) zmax = std::max(zmax, z);
  double total = 0.0;
  for (double z : logits) total += std::exp(z - zmax);
  const double log_total = std::log(total);
  std::vector<double> out(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k)
    out[k] = logits[k] - zmax - log_total;
  return out;
}

inline double log_prob(const PolicySnapshot& p, int context, int action) {
  return log_softmax_row(p, context)[static_cast<std::size_t>(action)];
}

}  // namespace gacsim
