#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gacsim/envs.hpp"
#include "gacsim/gradvec.hpp"
#include "gacsim/policy.hpp"

// Group-relative clipped policy optimization on the tabular softmax policy.
// Advantages are standardized within each prompt's group, ratios come from
// recorded behavior log-probs, and the analytic gradient is exact for the
// tabular parameterization; it is what the finite-difference oracle checks.

namespace gacsim {

// Raised when an update pushes parameters out of the finite range.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when an importance ratio overflows to inf; a ratio that large means
// the learner and behavior policies have drifted beyond anything the clipped
// objective can express.
struct RatioOverflowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GrpoConfig {
  double clip_epsilon = 0.2;
  double adv_epsilon = 1e-8;   // added to the group std, so zero-variance groups yield zero advantage
  double entropy_coef = 0.0;
  double kl_coef = 0.0;
  int group_size = 8;          // responses sampled per prompt (G)

  bool operator==(const GrpoConfig&) const = default;

  void validate() const {
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0))
      throw std::invalid_argument("grpo: clip_epsilon must lie in (0, 1)");
    if (!(adv_epsilon > 0.0))
      throw std::invalid_argument("grpo: adv_epsilon must be positive");
    if (!(entropy_coef >= 0.0))
      throw std::invalid_argument("grpo: entropy_coef must be nonnegative");
    if (!(kl_coef >= 0.0))
      throw std::invalid_argument("grpo: kl_coef must be nonnegative");
    if (group_size <= 0)
      throw std::invalid_argument("grpo: group_size must be positive");
  }
};

enum class ClipBranch { unclipped, clipped };

struct SurrogateReport {
  double loss_value = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
};

// (R_g - mean) / (std + adv_epsilon), with the population std over the
// group.  A group of identical returns carries no signal and maps to all
// zeros rather than 0/0.
inline std::vector<double> group_advantage(std::span<const double> returns,
                                           double adv_epsilon) {
  if (returns.empty())
    throw std::invalid_argument("group_advantage: empty group");
  if (!(adv_epsilon > 0.0))
    throw std::invalid_argument("group_advantage: adv_epsilon must be positive");
  const auto n = static_cast<double>(returns.size());
  double mu = 0.0;
  for (double r : returns) mu += r;
  mu /= n;
  double var = 0.0;
  for (double r : returns) var += (r - mu) * (r - mu);
  var /= n;
  const double denom = std::sqrt(var) + adv_epsilon;
  std::vector<double> adv(returns.size());
  for (std::size_t g = 0; g < returns.size(); ++g)
    adv[g] = (returns[g] - mu) / denom;
  return adv;
}

inline double importance_ratio(const PolicySnapshot& curr, int context,
                               int action, double behavior_logprob) {
  const double ratio =
      std::exp(log_prob(curr, context, action) - behavior_logprob);
  if (!std::isfinite(ratio))
    throw RatioOverflowError("importance ratio overflow");
  return ratio;
}

// min(ratio * adv, clip(ratio) * adv).  The branch reports which argument
// won; ties count as unclipped so the on-policy ratio of exactly 1 never
// shows up in the clip fraction.
inline std::pair<double, ClipBranch> clipped_term(double ratio,
                                                  double advantage,
                                                  double clip_epsilon) {
  const double clipped_ratio =
      std::min(std::max(ratio, 1.0 - clip_epsilon), 1.0 + clip_epsilon);
  const double plain = ratio * advantage;
  const double clipped = clipped_ratio * advantage;
  if (clipped < plain) return {clipped, ClipBranch::clipped};
  return {plain, ClipBranch::unclipped};
}

namespace detail {

inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

// Shared evaluation core so the scalar objective and its gradient can never
// disagree.  Computes the clipped surrogate plus entropy bonus minus KL
// penalty; when grad_out is non-null, accumulates the exact gradient of that
// same expression.
inline double evaluate_surrogate(const PolicySnapshot& curr,
                                 const RolloutBatch& batch,
                                 const GrpoConfig& cfg,
                                 std::vector<double>* grad_out,
                                 SurrogateReport* report_out) {
  cfg.validate();
  if (batch.prompt_count() == 0)
    throw std::invalid_argument("surrogate: empty batch");
  const auto n_prompts = static_cast<double>(batch.prompt_count());
  const auto n_samples =
      n_prompts * static_cast<double>(batch.group_size);
  const auto actions_per_row = static_cast<std::size_t>(curr.action_count);

  if (grad_out) grad_out->assign(curr.param_count(), 0.0);

  double value = 0.0;
  double ratio_sum = 0.0;
  std::size_t clipped_count = 0;

  for (std::size_t i = 0; i < batch.prompt_count(); ++i) {
    const int context = batch.contexts[i];
    if (context < 0 || context >= curr.context_count)
      throw std::invalid_argument("surrogate: context out of range");
    const std::vector<double> probs = softmax_row(curr, context);
    const std::vector<double> logps = log_softmax_row(curr, context);
    const std::vector<double> adv =
        group_advantage(batch.returns[i], cfg.adv_epsilon);
    const std::size_t row_base =
        static_cast<std::size_t>(context) * actions_per_row;

    for (int g = 0; g < batch.group_size; ++g) {
      const auto gi = static_cast<std::size_t>(g);
      const int action = batch.actions[i][gi];
      if (action < 0 || action >= curr.action_count)
        throw std::invalid_argument("surrogate: action out of range");
      const double behavior_lp = batch.behavior_logprobs[i][gi];
      const double ratio =
          std::exp(logps[static_cast<std::size_t>(action)] - behavior_lp);
      if (!std::isfinite(ratio))
        throw RatioOverflowError("importance ratio overflow");
      ratio_sum += ratio;

      const auto [term, branch] = clipped_term(ratio, adv[gi], cfg.clip_epsilon);
      value += term / n_samples;
      if (branch == ClipBranch::clipped) ++clipped_count;

      if (grad_out) {
        // d(r * A)/dz = A * r * (onehot(a) - pi); the clipped branch is
        // locally constant in theta and contributes nothing.
        double coeff = 0.0;
        if (branch == ClipBranch::unclipped)
          coeff += adv[gi] * ratio / n_samples;
        // KL penalty k3(r) = r - 1 - log r has gradient (r - 1) * dlogpi.
        coeff -= cfg.kl_coef * (ratio - 1.0) / n_samples;
        if (coeff != 0.0) {
          for (std::size_t k = 0; k < actions_per_row; ++k)
            (*grad_out)[row_base + k] -= coeff * probs[k];
          (*grad_out)[row_base + static_cast<std::size_t>(action)] += coeff;
        }
      }

      if (cfg.kl_coef != 0.0)
        value -= cfg.kl_coef * (ratio - 1.0 - std::log(ratio)) / n_samples;
    }

    if (cfg.entropy_coef != 0.0) {
      double entropy = 0.0;
      for (double p : probs) entropy -= xlogx(p);
      value += cfg.entropy_coef * entropy / n_prompts;
      if (grad_out) {
        // dH/dz_k = -pi_k (log pi_k + H)
        for (std::size_t k = 0; k < actions_per_row; ++k) {
          const double logp = logps[k];
          (*grad_out)[row_base + k] -= cfg.entropy_coef * probs[k] *
                                       (logp + entropy) / n_prompts;
        }
      }
    }
  }

  if (report_out) {
    report_out->loss_value = value;
    report_out->clip_fraction = static_cast<double>(clipped_count) / n_samples;
    report_out->mean_ratio = ratio_sum / n_samples;
  }
  return value;
}

}  // namespace detail

// Scalar objective only; used by the finite-difference oracle.
inline double surrogate_value(const PolicySnapshot& curr,
                              const RolloutBatch& batch,
                              const GrpoConfig& cfg) {
  return detail::evaluate_surrogate(curr, batch, cfg, nullptr, nullptr);
}

// Exact gradient of the surrogate with respect to the flattened logits.  The
// behavior snapshot is consulted only to confirm the batch really came from
// it; ratios use the log-probs recorded at sampling time.
inline std::pair<GradientVector, SurrogateReport> surrogate_gradient(
    const PolicySnapshot& curr, const RolloutBatch& batch,
    const PolicySnapshot& behavior, const GrpoConfig& cfg) {
  if (batch.behavior_version != behavior.version)
    throw std::invalid_argument(
        "surrogate_gradient: batch was not sampled from this behavior snapshot");
  if (behavior.context_count != curr.context_count ||
      behavior.action_count != curr.action_count)
    throw std::invalid_argument("surrogate_gradient: policy shape mismatch");
  std::vector<double> grad;
  SurrogateReport report;
  detail::evaluate_surrogate(curr, batch, cfg, &grad, &report);
  return {GradientVector(std::move(grad)), report};
}

// One ascent step.  Rejects the result rather than propagating non-finite
// parameters; the caller decides whether that ends the run.
inline PolicySnapshot apply_update(const PolicySnapshot& theta,
                                   const GradientVector& grad,
                                   double learning_rate) {
  if (grad.dim() != theta.param_count())
    throw std::invalid_argument("apply_update: gradient dimension mismatch");
  PolicySnapshot next = theta;
  for (std::size_t i = 0; i < next.theta.size(); ++i)
    next.theta[i] += learning_rate * grad[i];
  if (!next.finite())
    throw DivergenceError("divergence: non-finite parameters after update");
  next.version = theta.version + 1;
  return next;
}

}  // namespace gacsim
