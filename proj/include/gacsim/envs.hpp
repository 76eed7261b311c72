#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "gacsim/policy.hpp"
#include "gacsim/rng.hpp"

// Contextual bandit with a verifier-style binary reward: a context is drawn,
// the policy answers with one action per group member, and each answer scores
// 1 exactly when it matches the context's correct action.  Group sampling
// mirrors the prompt/completion structure of group-relative policy training.

namespace gacsim {

// Default geometry (4 contexts, 8 actions) was tuned once against the stock
// run settings and then frozen: it is the smallest bandit where a synchronous
// run saturates well before 500 steps while per-step gradients stay sparse
// enough that consecutive updates usually touch different context rows.  See
// the benchmark notes in the README before changing either count.
struct ContextualBanditSpec {
  int context_count = 4;
  int action_count = 8;
  std::vector<int> correct_action;           // size context_count, values in [0, action_count)
  std::vector<double> context_distribution;  // size context_count, sums to 1

  bool operator==(const ContextualBanditSpec&) const = default;

  static ContextualBanditSpec defaults() {
    ContextualBanditSpec spec;
    spec.correct_action.resize(spec.context_count);
    for (int c = 0; c < spec.context_count; ++c)
      spec.correct_action[c] = c % spec.action_count;
    spec.context_distribution.assign(spec.context_count,
                                     1.0 / spec.context_count);
    return spec;
  }

  void validate() const {
    if (context_count <= 0)
      throw std::invalid_argument("bandit: context_count must be positive");
    if (action_count <= 0)
      throw std::invalid_argument("bandit: action_count must be positive");
    if (correct_action.size() != static_cast<std::size_t>(context_count))
      throw std::invalid_argument(
          "bandit: correct_action must have one entry per context");
    for (int a : correct_action) {
      if (a < 0 || a >= action_count)
        throw std::invalid_argument("bandit: correct_action out of range");
    }
    if (context_distribution.size() != static_cast<std::size_t>(context_count))
      throw std::invalid_argument(
          "bandit: context_distribution must have one entry per context");
    double total = 0.0;
    for (double p : context_distribution) {
      if (!(p >= 0.0))
        throw std::invalid_argument(
            "bandit: context_distribution entries must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("bandit: context_distribution must sum to 1");
  }
};

inline double verify_reward(const ContextualBanditSpec& spec, int context,
                            int action) {
  if (context < 0 || context >= spec.context_count)
    throw std::invalid_argument("verify_reward: context out of range");
  if (action < 0 || action >= spec.action_count)
    throw std::invalid_argument("verify_reward: action out of range");
  return action == spec.correct_action[static_cast<std::size_t>(context)]
             ? 1.0
             : 0.0;
}

// One batch of grouped rollouts collected under a single behavior snapshot.
// behavior_logprobs are recorded at sampling time so the learner never needs
// the behavior parameters to form importance ratios.
struct RolloutBatch {
  std::vector<int> contexts;                          // prompts_per_batch
  int group_size = 0;
  std::vector<std::vector<int>> actions;              // [prompt][group]
  std::vector<std::vector<double>> returns;           // [prompt][group]
  std::vector<std::vector<double>> behavior_logprobs; // [prompt][group]
  int behavior_version = 0;

  std::size_t prompt_count() const { return contexts.size(); }
};

// Draw order is fixed: for each prompt, first the context, then its group of
// actions left to right.  Any reordering changes the stream alignment and
// breaks replay.
inline RolloutBatch sample_batch(const ContextualBanditSpec& spec,
                                 const PolicySnapshot& behavior,
                                 int prompts_per_batch, int group_size,
                                 Rng& rng) {
  spec.validate();
  if (behavior.context_count != spec.context_count ||
      behavior.action_count != spec.action_count)
    throw std::invalid_argument("sample_batch: policy shape mismatch");
  if (prompts_per_batch <= 0)
    throw std::invalid_argument("sample_batch: prompts_per_batch must be positive");
  if (group_size <= 0)
    throw std::invalid_argument("sample_batch: group_size must be positive");

  RolloutBatch batch;
  batch.group_size = group_size;
  batch.behavior_version = behavior.version;
  batch.contexts.reserve(static_cast<std::size_t>(prompts_per_batch));
  batch.actions.reserve(static_cast<std::size_t>(prompts_per_batch));
  batch.returns.reserve(static_cast<std::size_t>(prompts_per_batch));
  batch.behavior_logprobs.reserve(static_cast<std::size_t>(prompts_per_batch));

  for (int i = 0; i < prompts_per_batch; ++i) {
    const int context =
        static_cast<int>(rng.next_categorical(spec.context_distribution));
    const std::vector<double> probs = softmax_row(behavior, context);
    const std::vector<double> logps = log_softmax_row(behavior, context);
    std::vector<int> actions(static_cast<std::size_t>(group_size));
    std::vector<double> rewards(static_cast<std::size_t>(group_size));
    std::vector<double> logprobs(static_cast<std::size_t>(group_size));
    for (int g = 0; g < group_size; ++g) {
      const int a = static_cast<int>(rng.next_categorical(probs));
      actions[static_cast<std::size_t>(g)] = a;
      rewards[static_cast<std::size_t>(g)] = verify_reward(spec, context, a);
      logprobs[static_cast<std::size_t>(g)] =
          logps[static_cast<std::size_t>(a)];
    }
    batch.contexts.push_back(context);
    batch.actions.push_back(std::move(actions));
    batch.returns.push_back(std::move(rewards));
    batch.behavior_logprobs.push_back(std::move(logprobs));
  }
  return batch;
}

inline double batch_mean_return(const RolloutBatch& batch) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& group : batch.returns) {
    for (double r : group) {
      total += r;
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

}  // namespace gacsim
