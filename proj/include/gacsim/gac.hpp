#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "gacsim/gradvec.hpp"

// Gradient alignment control.  Consecutive stochastic gradients of a
// stationary objective should be close to orthogonal; staleness couples them
// and the coupling shows up as a drifting consecutive-step cosine.  The
// controller watches that cosine and reacts in three regimes:
//
//   |c_t| <= c_low            safe: apply the gradient unchanged
//   c_low < |c_t| < c_high    projection: shrink the component along the
//                             previous gradient until the cosine sits back
//                             on the safe boundary
//   |c_t| >= c_high           violation: skip the update entirely
//
// The cosine is always measured between raw gradients, never between a raw
// gradient and a projected one, so intervention at step t cannot mask
// misalignment at step t+1.

namespace gacsim {

enum class Regime { warmup, safe, projection, violation };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::warmup: return "warmup";
    case Regime::safe: return "safe";
    case Regime::projection: return "projection";
    case Regime::violation: return "violation";
  }
  throw std::logic_error("regime_name: bad regime");
}

inline Regime regime_from_name(const std::string& name) {
  if (name == "warmup") return Regime::warmup;
  if (name == "safe") return Regime::safe;
  if (name == "projection") return Regime::projection;
  if (name == "violation") return Regime::violation;
  throw std::invalid_argument("unknown regime name: " + name);
}

struct GacConfig {
  double c_low = 0.05;
  double c_high = 0.3;
  double cosine_epsilon = 1e-8;  // denominator regularizer; also absorbs zero gradients
  double beta = 1.0;             // orthogonal-component scale in the projection regime
  // When a violation skips the update, the skipped raw gradient still
  // replaces the stored previous gradient, so the next comparison is against
  // the freshest observation.  Set false to freeze the reference instead.
  bool replace_prev_on_skip = true;

  bool operator==(const GacConfig&) const = default;

  void validate() const {
    if (!(c_low > 0.0))
      throw std::invalid_argument("gac: c_low must be positive");
    if (!(c_high > c_low))
      throw std::invalid_argument("gac: c_low < c_high required");
    if (!(cosine_epsilon > 0.0))
      throw std::invalid_argument("gac: cosine_epsilon must be positive");
    if (!(beta > 0.0))
      throw std::invalid_argument("gac: beta must be positive");
  }
};

// Regularized cosine between consecutive gradients, computed through the
// sharded reduction so distributed and single-process runs agree bitwise.
// The epsilon keeps zero gradients defined (and mapped to cosine 0).
inline double cosine(const GradientVector& curr, const GradientVector& prev,
                     const ShardLayout& layout, double epsilon) {
  const ReductionTriple t = sharded_reduce(curr, prev, layout);
  return t.dot_cross /
         (std::sqrt(t.norm_sq_curr * t.norm_sq_prev) + epsilon);
}

// Regime boundaries: both thresholds compare against |c_t|, the safe side
// owns its boundary (<=), and the violation side owns its own (>=).
inline Regime classify(double cosine_value, const GacConfig& cfg) {
  const double a = std::abs(cosine_value);
  if (a <= cfg.c_low) return Regime::safe;
  if (a >= cfg.c_high) return Regime::violation;
  return Regime::projection;
}

// Projection regime: rescale the component of curr along prev by
// alpha = c_low / |c_t| and keep the orthogonal component (times beta).
// With beta = 1 the post-intervention cosine against prev lands at
// sign(c_t) * c_low / sqrt(c_low^2 + 1 - c_t^2): a touch above c_low
// (shrinking the parallel part also shrinks the norm) but bounded by
// c_low / sqrt(c_low^2 + 1 - c_high^2), far below the violation line.
inline GradientVector project(const GradientVector& curr,
                              const GradientVector& prev, double cosine_value,
                              const GacConfig& cfg) {
  const double a = std::abs(cosine_value);
  if (!(a > 0.0))
    throw std::invalid_argument("project: cosine must be nonzero");
  const double alpha = cfg.c_low / a;
  return anisotropic_rescale(curr, prev, alpha, cfg.beta);
}

// The controller's entire persistent footprint: one gradient snapshot plus
// scalars.  That single extra buffer is the memory cost of the mechanism.
struct AlignmentState {
  std::optional<GradientVector> prev_grad;
  std::optional<double> last_cosine;
  Regime last_regime = Regime::warmup;

  int persistent_snapshot_count() const { return prev_grad ? 1 : 0; }
};

struct ControlResult {
  Regime regime = Regime::warmup;
  double cosine = 0.0;  // 0 by convention at warmup (empty reference)
  bool skip = false;
  GradientVector grad;  // the update to apply; the raw gradient when skipped
};

// One controller step: measure the cosine against the stored previous raw
// gradient, pick the regime, and return the (possibly projected) update.
// The stored reference is always the raw incoming gradient, regardless of
// regime, unless replace_prev_on_skip is off and the step was skipped.
inline ControlResult control_step(AlignmentState& state,
                                  const GradientVector& curr,
                                  const ShardLayout& layout,
                                  const GacConfig& cfg) {
  ControlResult result;
  result.grad = curr;
  if (!state.prev_grad.has_value()) {
    result.regime = Regime::warmup;
    result.cosine = 0.0;
  } else {
    if (state.prev_grad->dim() != curr.dim())
      throw std::invalid_argument("control_step: gradient dimension changed");
    result.cosine = cosine(curr, *state.prev_grad, layout, cfg.cosine_epsilon);
    result.regime = classify(result.cosine, cfg);
    if (result.regime == Regime::projection) {
      result.grad = project(curr, *state.prev_grad, result.cosine, cfg);
    } else if (result.regime == Regime::violation) {
      result.skip = true;
    }
  }

  if (!result.skip || cfg.replace_prev_on_skip) state.prev_grad = curr;
  state.last_cosine = result.cosine;
  state.last_regime = result.regime;
  return result;
}

}  // namespace gacsim
