#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "gacsim/gac.hpp"
#include "gacsim/gradvec.hpp"
#include "gacsim/rng.hpp"

// Numerical checks for the two analytical claims behind the controller: the
// projection removes a quantifiable amount of staleness bias, and stale
// stochastic ascent still satisfies a descent-lemma convergence bound whose
// bias penalty the projection shrinks.  Everything here is measured on
// models where the relevant quantities are exact, so a failed check means
// the math is wrong, not the tolerance.

namespace gacsim {

// Structured bias model: the stale part of the gradient error is
// eta_prev * B * g_prev for a PSD matrix B whose spectrum sits above
// lambda_min, plus an unstructured remainder bounded in norm.
struct BiasModel {
  int dim = 0;
  std::vector<double> B;  // row-major dim x dim, PSD with eigenvalues >= lambda_min
  double lambda_min = 0.0;
  double eta_prev = 0.0;
  double remainder_bound = 0.0;

  // lambda_min * I plus a random PSD perturbation of Frobenius norm `scale`.
  static BiasModel random_psd(int dim, double lambda_min, double eta_prev,
                              double remainder_bound, double scale, Rng& rng) {
    if (dim <= 0) throw std::invalid_argument("BiasModel: dim must be positive");
    if (!(lambda_min > 0.0))
      throw std::invalid_argument("BiasModel: lambda_min must be positive");
    BiasModel model;
    model.dim = dim;
    model.lambda_min = lambda_min;
    model.eta_prev = eta_prev;
    model.remainder_bound = remainder_bound;
    const auto d = static_cast<std::size_t>(dim);
    std::vector<double> m = rng.gaussian_vector(d * d);
    std::vector<double> mtm(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) acc += m[k * d + i] * m[k * d + j];
        mtm[i * d + j] = acc;
      }
    double fro = 0.0;
    for (double v : mtm) fro += v * v;
    fro = std::sqrt(fro);
    model.B.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        model.B[i * d + j] =
            (i == j ? lambda_min : 0.0) + scale * mtm[i * d + j] / fro;
    return model;
  }

  GradientVector apply(const GradientVector& x) const {
    const auto d = static_cast<std::size_t>(dim);
    if (x.dim() != d)
      throw std::invalid_argument("BiasModel: dimension mismatch");
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += B[i * d + j] * x[j];
      out[i] = acc;
    }
    return GradientVector(std::move(out));
  }
};

struct BiasCheckResult {
  double lhs = 0.0;  // squared norm of the bias component orthogonal to g_prev
  double rhs = 0.0;  // ||b||^2 - eta^2 lambda^2 ||g||^2 + 2 eta lambda ||g|| ||r||
  bool holds = false;
  bool degenerate = false;  // g_prev too short to define a direction
  double bias_norm_sq = 0.0;
  double parallel_norm_sq = 0.0;
};

// Checks, pathwise, that removing the component of the bias along g_prev
// discards at least the structured part's guaranteed mass: the leftover
// orthogonal bias is bounded by ||b||^2 minus the persistence floor plus a
// remainder cross term.
inline BiasCheckResult check_bias_reduction(const BiasModel& model,
                                            const GradientVector& g_prev,
                                            const GradientVector& remainder) {
  if (norm(remainder) > model.remainder_bound + 1e-12)
    throw std::invalid_argument("check_bias_reduction: remainder exceeds bound");
  BiasCheckResult result;
  const GradientVector bias =
      model.eta_prev * model.apply(g_prev) + remainder;
  result.bias_norm_sq = norm_sq(bias);

  const double g_norm = norm(g_prev);
  if (g_norm <= kZeroReferenceNorm) {
    result.degenerate = true;
    result.lhs = result.bias_norm_sq;
    result.rhs = result.bias_norm_sq;
    result.holds = true;
    return result;
  }

  const Decomposition d = decompose(bias, g_prev);
  result.lhs = norm_sq(d.orthogonal);
  result.parallel_norm_sq = norm_sq(d.parallel);
  const double floor = model.eta_prev * model.lambda_min * g_norm;
  result.rhs = result.bias_norm_sq - floor * floor +
               2.0 * floor * norm(remainder);
  result.holds = result.lhs <= result.rhs + 1e-10 * std::max(1.0, std::abs(result.rhs));
  return result;
}

// One seed of the stale-ascent testbed on the concave quadratic
// L(theta) = -||theta||^2 / 2, whose maximizer is the origin, smoothness
// constant is 1 and true gradient is -theta.  The stale stochastic gradient
// at step t is the true gradient tau steps ago plus N(0, sigma^2 I) noise,
// with tau = min(t, staleness).  Every quantity in the convergence bound is
// exact here: the bias is theta_t - theta_{t-tau}, the remainder is zero and
// the structured-lag matrices are the identity.
struct ConvergenceLedger {
  int dim = 0;
  int staleness = 0;
  int steps = 0;
  double eta = 0.0;
  double noise_sigma = 0.0;  // per-coordinate standard deviation
  double smoothness = 1.0;
  double objective_max = 0.0;
  double objective_initial = 0.0;

  std::vector<double> grad_true_norm_sq;  // ||grad L(theta_t)||^2
  std::vector<double> bias_norm_sq;       // ||b_t||^2
  std::vector<double> inner_grad_bias;    // <grad L(theta_t), b_t>
  std::vector<double> prev_grad_norm_sq;  // ||ghat_{t-1}||^2, 0 at t = 0
  std::vector<double> inner_grad_prev;    // <grad L(theta_t), ghat_{t-1}>
  std::vector<double> multi_lag_abs;      // sum_{k=2..tau} |<grad L(theta_t), ghat_{t-k}>|
  std::vector<double> remainder_norm;     // ||r_t||, identically 0 on this testbed
  std::vector<double> cosine;             // consecutive-gradient cosine, 0 at t = 0
};

inline ConvergenceLedger run_quadratic_testbed(int dim, int staleness,
                                               double noise_sigma, double eta,
                                               int steps, std::uint64_t seed) {
  if (dim <= 0 || steps <= 0)
    throw std::invalid_argument("testbed: dim and steps must be positive");
  if (staleness < 0)
    throw std::invalid_argument("testbed: staleness must be nonnegative");
  if (!(eta > 0.0))
    throw std::invalid_argument("testbed: eta must be positive");

  ConvergenceLedger led;
  led.dim = dim;
  led.staleness = staleness;
  led.steps = steps;
  led.eta = eta;
  led.noise_sigma = noise_sigma;

  const auto d = static_cast<std::size_t>(dim);
  Rng init_rng(derive_seed(seed, Stream::init, 0));
  Rng noise_rng(derive_seed(seed, Stream::noise, 0));
  const ShardLayout layout = ShardLayout::single(d);
  const double cosine_eps = GacConfig{}.cosine_epsilon;

  std::vector<GradientVector> thetas;
  std::vector<GradientVector> ghats;
  thetas.reserve(static_cast<std::size_t>(steps) + 1);
  ghats.reserve(static_cast<std::size_t>(steps));
  thetas.emplace_back(init_rng.gaussian_vector(d));
  led.objective_initial = -0.5 * norm_sq(thetas[0]);

  led.grad_true_norm_sq.reserve(steps);
  led.bias_norm_sq.reserve(steps);
  led.inner_grad_bias.reserve(steps);
  led.prev_grad_norm_sq.reserve(steps);
  led.inner_grad_prev.reserve(steps);
  led.multi_lag_abs.reserve(steps);
  led.remainder_norm.reserve(steps);
  led.cosine.reserve(steps);

  for (int t = 0; t < steps; ++t) {
    const int tau = std::min(t, staleness);
    const GradientVector& theta_t = thetas[static_cast<std::size_t>(t)];
    const GradientVector& theta_lag =
        thetas[static_cast<std::size_t>(t - tau)];
    const GradientVector grad_true = -1.0 * theta_t;

    std::vector<double> noise(d, 0.0);
    if (noise_sigma > 0.0) {
      for (double& x : noise) x = noise_sigma * noise_rng.next_gaussian();
    }
    const GradientVector ghat =
        -1.0 * theta_lag + GradientVector(std::move(noise));

    const GradientVector bias = theta_t - theta_lag;  // E ghat - grad L
    led.grad_true_norm_sq.push_back(norm_sq(grad_true));
    led.bias_norm_sq.push_back(norm_sq(bias));
    led.inner_grad_bias.push_back(dot(grad_true, bias));
    if (t >= 1) {
      const GradientVector& prev = ghats[static_cast<std::size_t>(t - 1)];
      led.prev_grad_norm_sq.push_back(norm_sq(prev));
      led.inner_grad_prev.push_back(dot(grad_true, prev));
      led.cosine.push_back(cosine(ghat, prev, layout, cosine_eps));
    } else {
      led.prev_grad_norm_sq.push_back(0.0);
      led.inner_grad_prev.push_back(0.0);
      led.cosine.push_back(0.0);
    }
    double multi = 0.0;
    for (int k = 2; k <= tau; ++k)
      multi += std::abs(dot(grad_true, ghats[static_cast<std::size_t>(t - k)]));
    led.multi_lag_abs.push_back(multi);
    led.remainder_norm.push_back(0.0);

    thetas.push_back(theta_t + eta * ghat);
    ghats.push_back(ghat);
  }
  return led;
}

// Elementwise mean of per-seed ledgers; this is the Monte-Carlo estimate of
// the expectations the bound is stated over.
inline ConvergenceLedger average_ledgers(
    std::span<const ConvergenceLedger> ledgers) {
  if (ledgers.empty())
    throw std::invalid_argument("average_ledgers: no ledgers");
  ConvergenceLedger avg = ledgers.front();
  for (std::size_t i = 1; i < ledgers.size(); ++i) {
    const ConvergenceLedger& led = ledgers[i];
    if (led.dim != avg.dim || led.staleness != avg.staleness ||
        led.steps != avg.steps || led.eta != avg.eta ||
        led.noise_sigma != avg.noise_sigma)
      throw std::invalid_argument("average_ledgers: mismatched configurations");
    avg.objective_initial += led.objective_initial;
    for (int t = 0; t < avg.steps; ++t) {
      const auto u = static_cast<std::size_t>(t);
      avg.grad_true_norm_sq[u] += led.grad_true_norm_sq[u];
      avg.bias_norm_sq[u] += led.bias_norm_sq[u];
      avg.inner_grad_bias[u] += led.inner_grad_bias[u];
      avg.prev_grad_norm_sq[u] += led.prev_grad_norm_sq[u];
      avg.inner_grad_prev[u] += led.inner_grad_prev[u];
      avg.multi_lag_abs[u] += led.multi_lag_abs[u];
      avg.remainder_norm[u] += led.remainder_norm[u];
      avg.cosine[u] += led.cosine[u];
    }
  }
  const auto n = static_cast<double>(ledgers.size());
  avg.objective_initial /= n;
  for (int t = 0; t < avg.steps; ++t) {
    const auto u = static_cast<std::size_t>(t);
    avg.grad_true_norm_sq[u] /= n;
    avg.bias_norm_sq[u] /= n;
    avg.inner_grad_bias[u] /= n;
    avg.prev_grad_norm_sq[u] /= n;
    avg.inner_grad_prev[u] /= n;
    avg.multi_lag_abs[u] /= n;
    avg.remainder_norm[u] /= n;
    avg.cosine[u] /= n;
  }
  return avg;
}

struct BoundCheckResult {
  double lhs = 0.0;  // min_t ||grad L(theta_t)||^2
  double rhs = 0.0;  // descent-lemma bound
  bool holds = false;
  double telescoping_term = 0.0;
  double noise_term = 0.0;
  double bias_penalty = 0.0;
  double coupling_term = 0.0;       // (2/T) sum <grad L, b_t>, subtracted
  double bias_penalty_mean = 0.0;   // sum ||b_t||^2 / T
  double first_lag_term = 0.0;      // structured credit from the k = 1 lag
  double err_term = 0.0;            // residual lags + remainder + persistence slack
  double rhs_decomposed = 0.0;      // rhs with the coupling split into credit and residual
  double rho_min = 1.0;
  double rho_mean = 0.0;
  double delta_max = 0.0;
};

// Evaluates the stale-ascent bound on a (seed-averaged) ledger:
//
//   min_t ||grad L||^2 <= 2 (L_max - L(theta_0)) / (eta T) + 2 L eta sigma^2
//                         + (4 L eta / T) sum ||b_t||^2
//                         - (2 / T) sum <grad L(theta_t), b_t>
//
// with sigma^2 the total noise variance.  The decomposed form replaces the
// coupling sum with the first-lag persistence credit plus a residual term,
// which is what makes the projection's effect legible: it attacks exactly
// the credited component.
inline BoundCheckResult check_convergence_bound(const ConvergenceLedger& led) {
  BoundCheckResult res;
  const auto T = static_cast<double>(led.steps);
  const double sigma_sq =
      led.noise_sigma * led.noise_sigma * static_cast<double>(led.dim);

  res.lhs = led.grad_true_norm_sq[0];
  double bias_sum = 0.0, coupling_sum = 0.0;
  double first_lag_sum = 0.0, err_sum = 0.0;
  double rho_sum = 0.0, grad_remainder_sum = 0.0;
  for (int t = 0; t < led.steps; ++t) {
    const auto u = static_cast<std::size_t>(t);
    res.lhs = std::min(res.lhs, led.grad_true_norm_sq[u]);
    bias_sum += led.bias_norm_sq[u];
    coupling_sum += led.inner_grad_bias[u];

    // Persistence ratio rho_t and the slack delta_t that makes the
    // first-lag credit an inequality rather than an identity.
    double rho = 0.0;
    if (led.prev_grad_norm_sq[u] > 0.0)
      rho = std::clamp(led.inner_grad_prev[u] / led.prev_grad_norm_sq[u], 0.0,
                       1.0);
    const double delta =
        std::max(0.0, rho * led.prev_grad_norm_sq[u] - led.inner_grad_prev[u]);
    res.rho_min = std::min(res.rho_min, rho);
    rho_sum += rho;
    res.delta_max = std::max(res.delta_max, delta);
    const int tau = std::min(t, led.staleness);
    if (tau >= 1) {
      first_lag_sum += led.eta * rho * led.prev_grad_norm_sq[u];
      err_sum += led.eta * delta;
    }
    err_sum += led.eta * led.multi_lag_abs[u];
    grad_remainder_sum +=
        std::sqrt(led.grad_true_norm_sq[u]) * led.remainder_norm[u];
  }

  res.telescoping_term =
      2.0 * (led.objective_max - led.objective_initial) / (led.eta * T);
  res.noise_term = 2.0 * led.smoothness * led.eta * sigma_sq;
  res.bias_penalty = 4.0 * led.smoothness * led.eta * bias_sum / T;
  res.coupling_term = 2.0 * coupling_sum / T;
  res.bias_penalty_mean = bias_sum / T;
  res.first_lag_term = 2.0 * first_lag_sum / T;
  res.err_term = 2.0 * (err_sum + grad_remainder_sum) / T;
  res.rho_mean = rho_sum / T;

  res.rhs = res.telescoping_term + res.noise_term + res.bias_penalty -
            res.coupling_term;
  res.rhs_decomposed = res.telescoping_term + res.noise_term +
                       res.bias_penalty - res.first_lag_term + res.err_term;
  res.holds = res.lhs <= res.rhs + 1e-9 * std::max(1.0, std::abs(res.rhs));
  return res;
}

struct PropositionCaseResult {
  double lambda_min = 0.0;
  int dim = 0;
  bool remainder_active = false;
  int trials = 0;
  int held = 0;
  double max_violation = 0.0;  // max of lhs - rhs over trials (negative when all hold)
};

// Monte-Carlo sweep of the bias-reduction inequality over random PSD models.
// The remainder, when active, is drawn inside half the persistence floor so
// both signs of the floor-minus-remainder margin occur.
inline std::vector<PropositionCaseResult> run_proposition_protocol(
    std::uint64_t seed, int trials_per_case) {
  if (trials_per_case <= 0)
    throw std::invalid_argument("proposition protocol: trials must be positive");
  const double lambdas[] = {0.1, 0.3, 1.0};
  const int dims[] = {10, 50};
  const bool remainder_modes[] = {false, true};

  std::vector<PropositionCaseResult> results;
  std::uint64_t case_index = 0;
  for (double lambda_min : lambdas) {
    for (int dim : dims) {
      for (bool remainder_active : remainder_modes) {
        Rng rng(derive_seed(seed, Stream::scratch, case_index++));
        PropositionCaseResult res;
        res.lambda_min = lambda_min;
        res.dim = dim;
        res.remainder_active = remainder_active;
        res.trials = trials_per_case;
        res.max_violation = -std::numeric_limits<double>::infinity();
        for (int trial = 0; trial < trials_per_case; ++trial) {
          const double eta_prev = 0.05 + 0.45 * rng.next_double();
          const double scale = 0.1 + 1.9 * rng.next_double();
          GradientVector g_prev(
              rng.gaussian_vector(static_cast<std::size_t>(dim)));
          const double bound =
              0.5 * eta_prev * lambda_min * norm(g_prev);
          BiasModel model = BiasModel::random_psd(dim, lambda_min, eta_prev,
                                                  bound, scale, rng);
          GradientVector remainder =
              GradientVector::zeros(static_cast<std::size_t>(dim));
          if (remainder_active) {
            GradientVector direction(
                rng.gaussian_vector(static_cast<std::size_t>(dim)));
            const double target = bound * (0.1 + 0.9 * rng.next_double());
            remainder = (target / norm(direction)) * direction;
          }
          const BiasCheckResult check =
              check_bias_reduction(model, g_prev, remainder);
          if (check.holds) ++res.held;
          res.max_violation =
              std::max(res.max_violation, check.lhs - check.rhs);
        }
        results.push_back(res);
      }
    }
  }
  return results;
}

struct BoundCaseResult {
  int staleness = 0;
  double noise_sigma = 0.0;
  int seeds = 0;
  BoundCheckResult check;
};

// Runs the quadratic testbed over the staleness and noise grid, averaging
// per-seed ledgers before evaluating the bound.  The step size is chosen
// above the delayed-recursion stability threshold for the larger lags, so
// the grid deliberately includes diverging runs; the bound must hold there
// too, and does, because the bias penalty grows with the iterates.
inline std::vector<BoundCaseResult> run_bound_protocol(
    std::uint64_t seed, int seed_count, int dim, double eta, int steps,
    std::span<const int> staleness_grid, std::span<const double> noise_grid) {
  if (seed_count <= 0)
    throw std::invalid_argument("bound protocol: seed_count must be positive");
  std::vector<BoundCaseResult> results;
  for (double noise : noise_grid) {
    for (int staleness : staleness_grid) {
      std::vector<ConvergenceLedger> ledgers;
      ledgers.reserve(static_cast<std::size_t>(seed_count));
      for (int i = 0; i < seed_count; ++i) {
        ledgers.push_back(run_quadratic_testbed(
            dim, staleness, noise, eta, steps,
            derive_seed(seed, Stream::scratch, static_cast<std::uint64_t>(i))));
      }
      BoundCaseResult res;
      res.staleness = staleness;
      res.noise_sigma = noise;
      res.seeds = seed_count;
      res.check = check_convergence_bound(average_ledgers(ledgers));
      results.push_back(res);
    }
  }
  return results;
}

// Max relative error between analytic gradient coordinates and central
// finite differences of the objective.  The denominator floors at 1e-12 so
// genuinely zero coordinates compare exactly.
inline double finite_diff_check(
    const std::function<double(std::span<const double>)>& objective,
    const GradientVector& analytic, std::span<const double> point, double step,
    std::span<const std::size_t> coords) {
  if (analytic.dim() != point.size())
    throw std::invalid_argument("finite_diff_check: dimension mismatch");
  if (!(step > 0.0))
    throw std::invalid_argument("finite_diff_check: step must be positive");
  std::vector<double> x(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i : coords) {
    if (i >= x.size())
      throw std::invalid_argument("finite_diff_check: coordinate out of range");
    const double saved = x[i];
    x[i] = saved + step;
    const double up = objective(x);
    x[i] = saved - step;
    const double down = objective(x);
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom =
        std::max({std::abs(numeric), std::abs(analytic[i]), 1e-12});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace gacsim
