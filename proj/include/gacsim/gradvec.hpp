#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Flat gradient vectors and the deterministic reduction used to compare
// consecutive gradients across shards.
//
// Summation order is part of the contract: every inner product accumulates
// left to right within a shard, and shard partials combine in ascending rank
// order.  With one shard this degenerates to a plain left-to-right dot
// product, bit for bit, which is what makes single-process runs and sharded
// runs directly comparable.

namespace gacsim {

class GradientVector {
 public:
  GradientVector() = default;

  explicit GradientVector(std::vector<double> values)
      : values_(std::move(values)) {
    for (double v : values_) {
      if (!std::isfinite(v))
        throw std::invalid_argument("GradientVector: non-finite entry");
    }
  }

  static GradientVector zeros(std::size_t dim) {
    GradientVector g;
    g.values_.assign(dim, 0.0);
    return g;
  }

  std::size_t dim() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> span() const { return values_; }

 private:
  std::vector<double> values_;
};

inline GradientVector operator+(const GradientVector& a,
                                const GradientVector& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("vector add: dimension mismatch");
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
  return GradientVector(std::move(out));
}

inline GradientVector operator-(const GradientVector& a,
                                const GradientVector& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("vector subtract: dimension mismatch");
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] - b[i];
  return GradientVector(std::move(out));
}

inline GradientVector operator*(double s, const GradientVector& a) {
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = s * a[i];
  return GradientVector(std::move(out));
}

// Left-to-right inner product.  This is the reference reduction; do not
// "improve" it with pairwise or compensated summation, or sharded runs stop
// matching single-process runs.
inline double dot(const GradientVector& a, const GradientVector& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("dot: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm_sq(const GradientVector& a) { return dot(a, a); }
inline double norm(const GradientVector& a) { return std::sqrt(norm_sq(a)); }

// Contiguous partition of [0, dim) into nonempty shards, stored as the
// strictly increasing sequence of end offsets (the last one equals dim).
class ShardLayout {
 public:
  explicit ShardLayout(std::vector<std::size_t> ends) : ends_(std::move(ends)) {
    if (ends_.empty())
      throw std::invalid_argument("ShardLayout: no shards");
    if (ends_.front() == 0)
      throw std::invalid_argument("ShardLayout: empty first shard");
    for (std::size_t r = 1; r < ends_.size(); ++r) {
      if (ends_[r] <= ends_[r - 1])
        throw std::invalid_argument("ShardLayout: offsets must increase");
    }
  }

  static ShardLayout single(std::size_t dim) {
    return ShardLayout(std::vector<std::size_t>{dim});
  }

  // Splits dim entries over rank_count shards as evenly as possible, the
  // first dim % rank_count shards taking one extra entry.
  static ShardLayout even(std::size_t dim, std::size_t rank_count) {
    if (rank_count == 0 || rank_count > dim)
      throw std::invalid_argument(
          "ShardLayout::even: rank_count must lie in [1, dim]");
    std::vector<std::size_t> ends(rank_count);
    const std::size_t base = dim / rank_count;
    const std::size_t extra = dim % rank_count;
    std::size_t off = 0;
    for (std::size_t r = 0; r < rank_count; ++r) {
      off += base + (r < extra ? 1 : 0);
      ends[r] = off;
    }
    return ShardLayout(std::move(ends));
  }

  std::size_t rank_count() const { return ends_.size(); }
  std::size_t dim() const { return ends_.back(); }
  std::size_t begin(std::size_t rank) const {
    return rank == 0 ? 0 : ends_[rank - 1];
  }
  std::size_t end(std::size_t rank) const { return ends_[rank]; }
  bool covers(std::size_t dim) const { return ends_.back() == dim; }

 private:
  std::vector<std::size_t> ends_;
};

// The three scalars a rank contributes before the all-reduce: <curr, prev>,
// ||curr||^2 and ||prev||^2 over its shard.
struct ReductionTriple {
  double dot_cross = 0.0;
  double norm_sq_curr = 0.0;
  double norm_sq_prev = 0.0;
};

// Computes the reduction triple shard by shard: each rank accumulates its
// three partials left to right, then partials combine in ascending rank
// order.  One communication round, three scalars per rank.
inline ReductionTriple sharded_reduce(const GradientVector& curr,
                                      const GradientVector& prev,
                                      const ShardLayout& layout) {
  if (curr.dim() != prev.dim())
    throw std::invalid_argument("sharded_reduce: dimension mismatch");
  if (!layout.covers(curr.dim()))
    throw std::invalid_argument("sharded_reduce: layout does not cover dim");
  ReductionTriple total;
  for (std::size_t rank = 0; rank < layout.rank_count(); ++rank) {
    double cross = 0.0, nc = 0.0, np = 0.0;
    for (std::size_t i = layout.begin(rank); i < layout.end(rank); ++i) {
      cross += curr[i] * prev[i];
      nc += curr[i] * curr[i];
      np += prev[i] * prev[i];
    }
    total.dot_cross += cross;
    total.norm_sq_curr += nc;
    total.norm_sq_prev += np;
  }
  return total;
}

// Reference directions shorter than this are treated as zero; projecting
// onto them is refused rather than amplified.
inline constexpr double kZeroReferenceNorm = 1e-30;

struct Decomposition {
  GradientVector parallel;
  GradientVector orthogonal;
};

// Splits g into its component along reference and the orthogonal remainder:
// g_par = <g, u> u with u = reference / ||reference||, g_orth = g - g_par.
inline Decomposition decompose(const GradientVector& g,
                               const GradientVector& reference) {
  if (g.dim() != reference.dim())
    throw std::invalid_argument("decompose: dimension mismatch");
  const double ref_norm = norm(reference);
  if (ref_norm <= kZeroReferenceNorm)
    throw std::invalid_argument("decompose: reference direction is zero");
  const double coeff = dot(g, reference) / (ref_norm * ref_norm);
  std::vector<double> par(g.dim()), orth(g.dim());
  for (std::size_t i = 0; i < g.dim(); ++i) {
    par[i] = coeff * reference[i];
    orth[i] = g[i] - par[i];
  }
  return Decomposition{GradientVector(std::move(par)),
                       GradientVector(std::move(orth))};
}

// alpha * g_par + beta * g_orth.  Equivalent to applying
// beta * I + (alpha - beta) * u u^T without materializing the matrix.
inline GradientVector anisotropic_rescale(const GradientVector& g,
                                          const GradientVector& reference,
                                          double alpha, double beta) {
  if (!(alpha >= 0.0) || !(beta >= 0.0))
    throw std::invalid_argument("anisotropic_rescale: negative scale");
  const Decomposition d = decompose(g, reference);
  std::vector<double> out(g.dim());
  for (std::size_t i = 0; i < g.dim(); ++i)
    out[i] = alpha * d.parallel[i] + beta * d.orthogonal[i];
  return GradientVector(std::move(out));
}

}  // namespace gacsim
