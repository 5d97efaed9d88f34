#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cobwebtm {

using Embedding = std::vector<double>;

// Throws ValidationError unless x has `dim` finite coordinates.
void validate_embedding(std::span<const double> x, std::size_t dim);

/// Diagonal-Gaussian sufficient statistics of the points absorbed so far.
///
/// Keeps the count, the running mean and the per-dimension sum of squared
/// deviations from the mean (m2). Population variance is m2 / count. Updates
/// use Welford's single-pass recurrence; pooling uses the pairwise
/// combination of Chan et al., so both agree with a two-pass computation to
/// rounding error.
class GaussianStats {
 public:
  GaussianStats() = default;
  explicit GaussianStats(std::size_t dim);
  GaussianStats(std::uint64_t count, std::vector<double> mean, std::vector<double> m2);

  static GaussianStats singleton(std::span<const double> x);
  static GaussianStats pooled(const GaussianStats& a, const GaussianStats& b);

  // Incorporate one point. Rejects dimension mismatch and non-finite input.
  void add(std::span<const double> x);
  void absorb(const GaussianStats& other);

  std::size_t dim() const { return mean_.size(); }
  std::uint64_t count() const { return count_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& m2() const { return m2_; }
  double variance(std::size_t d) const;

  friend bool operator==(const GaussianStats&, const GaussianStats&) = default;

 private:
  std::uint64_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

// Differential entropy of the node Gaussian, 1/2 sum_d ln(2 pi e (var_d + floor)).
double entropy(const GaussianStats& s, double variance_floor);

// Entropy of a single point: every variance is zero, leaving only the floor.
double singleton_entropy(std::size_t dim, double variance_floor);

// ln N(x; mean, diag(var + floor)).
double log_likelihood(const GaussianStats& s, std::span<const double> x, double variance_floor);

/// Category utility of a parent over a partition of its members:
///   sum_c (N_c / N_parent) * (U(parent) - U(c)).
/// The children need not be the parent's actual children; operator scoring
/// passes hypothetical partitions. Requires a non-empty partition whose counts
/// sum to the parent's count.
double category_utility(const GaussianStats& parent,
                        std::span<const GaussianStats* const> children,
                        double variance_floor);

}  // namespace cobwebtm
