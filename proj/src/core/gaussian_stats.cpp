#include "cobwebtm/core/gaussian_stats.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cobwebtm/error.hpp"

namespace cobwebtm {

namespace {

constexpr double kTwoPiE = 2.0 * std::numbers::pi * std::numbers::e;

}  // namespace

void validate_embedding(std::span<const double> x, std::size_t dim) {
  if (x.size() != dim) {
    throw ValidationError("embedding has dimension " + std::to_string(x.size()) + ", expected " +
                          std::to_string(dim));
  }
  for (std::size_t d = 0; d < x.size(); ++d) {
    if (!std::isfinite(x[d])) {
      throw ValidationError("embedding coordinate " + std::to_string(d) + " is not finite");
    }
  }
}

GaussianStats::GaussianStats(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

GaussianStats::GaussianStats(std::uint64_t count, std::vector<double> mean, std::vector<double> m2)
    : count_(count), mean_(std::move(mean)), m2_(std::move(m2)) {
  if (mean_.size() != m2_.size()) {
    throw ValidationError("mean and m2 lengths differ");
  }
}

GaussianStats GaussianStats::singleton(std::span<const double> x) {
  GaussianStats s(x.size());
  s.add(x);
  return s;
}

GaussianStats GaussianStats::pooled(const GaussianStats& a, const GaussianStats& b) {
  GaussianStats out = a;
  out.absorb(b);
  return out;
}

void GaussianStats::add(std::span<const double> x) {
  validate_embedding(x, dim());
  ++count_;
  const double n = static_cast<double>(count_);
  for (std::size_t d = 0; d < mean_.size(); ++d) {
    const double delta = x[d] - mean_[d];
    mean_[d] += delta / n;
    m2_[d] += delta * (x[d] - mean_[d]);
  }
}

void GaussianStats::absorb(const GaussianStats& other) {
  if (other.dim() != dim()) {
    throw ValidationError("cannot pool statistics of dimension " + std::to_string(other.dim()) +
                          " into " + std::to_string(dim()));
  }
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double n = na + nb;
  for (std::size_t d = 0; d < mean_.size(); ++d) {
    const double delta = other.mean_[d] - mean_[d];
    mean_[d] += delta * (nb / n);
    m2_[d] += other.m2_[d] + delta * delta * (na * nb / n);
  }
  count_ += other.count_;
}

double GaussianStats::variance(std::size_t d) const {
  if (count_ == 0) return 0.0;
  // Rounding can push m2 a hair below zero after pooling; clamp it.
  const double v = m2_[d] / static_cast<double>(count_);
  return v > 0.0 ? v : 0.0;
}

double entropy(const GaussianStats& s, double variance_floor) {
  double sum = 0.0;
  for (std::size_t d = 0; d < s.dim(); ++d) {
    sum += std::log(kTwoPiE * (s.variance(d) + variance_floor));
  }
  return 0.5 * sum;
}

double singleton_entropy(std::size_t dim, double variance_floor) {
  return 0.5 * static_cast<double>(dim) * std::log(kTwoPiE * variance_floor);
}

double log_likelihood(const GaussianStats& s, std::span<const double> x, double variance_floor) {
  double ll = 0.0;
  for (std::size_t d = 0; d < s.dim(); ++d) {
    const double var = s.variance(d) + variance_floor;
    const double diff = x[d] - s.mean()[d];
    ll += -0.5 * (std::log(2.0 * std::numbers::pi * var) + diff * diff / var);
  }
  return ll;
}

double category_utility(const GaussianStats& parent,
                        std::span<const GaussianStats* const> children,
                        double variance_floor) {
  if (children.empty()) {
    throw ValidationError("category utility needs at least one child");
  }
  std::uint64_t total = 0;
  for (const GaussianStats* c : children) {
    if (c->dim() != parent.dim()) {
      throw ValidationError("child dimension differs from parent");
    }
    total += c->count();
  }
  if (total != parent.count() || total == 0) {
    throw ValidationError("child counts sum to " + std::to_string(total) + " but parent count is " +
                          std::to_string(parent.count()));
  }
  const double parent_u = entropy(parent, variance_floor);
  const double n = static_cast<double>(parent.count());
  double cu = 0.0;
  for (const GaussianStats* c : children) {
    cu += (static_cast<double>(c->count()) / n) * (parent_u - entropy(*c, variance_floor));
  }
  return cu;
}

}  // namespace cobwebtm
