#include "cobwebtm/core/vector_ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cobwebtm {

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

std::optional<double> cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = squared_norm(a);
  const double nb = squared_norm(b);
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  // sqrt(na * nb) rather than sqrt(na) * sqrt(nb): for a == b it reproduces
  // na exactly.
  const double c = dot(a, b) / std::sqrt(na * nb);
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace cobwebtm
