#pragma once

#include <optional>
#include <span>

namespace cobwebtm {

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

// Cosine similarity clamped to [-1, 1]; nullopt when either vector has zero
// norm. Identical and exactly antipodal inputs give exactly 1 and -1.
std::optional<double> cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace cobwebtm
