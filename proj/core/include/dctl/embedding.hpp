#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace dctl {

inline constexpr std::size_t kEmbeddingDim = 256;

using Vector = std::vector<double>;

/// 32-bit FNV-1a.
std::uint32_t fnv1a32(std::string_view bytes);

/// Hashed term-frequency vector over tokenize(text), bucket = fnv1a32(token) % 256,
/// L2-normalized. Text without tokens yields the zero vector.
Vector embed(std::string_view text);

double dot(const Vector& a, const Vector& b);
double cosine(const Vector& a, const Vector& b);

}  // namespace dctl
