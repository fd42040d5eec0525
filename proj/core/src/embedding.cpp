#include "dctl/embedding.hpp"

#include <cmath>

#include "dctl/text.hpp"

namespace dctl {

std::uint32_t fnv1a32(std::string_view bytes) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

Vector embed(std::string_view text) {
  Vector v(kEmbeddingDim, 0.0);
  for (const auto& t : tokenize(text)) v[fnv1a32(t) % kEmbeddingDim] += 1.0;
  double norm = std::sqrt(dot(v, v));
  if (norm > 0) {
    for (auto& x : v) x /= norm;
  }
  return v;
}

double dot(const Vector& a, const Vector& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine(const Vector& a, const Vector& b) {
  double na = std::sqrt(dot(a, a));
  double nb = std::sqrt(dot(b, b));
  if (na == 0 || nb == 0) return 0.0;
  return dot(a, b) / (na * nb);
}

}  // namespace dctl
