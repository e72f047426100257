#pragma once

#include <cmath>
#include <cstdint>

namespace defnet {

/// Planar point or displacement in workspace meters.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2& operator-=(const Vec2& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  friend Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
  friend Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
  friend Vec2 operator*(double s, const Vec2& v) { return {s * v.x, s * v.y}; }
  friend Vec2 operator*(const Vec2& v, double s) { return s * v; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double norm(const Vec2& v) { return std::hypot(v.x, v.y); }

/// Image pixel, row-major: row grows with workspace y, col with workspace x.
struct Pixel {
  int row = 0;
  int col = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// SplitMix64 finalizer; used to derive independent RNG streams from
/// composite keys such as (master seed, tier, variant).
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(a) ^ (b + 0x632BE59BD9B4E019ULL));
}

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, Rest... rest) {
  return mix_seed(mix_seed(a, b), static_cast<std::uint64_t>(rest)...);
}

}  // namespace defnet
