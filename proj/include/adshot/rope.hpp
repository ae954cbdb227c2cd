#pragma once
#include <span>
#include <vector>

namespace adshot {

// cos/sin of delta*theta_i in rotate_half layout: theta_i = base^(-2i/d) for
// i in [0, d/2), duplicated across the paired coordinates i and i + d/2.
// Angles are evaluated in double, factors stored as float.
struct RotationFactors {
    std::vector<float> cos_v;
    std::vector<float> sin_v;

    int dim() const { return static_cast<int>(cos_v.size()); }
};

RotationFactors rotation_factors(long long delta, int head_dim, double rope_base);

// In-place x <- x (*) cos + rotate_half(x) (*) sin with
// rotate_half([a, b]) = [-b, a] over the two halves of x.
void apply_rotation(std::span<float> x, const RotationFactors& f);

// RoPE at position p: rotation by p*theta. Requires even dimension, p >= 0.
std::vector<float> apply_rope(std::span<const float> x, long long position, double rope_base);

// Moves a key encoded at p_old to p_old + delta. delta == 0 returns the key
// bit-identically (guarded fast path).
std::vector<float> reencode_key(std::span<const float> key, long long delta, double rope_base);

} // namespace adshot
