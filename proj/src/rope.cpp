#include "adshot/rope.hpp"

#include <cmath>
#include <stdexcept>

namespace adshot {

RotationFactors rotation_factors(long long delta, int head_dim, double rope_base) {
    if (head_dim <= 0 || head_dim % 2 != 0) {
        throw std::invalid_argument("rotation_factors: head_dim must be positive and even");
    }
    const int half = head_dim / 2;
    RotationFactors f;
    f.cos_v.resize(head_dim);
    f.sin_v.resize(head_dim);
    for (int i = 0; i < half; ++i) {
        const double theta = std::pow(rope_base, -2.0 * i / head_dim);
        const double angle = static_cast<double>(delta) * theta;
        const float c = static_cast<float>(std::cos(angle));
        const float s = static_cast<float>(std::sin(angle));
        f.cos_v[i] = c;
        f.cos_v[i + half] = c;
        f.sin_v[i] = s;
        f.sin_v[i + half] = s;
    }
    return f;
}

void apply_rotation(std::span<float> x, const RotationFactors& f) {
    if (static_cast<int>(x.size()) != f.dim()) {
        throw std::invalid_argument("apply_rotation: dimension mismatch");
    }
    const int half = static_cast<int>(x.size()) / 2;
    for (int i = 0; i < half; ++i) {
        const float lo = x[i];
        const float hi = x[i + half];
        x[i] = lo * f.cos_v[i] - hi * f.sin_v[i];
        x[i + half] = hi * f.cos_v[i + half] + lo * f.sin_v[i + half];
    }
}

std::vector<float> apply_rope(std::span<const float> x, long long position, double rope_base) {
    if (position < 0) {
        throw std::invalid_argument("apply_rope: negative position");
    }
    std::vector<float> out(x.begin(), x.end());
    const RotationFactors f = rotation_factors(position, static_cast<int>(x.size()), rope_base);
    apply_rotation(out, f);
    return out;
}

std::vector<float> reencode_key(std::span<const float> key, long long delta, double rope_base) {
    std::vector<float> out(key.begin(), key.end());
    if (delta == 0) {
        return out;
    }
    const RotationFactors f = rotation_factors(delta, static_cast<int>(key.size()), rope_base);
    apply_rotation(out, f);
    return out;
}

} // namespace adshot
