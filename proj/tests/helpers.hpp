#pragma once
#include <random>
#include <span>
#include <string>
#include <vector>

#include "adshot/model.hpp"

namespace testutil {

inline adshot::ModelConfig tiny_config(int layers = 2, int heads = 4, int dim = 8,
                                       std::uint64_t seed = 42) {
    adshot::ModelConfig cfg;
    cfg.num_layers = layers;
    cfg.num_heads = heads;
    cfg.head_dim = dim;
    cfg.hidden_dim = heads * dim;
    cfg.weight_seed = seed;
    return cfg;
}

inline std::string random_text(std::mt19937& rng, int len) {
    std::uniform_int_distribution<int> dist('a', 'z');
    std::string s(len, ' ');
    for (auto& c : s) c = static_cast<char>(dist(rng));
    return s;
}

inline std::vector<float> random_vec(std::mt19937& rng, int n, float lo = -1.0f, float hi = 1.0f) {
    std::uniform_real_distribution<float> dist(lo, hi);
    std::vector<float> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, static_cast<double>(std::abs(a[i] - b[i])));
    }
    return worst;
}

} // namespace testutil
