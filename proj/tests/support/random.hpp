#pragma once

#include <cstdint>
#include <random>

#include "resdit/grid.hpp"

namespace testing_support {

inline resdit::TokenGrid random_grid(std::size_t h, std::size_t w, std::size_t c,
                                     std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    resdit::TokenGrid g(h, w, c);
    for (double& v : g.data()) v = dist(rng);
    return g;
}

inline std::size_t uniform_int(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace testing_support
