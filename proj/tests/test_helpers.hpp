#pragma once

// Shared fixtures: random nets/points, finite-difference oracles, and
// activation-pattern stability checks used by the gradient tests.

#include <functional>

#include "grokalign/jacobian.hpp"
#include "grokalign/network.hpp"
#include "grokalign/rng.hpp"

namespace testutil {

using namespace grokalign;

inline Vector random_vector(RngState& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    Vector v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline PwaNetwork random_net(RngState& rng, const std::vector<std::size_t>& dims,
                             bool bias = false, Activation act = Activation::relu,
                             double output_scale = 1.0) {
    PwaNetwork net = init_network(dims, rng.next_u64(), bias, act, 1.0, output_scale);
    if (bias)
        for (auto& layer : net.layers)
            for (double& b : *layer.bias) b = rng.uniform(-0.5, 0.5);
    return net;
}

inline double rel_err(double a, double b) {
    const double den = std::max(std::abs(a), std::abs(b));
    return den == 0.0 ? 0.0 : std::abs(a - b) / den;
}

// True if every point keeps its activation pattern under both perturbed nets.
inline bool patterns_stable(const PwaNetwork& a, const PwaNetwork& b,
                            const std::vector<Vector>& points, const PwaNetwork& ref) {
    for (const Vector& x : points) {
        const ActivationPattern pr = activation_pattern(ref, x);
        if (!same_pattern(pr, activation_pattern(a, x))) return false;
        if (!same_pattern(pr, activation_pattern(b, x))) return false;
    }
    return true;
}

// Central finite difference of a scalar functional of the network with
// respect to weight (layer, i); returns nullopt if a gate flips.
inline std::optional<double> fd_weight(const PwaNetwork& net, std::size_t layer,
                                       std::size_t index, double h,
                                       const std::vector<Vector>& pattern_points,
                                       const std::function<double(const PwaNetwork&)>& f) {
    PwaNetwork plus = net, minus = net;
    plus.layers[layer].weight.data[index] += h;
    minus.layers[layer].weight.data[index] -= h;
    if (!patterns_stable(plus, minus, pattern_points, net)) return std::nullopt;
    return (f(plus) - f(minus)) / (2.0 * h);
}

}  // namespace testutil
