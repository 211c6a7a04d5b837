#pragma once

// Full-batch/minibatch gradient descent and AdamW with decoupled weight
// decay. Decay multiplies the weight matrices directly and never passes
// through the moment estimates; biases are not decayed.

#include <cstdint>

#include "grokalign/jacobian.hpp"
#include "grokalign/network.hpp"
#include "grokalign/rng.hpp"

namespace grokalign {

enum class OptimizerKind { full_batch_gd, adamw };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adamw;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch_size = 0;  // 0 means full batch
};

// W <- W - lr * (grad + weight_decay * W)
inline void gd_step_inplace(PwaNetwork& net, const LayerGrads& grads, double lr,
                            double weight_decay) {
    if (!(lr > 0.0)) throw std::invalid_argument("gd_step: learning rate must be positive");
    for (std::size_t l = 0; l < net.depth(); ++l) {
        Matrix& w = net.layers[l].weight;
        const Matrix& g = grads.weight[l];
        if (!w.same_shape(g)) throw std::invalid_argument("gd_step: gradient shape mismatch");
        for (std::size_t i = 0; i < w.data.size(); ++i)
            w.data[i] -= lr * (g.data[i] + weight_decay * w.data[i]);
        if (net.layers[l].bias) {
            Vector& b = *net.layers[l].bias;
            for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * grads.bias[l][i];
        }
    }
}

inline PwaNetwork gd_step(PwaNetwork net, const LayerGrads& grads, double lr,
                          double weight_decay) {
    gd_step_inplace(net, grads, lr, weight_decay);
    return net;
}

struct AdamWState {
    std::vector<Matrix> m, v;
    std::vector<Vector> mb, vb;
    std::uint64_t t = 0;

    static AdamWState init(const PwaNetwork& net) {
        AdamWState s;
        for (const auto& layer : net.layers) {
            s.m.emplace_back(layer.weight.rows, layer.weight.cols);
            s.v.emplace_back(layer.weight.rows, layer.weight.cols);
            s.mb.emplace_back(layer.bias ? layer.bias->size() : 0, 0.0);
            s.vb.emplace_back(layer.bias ? layer.bias->size() : 0, 0.0);
        }
        return s;
    }
};

inline void adamw_step_inplace(AdamWState& state, PwaNetwork& net, const LayerGrads& grads,
                               const OptimizerConfig& cfg) {
    if (state.m.size() != net.depth())
        throw std::invalid_argument("adamw_step: state does not match network");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t l = 0; l < net.depth(); ++l) {
        Matrix& w = net.layers[l].weight;
        const Matrix& g = grads.weight[l];
        if (!w.same_shape(g)) throw std::invalid_argument("adamw_step: gradient shape mismatch");
        double* m = state.m[l].data.data();
        double* v = state.v[l].data.data();
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g.data[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g.data[i] * g.data[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w.data[i] -= cfg.learning_rate * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                              cfg.weight_decay * w.data[i]);
        }
        if (net.layers[l].bias) {
            Vector& b = *net.layers[l].bias;
            double* m2 = state.mb[l].data();
            double* v2 = state.vb[l].data();
            for (std::size_t i = 0; i < b.size(); ++i) {
                const double gi = grads.bias[l][i];
                m2[i] = cfg.beta1 * m2[i] + (1.0 - cfg.beta1) * gi;
                v2[i] = cfg.beta2 * v2[i] + (1.0 - cfg.beta2) * gi * gi;
                b[i] -= cfg.learning_rate * (m2[i] / bc1) / (std::sqrt(v2[i] / bc2) + cfg.eps);
            }
        }
    }
}

inline std::pair<AdamWState, PwaNetwork> adamw_step(AdamWState state, PwaNetwork net,
                                                    const LayerGrads& grads,
                                                    const OptimizerConfig& cfg) {
    adamw_step_inplace(state, net, grads, cfg);
    return {std::move(state), std::move(net)};
}

// Adds Gaussian noise with std = kappa * train_accuracy to every input row.
inline void adversarial_noise_augment(Matrix& batch, double train_accuracy, double kappa,
                                      RngState& rng) {
    if (kappa < 0.0) throw std::invalid_argument("adversarial_noise_augment: kappa >= 0");
    const double std_dev = kappa * train_accuracy;
    if (std_dev == 0.0) return;
    const Vector noise = sample_gaussian(rng, batch.data.size(), std_dev);
    for (std::size_t i = 0; i < batch.data.size(); ++i) batch.data[i] += noise[i];
}

}  // namespace grokalign
