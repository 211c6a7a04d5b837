#pragma once

// Loss functions, reverse-mode gradients through the network, and the
// composed training objective with the Jacobian-norm penalty. Single-sample
// entry points define the contracts; the Batch* variants carry the training
// loop and are cross-checked against the single-sample path in tests.

#include <cstdint>
#include <optional>

#include "grokalign/jacobian.hpp"
#include "grokalign/network.hpp"

namespace grokalign {

enum class LossKind { mse_onehot, cross_entropy, binary_ce };

inline const char* loss_name(LossKind k) {
    switch (k) {
        case LossKind::mse_onehot: return "mse_onehot";
        case LossKind::cross_entropy: return "cross_entropy";
        case LossKind::binary_ce: return "binary_ce";
    }
    return "?";
}

inline std::optional<LossKind> loss_from_name(const std::string& s) {
    if (s == "mse_onehot") return LossKind::mse_onehot;
    if (s == "cross_entropy") return LossKind::cross_entropy;
    if (s == "binary_ce") return LossKind::binary_ce;
    return std::nullopt;
}

inline double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

inline Vector softmax(const Vector& logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    Vector p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

struct LossValueGrad {
    double loss = 0.0;
    Vector grad;  // d loss / d outputs
};

// mse_onehot: ||e_y - f||^2, cross_entropy: -log softmax_y, binary_ce on
// scalar outputs with y in {0,1}.
inline LossValueGrad loss_and_output_grad(const Vector& outputs, std::size_t label,
                                          LossKind kind) {
    LossValueGrad out;
    switch (kind) {
        case LossKind::mse_onehot: {
            if (label >= outputs.size())
                throw std::invalid_argument("loss: label out of range");
            out.grad.resize(outputs.size());
            for (std::size_t c = 0; c < outputs.size(); ++c) {
                const double r = outputs[c] - (c == label ? 1.0 : 0.0);
                out.loss += r * r;
                out.grad[c] = 2.0 * r;
            }
            return out;
        }
        case LossKind::cross_entropy: {
            if (label >= outputs.size())
                throw std::invalid_argument("loss: label out of range");
            const Vector p = softmax(outputs);
            out.loss = -std::log(std::max(p[label], 1e-300));
            out.grad = p;
            out.grad[label] -= 1.0;
            return out;
        }
        case LossKind::binary_ce: {
            if (outputs.size() != 1)
                throw std::invalid_argument("binary_ce: scalar-output nets only");
            if (label > 1) throw std::invalid_argument("binary_ce: label must be 0 or 1");
            const double f = outputs[0];
            const double y = static_cast<double>(label);
            // log(1+exp(-f)) + (1-y) f, stable for either sign of f
            const double sp = f >= 0.0 ? std::log1p(std::exp(-f)) : -f + std::log1p(std::exp(f));
            out.loss = sp + (1.0 - y) * f;
            out.grad = {sigmoid(f) - y};
            return out;
        }
    }
    throw std::logic_error("loss_and_output_grad: unknown kind");
}

// ---- single-sample reverse pass ----

// Exact gradient of loss(forward(x)) at the current activation pattern.
inline LayerGrads backward(const PwaNetwork& net, const ForwardTrace& trace,
                           const Vector& output_grad) {
    if (output_grad.size() != net.output_dim())
        throw std::invalid_argument("backward: output_grad dim mismatch");
    LayerGrads grads = LayerGrads::zeros_like(net);
    Vector delta = scaled(output_grad, net.output_scale);
    for (std::size_t l = net.depth(); l-- > 0;) {
        Matrix& dw = grads.weight[l];
        const Vector& h = trace.inputs[l];
        for (std::size_t i = 0; i < dw.rows; ++i) axpy(delta[i], h.data(), dw.row(i), dw.cols);
        if (!grads.bias[l].empty())
            for (std::size_t i = 0; i < delta.size(); ++i) grads.bias[l][i] += delta[i];
        if (l > 0) {
            Vector t = matvec_t(net.layers[l].weight, delta);
            const Vector& q = trace.gates[l - 1];
            for (std::size_t k = 0; k < t.size(); ++k) t[k] *= q[k];
            delta = std::move(t);
        }
    }
    return grads;
}

inline LayerGrads backward(const PwaNetwork& net, const Vector& x, const Vector& output_grad) {
    return backward(net, forward_trace(net, x), output_grad);
}

// ---- batched evaluation (rows are samples) ----

struct BatchTrace {
    std::vector<Matrix> inputs;  // inputs[l]: m x d_in(l)
    std::vector<Matrix> gates;   // per non-final layer: m x d_out(l)
    Matrix output;               // m x C, scaled by output_scale
};

inline BatchTrace forward_batch(const PwaNetwork& net, const Matrix& x) {
    if (x.cols != net.input_dim()) throw std::invalid_argument("forward_batch: dim mismatch");
    BatchTrace t;
    Matrix h = x;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        Matrix z = matmul_nt(h, net.layers[l].weight);
        if (net.layers[l].bias) {
            const Vector& b = *net.layers[l].bias;
            for (std::size_t p = 0; p < z.rows; ++p) axpy(1.0, b.data(), z.row(p), z.cols);
        }
        t.inputs.push_back(std::move(h));
        if (l + 1 < net.depth()) {
            Matrix g(z.rows, z.cols);
            for (std::size_t i = 0; i < z.data.size(); ++i) {
                g.data[i] = gate_value(net.activation, net.leaky_slope, z.data[i]);
                z.data[i] *= g.data[i];
            }
            t.gates.push_back(std::move(g));
            h = std::move(z);
        } else {
            for (double& v : z.data) v *= net.output_scale;
            t.output = std::move(z);
        }
    }
    return t;
}

// Gradient of sum_p scale_p * loss_p given per-row output gradients already
// multiplied by scale_p.
inline LayerGrads backward_batch(const PwaNetwork& net, const BatchTrace& trace,
                                 Matrix output_grads) {
    LayerGrads grads = LayerGrads::zeros_like(net);
    for (double& v : output_grads.data) v *= net.output_scale;
    Matrix delta = std::move(output_grads);
    for (std::size_t l = net.depth(); l-- > 0;) {
        grads.weight[l] = matmul_tn(delta, trace.inputs[l]);
        if (!grads.bias[l].empty())
            for (std::size_t p = 0; p < delta.rows; ++p)
                axpy(1.0, delta.row(p), grads.bias[l].data(), delta.cols);
        if (l > 0) {
            Matrix t = matmul(delta, net.layers[l].weight);
            const Matrix& q = trace.gates[l - 1];
            for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] *= q.data[i];
            delta = std::move(t);
        }
    }
    return grads;
}

struct BatchLoss {
    double mean_loss = 0.0;
    LayerGrads grads;  // gradient of the mean loss
    std::size_t correct = 0;
};

inline std::size_t predict_row(const double* out, std::size_t c) {
    if (c == 1) return out[0] > 0.0 ? 1 : 0;  // sigmoid threshold 0.5
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k)
        if (out[k] > out[best]) best = k;  // ties keep the lowest index
    return best;
}

inline BatchLoss data_loss_batch(const PwaNetwork& net, const BatchTrace& trace,
                                 const std::vector<std::size_t>& labels, LossKind kind) {
    const std::size_t m = trace.output.rows;
    if (labels.size() != m) throw std::invalid_argument("data_loss_batch: label count mismatch");
    BatchLoss out;
    Matrix og(m, trace.output.cols);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t p = 0; p < m; ++p) {
        Vector row(trace.output.row(p), trace.output.row(p) + trace.output.cols);
        LossValueGrad lv = loss_and_output_grad(row, labels[p], kind);
        out.mean_loss += lv.loss * inv_m;
        for (std::size_t c = 0; c < og.cols; ++c) og(p, c) = lv.grad[c] * inv_m;
        if (predict_row(trace.output.row(p), trace.output.cols) == labels[p]) ++out.correct;
    }
    out.grads = backward_batch(net, trace, std::move(og));
    return out;
}

// ---- GrokAlign objective ----

struct GrokAlignConfig {
    enum class Mode { minimize, constrain };
    enum class Estimator { exact, randomized };
    double lambda = 0.0;   // weighting coefficient of the Jacobian penalty
    Mode mode = Mode::minimize;
    double target = 0.0;   // constrain mode: held level for avg ||J||_F
    Estimator estimator = Estimator::exact;
    std::size_t n_proj = 1;
    bool squared = true;   // minimize mode penalizes ||J||_F^2 when set
};

struct ObjectiveResult {
    double total = 0.0;
    double data_loss = 0.0;
    double penalty = 0.0;
    double mean_frobenius = 0.0;     // mean ||J||_F over the batch (or its estimate)
    double mean_frobenius_sq = 0.0;  // mean ||J||_F^2 over the batch
    LayerGrads grads;
    std::size_t correct = 0;
};

// Batched penalty chains: per projection matrix V (m x C), compute
// B-chains, G = J^T v rows, R-chains, and s_p += coef * ||g_p||^2. When
// row_scale is set, also accumulate 2 * row_scale_p * coef * b_l r_l^T.
namespace detail {

inline void penalty_projection_pass(const PwaNetwork& net, const BatchTrace& trace,
                                    const Matrix& v, double coef, Vector& s,
                                    const Vector* row_scale, LayerGrads* out) {
    const std::size_t depth = net.depth();
    std::vector<Matrix> b(depth);
    b[depth - 1] = v;
    for (double& x : b[depth - 1].data) x *= net.output_scale;
    for (std::size_t i = depth - 1; i-- > 0;) {
        Matrix t = matmul(b[i + 1], net.layers[i + 1].weight);
        const Matrix& q = trace.gates[i];
        for (std::size_t k = 0; k < t.data.size(); ++k) t.data[k] *= q.data[k];
        b[i] = std::move(t);
    }
    Matrix g = matmul(b[0], net.layers[0].weight);  // m x d, rows are J^T v
    for (std::size_t p = 0; p < g.rows; ++p) {
        const double* gp = g.row(p);
        double acc = 0.0;
        for (std::size_t k = 0; k < g.cols; ++k) acc += gp[k] * gp[k];
        s[p] += coef * acc;
    }
    if (!out) return;
    Matrix r = std::move(g);
    for (std::size_t l = 0; l < depth; ++l) {
        if (l > 0) {
            Matrix t = matmul_nt(r, net.layers[l - 1].weight);
            const Matrix& q = trace.gates[l - 1];
            for (std::size_t k = 0; k < t.data.size(); ++k) t.data[k] *= q.data[k];
            r = std::move(t);
        }
        Matrix bs = b[l];
        for (std::size_t p = 0; p < bs.rows; ++p) {
            const double rs = 2.0 * coef * (*row_scale)[p];
            double* row = bs.row(p);
            for (std::size_t k = 0; k < bs.cols; ++k) row[k] *= rs;
        }
        Matrix dw = matmul_tn(bs, r);
        axpy(1.0, dw.data.data(), out->weight[l].data.data(), dw.data.size());
    }
}

inline Matrix penalty_projections(const PwaNetwork& net, std::size_t m, std::size_t index,
                                  const GrokAlignConfig& ga, RngState& rng) {
    const std::size_t c = net.output_dim();
    Matrix v(m, c);
    if (ga.estimator == GrokAlignConfig::Estimator::exact) {
        for (std::size_t p = 0; p < m; ++p) v(p, index) = 1.0;
    } else {
        for (std::size_t p = 0; p < m; ++p) {
            const Vector draw = sample_unit_sphere(rng, c);
            std::copy(draw.begin(), draw.end(), v.row(p));
        }
    }
    return v;
}

}  // namespace detail

// Training objective: data loss plus the Jacobian penalty.
//   minimize:  total = L + lambda * mean_p ||J_p||_F^2   (or ||J_p||_F unsquared)
//   constrain: total = L + lambda * |target - mean_p ||J_p||_F|
// Gradients include the penalty term, with activation patterns held fixed.
inline ObjectiveResult grokalign_objective_batch(const PwaNetwork& net, const Matrix& x,
                                                 const std::vector<std::size_t>& labels,
                                                 LossKind kind, const GrokAlignConfig& ga,
                                                 RngState& rng) {
    const std::size_t m = x.rows;
    if (m == 0) throw std::invalid_argument("grokalign_objective: empty batch");
    const BatchTrace trace = forward_batch(net, x);
    BatchLoss data = data_loss_batch(net, trace, labels, kind);

    ObjectiveResult res;
    res.data_loss = data.mean_loss;
    res.correct = data.correct;
    res.grads = std::move(data.grads);

    if (ga.lambda > 0.0) {
        const std::size_t c = net.output_dim();
        const std::size_t n_pass =
            ga.estimator == GrokAlignConfig::Estimator::exact ? c : ga.n_proj;
        const double coef = ga.estimator == GrokAlignConfig::Estimator::exact
                                ? 1.0
                                : static_cast<double>(c) / static_cast<double>(ga.n_proj);
        const double inv_m = 1.0 / static_cast<double>(m);
        Vector s(m, 0.0);
        if (ga.mode == GrokAlignConfig::Mode::minimize && ga.squared) {
            // coefficient known upfront: fuse value and gradient in one pass
            const Vector row_scale(m, ga.lambda * inv_m);
            for (std::size_t k = 0; k < n_pass; ++k) {
                const Matrix v = detail::penalty_projections(net, m, k, ga, rng);
                detail::penalty_projection_pass(net, trace, v, coef, s, &row_scale, &res.grads);
            }
        } else {
            // per-sample norms first, then the same projections with the
            // now-known chain coefficients
            RngState proj_rng = rng;
            for (std::size_t k = 0; k < n_pass; ++k) {
                const Matrix v = detail::penalty_projections(net, m, k, ga, rng);
                detail::penalty_projection_pass(net, trace, v, coef, s, nullptr, nullptr);
            }
            double mean_norm = 0.0;
            for (double sp : s) mean_norm += std::sqrt(std::max(sp, 0.0)) * inv_m;
            Vector row_scale(m, 0.0);
            double sign = 1.0;
            if (ga.mode == GrokAlignConfig::Mode::constrain) {
                const double gap = ga.target - mean_norm;
                res.penalty = ga.lambda * std::abs(gap);
                sign = gap > 0.0 ? -1.0 : (gap < 0.0 ? 1.0 : 0.0);
            } else {
                res.penalty = ga.lambda * mean_norm;
            }
            for (std::size_t p = 0; p < m; ++p)
                row_scale[p] =
                    s[p] > 0.0 ? sign * ga.lambda * inv_m / (2.0 * std::sqrt(s[p])) : 0.0;
            Vector s2(m, 0.0);
            for (std::size_t k = 0; k < n_pass; ++k) {
                const Matrix v = detail::penalty_projections(net, m, k, ga, proj_rng);
                detail::penalty_projection_pass(net, trace, v, coef, s2, &row_scale, &res.grads);
            }
        }
        double mean_sq = 0.0, mean_norm = 0.0;
        for (double sp : s) {
            mean_sq += sp * inv_m;
            mean_norm += std::sqrt(std::max(sp, 0.0)) * inv_m;
        }
        res.mean_frobenius_sq = mean_sq;
        res.mean_frobenius = mean_norm;
        if (ga.mode == GrokAlignConfig::Mode::minimize && ga.squared)
            res.penalty = ga.lambda * mean_sq;
    }
    res.total = res.data_loss + res.penalty;
    return res;
}

struct EvalStats {
    double mean_loss = 0.0;
    double accuracy = 0.0;
};

inline EvalStats evaluate_batch(const PwaNetwork& net, const Matrix& x,
                                const std::vector<std::size_t>& labels, LossKind kind) {
    const BatchTrace trace = forward_batch(net, x);
    EvalStats st;
    std::size_t correct = 0;
    for (std::size_t p = 0; p < x.rows; ++p) {
        Vector row(trace.output.row(p), trace.output.row(p) + trace.output.cols);
        st.mean_loss += loss_and_output_grad(row, labels[p], kind).loss;
        if (predict_row(trace.output.row(p), trace.output.cols) == labels[p]) ++correct;
    }
    st.mean_loss /= static_cast<double>(x.rows);
    st.accuracy = static_cast<double>(correct) / static_cast<double>(x.rows);
    return st;
}

// Convenience wrapper over a list of sample vectors.
inline ObjectiveResult grokalign_objective(const PwaNetwork& net,
                                           const std::vector<Vector>& batch,
                                           const std::vector<std::size_t>& labels, LossKind kind,
                                           const GrokAlignConfig& ga, RngState& rng) {
    if (batch.empty()) throw std::invalid_argument("grokalign_objective: empty batch");
    Matrix x(batch.size(), batch.front().size());
    for (std::size_t p = 0; p < batch.size(); ++p) {
        if (batch[p].size() != x.cols)
            throw std::invalid_argument("grokalign_objective: ragged batch");
        std::copy(batch[p].begin(), batch[p].end(), x.row(p));
    }
    return grokalign_objective_batch(net, x, labels, kind, ga, rng);
}

}  // namespace grokalign
