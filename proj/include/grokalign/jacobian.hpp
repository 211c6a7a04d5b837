#pragma once

// Input-space Jacobians of piecewise-affine nets. The centroid of the linear
// region containing x is J_x^T 1 (the sum of Jacobian rows) and is computed
// by a single backward sweep; the Frobenius-norm regularizer and its exact
// weight gradient reuse the same sweep per projection vector.

#include <optional>
#include <utility>

#include "grokalign/network.hpp"
#include "grokalign/rng.hpp"

namespace grokalign {

// Weight-shaped gradient accumulator.
struct LayerGrads {
    std::vector<Matrix> weight;
    std::vector<Vector> bias;  // empty vectors for bias-free layers

    static LayerGrads zeros_like(const PwaNetwork& net) {
        LayerGrads g;
        for (const auto& layer : net.layers) {
            g.weight.emplace_back(layer.weight.rows, layer.weight.cols);
            g.bias.emplace_back(layer.bias ? layer.bias->size() : 0, 0.0);
        }
        return g;
    }

    void add_scaled(const LayerGrads& o, double alpha) {
        for (std::size_t l = 0; l < weight.size(); ++l) {
            axpy(alpha, o.weight[l].data.data(), weight[l].data.data(), weight[l].data.size());
            axpy(alpha, o.bias[l].data(), bias[l].data(), bias[l].size());
        }
    }

    void scale(double alpha) {
        for (auto& w : weight)
            for (double& v : w.data) v *= alpha;
        for (auto& b : bias)
            for (double& v : b) v *= alpha;
    }
};

// ---- vector-Jacobian product ----

// J^T v by backward accumulation through the layer chain; J itself is never
// formed. Cost is one forward plus one backward sweep.
inline Vector vjp(const PwaNetwork& net, const ForwardTrace& trace, const Vector& v) {
    if (v.size() != net.output_dim()) throw std::invalid_argument("vjp: v dim mismatch");
    const std::size_t depth = net.depth();
    Vector b = scaled(v, net.output_scale);
    for (std::size_t i = depth; i-- > 1;) {
        Vector t = matvec_t(net.layers[i].weight, b);
        const Vector& q = trace.gates[i - 1];
        for (std::size_t k = 0; k < t.size(); ++k) t[k] *= q[k];
        b = std::move(t);
    }
    return matvec_t(net.layers[0].weight, b);
}

inline Vector vjp(const PwaNetwork& net, const Vector& x, const Vector& v) {
    return vjp(net, forward_trace(net, x), v);
}

inline Vector centroid(const PwaNetwork& net, const ForwardTrace& trace) {
    return vjp(net, trace, ones(net.output_dim()));
}

inline Vector centroid(const PwaNetwork& net, const Vector& x) {
    return vjp(net, x, ones(net.output_dim()));
}

// ---- exact Jacobian and norms ----

inline Matrix jacobian_exact(const PwaNetwork& net, const Vector& x) {
    return region_affine(net, x).A;
}

inline double frobenius_sq_exact(const PwaNetwork& net, const Vector& x) {
    return frobenius_sq(jacobian_exact(net, x));
}

// (C/n_proj) * sum_i ||J^T v_i||^2 with v_i uniform on the unit sphere in
// R^C; unbiased for ||J||_F^2.
inline double frobenius_sq_estimate(const PwaNetwork& net, const Vector& x,
                                    std::size_t n_proj, RngState& rng) {
    if (n_proj == 0) throw std::invalid_argument("frobenius_sq_estimate: n_proj must be >= 1");
    const std::size_t c = net.output_dim();
    const ForwardTrace trace = forward_trace(net, x);
    double acc = 0.0;
    for (std::size_t i = 0; i < n_proj; ++i) {
        const Vector v = sample_unit_sphere(rng, c);
        const Vector g = vjp(net, trace, v);
        acc += dot(g, g);
    }
    return acc * static_cast<double>(c) / static_cast<double>(n_proj);
}

// ---- regularizer gradient machinery ----
//
// For s = ||J^T v||^2 with the activation pattern held fixed,
// ds/dW^(l) = 2 b_l r_l^T, where b_l is the backward chain of v down to layer
// l and r_l is the forward chain of g = J^T v through the gated linear maps.
// Summing v over the standard basis gives the exact gradient of ||J||_F^2;
// sphere projections give the randomized estimate's gradient.

// Accumulates kappa * (d/dW)||J^T v||^2 into out and returns g = J^T v.
inline Vector accumulate_projection_grad(const PwaNetwork& net, const ForwardTrace& trace,
                                         const Vector& v, double kappa, LayerGrads& out) {
    const std::size_t depth = net.depth();
    std::vector<Vector> b(depth);
    b[depth - 1] = scaled(v, net.output_scale);
    for (std::size_t i = depth - 1; i-- > 0;) {
        Vector t = matvec_t(net.layers[i + 1].weight, b[i + 1]);
        const Vector& q = trace.gates[i];
        for (std::size_t k = 0; k < t.size(); ++k) t[k] *= q[k];
        b[i] = std::move(t);
    }
    Vector g = matvec_t(net.layers[0].weight, b[0]);
    Vector r = g;
    for (std::size_t l = 0; l < depth; ++l) {
        if (l > 0) {
            Vector t = matvec(net.layers[l - 1].weight, r);
            const Vector& q = trace.gates[l - 1];
            for (std::size_t k = 0; k < t.size(); ++k) t[k] *= q[k];
            r = std::move(t);
        }
        Matrix& dw = out.weight[l];
        for (std::size_t i = 0; i < dw.rows; ++i)
            axpy(2.0 * kappa * b[l][i], r.data(), dw.row(i), dw.cols);
    }
    return g;
}

// Gradient of (1/m) sum_p ||J_{x_p}||_F^2 with respect to every weight
// matrix, activation patterns treated as constants (exact a.e.).
inline LayerGrads frobenius_reg_grad(const PwaNetwork& net, const std::vector<Vector>& batch) {
    if (batch.empty()) throw std::invalid_argument("frobenius_reg_grad: empty batch");
    LayerGrads out = LayerGrads::zeros_like(net);
    const std::size_t c = net.output_dim();
    const double kappa = 1.0 / static_cast<double>(batch.size());
    for (const Vector& x : batch) {
        const ForwardTrace trace = forward_trace(net, x);
        for (std::size_t k = 0; k < c; ++k)
            accumulate_projection_grad(net, trace, basis(c, k), kappa, out);
    }
    return out;
}

// ---- diagnostics ----

struct Pc1Result {
    double value = 1.0;
    bool degenerate = false;  // true when J == 0 (value 1 by convention)
};

inline Pc1Result pc1_of_jacobian(const Matrix& j) {
    Matrix jjt = matmul_nt(j, j);
    const double total = trace(jjt);
    if (total <= 0.0) return {1.0, true};
    const Vector eig = eig_sym_small(jjt);
    return {std::max(0.0, eig.front()) / total, false};
}

// sigma_1^2 / sum_i sigma_i^2 of the Jacobian at x.
inline double pc1_explained(const PwaNetwork& net, const Vector& x) {
    return pc1_of_jacobian(jacobian_exact(net, x)).value;
}

struct RowAlignment {
    double max_cos;
    double min_cos;
};

// Max and min over nonzero Jacobian rows of cos(row, x); nullopt when every
// row is zero.
inline std::optional<RowAlignment> row_alignment(const PwaNetwork& net, const Vector& x) {
    const double nx = norm2(x);
    if (nx == 0.0) throw std::invalid_argument("row_alignment: zero input");
    const Matrix j = jacobian_exact(net, x);
    std::optional<RowAlignment> out;
    for (std::size_t r = 0; r < j.rows; ++r) {
        double nr = 0.0, d = 0.0;
        for (std::size_t k = 0; k < j.cols; ++k) {
            nr += j(r, k) * j(r, k);
            d += j(r, k) * x[k];
        }
        if (nr == 0.0) continue;
        const double cos_r = d / (std::sqrt(nr) * nx);
        if (!out)
            out = RowAlignment{cos_r, cos_r};
        else {
            out->max_cos = std::max(out->max_cos, cos_r);
            out->min_cos = std::min(out->min_cos, cos_r);
        }
    }
    return out;
}

struct JacobianReport {
    Matrix J;
    double frobenius_sq = 0.0;
    double pc1_explained = 1.0;
    bool pc1_degenerate = false;
    Vector centroid;
};

inline JacobianReport jacobian_report(const PwaNetwork& net, const Vector& x) {
    JacobianReport rep;
    rep.J = jacobian_exact(net, x);
    rep.frobenius_sq = frobenius_sq(rep.J);
    const Pc1Result pc1 = pc1_of_jacobian(rep.J);
    rep.pc1_explained = pc1.value;
    rep.pc1_degenerate = pc1.degenerate;
    rep.centroid = matvec_t(rep.J, ones(rep.J.rows));
    return rep;
}

}  // namespace grokalign
