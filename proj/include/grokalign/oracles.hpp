#pragma once

// Closed-form optima, robustness radii, the two-layer NTK, and centroid
// rate predictions, together with the brute-force routes used to validate
// them. These are deliberately independent of the main gradient engine
// wherever they act as its oracle.

#include <utility>

#include "grokalign/losses.hpp"
#include "grokalign/network.hpp"

namespace grokalign {

// Row coefficients of the aligned optimum A_row = a*x (correct class) and
// b*x (incorrect classes) under the Frobenius budget ||A||_F^2 = alpha.
struct AlignedCoeffs {
    double a = 0.0;
    double b = 0.0;
};

inline AlignedCoeffs optimal_aligned_coeffs(LossKind kind, std::size_t c, double alpha,
                                            double x_norm) {
    if (c < 2) throw std::invalid_argument("optimal_aligned_coeffs: need C >= 2");
    if (!(alpha > 0.0) || !(x_norm > 0.0))
        throw std::invalid_argument("optimal_aligned_coeffs: alpha and ||x|| must be positive");
    const double cd = static_cast<double>(c);
    switch (kind) {
        case LossKind::cross_entropy:
            return {std::sqrt(alpha * (cd - 1.0) / cd) / x_norm,
                    -std::sqrt(alpha / (cd * (cd - 1.0))) / x_norm};
        case LossKind::mse_onehot:
            return {std::sqrt(alpha) / x_norm, 0.0};
        case LossKind::binary_ce:
            throw std::invalid_argument("optimal_aligned_coeffs: vector-output losses only");
    }
    throw std::logic_error("optimal_aligned_coeffs: unknown loss");
}

struct ConstrainedAffineResult {
    Matrix A;
    bool converged = false;
    double grad_norm = 0.0;  // tangential gradient norm at exit
};

// Numerical route to the constrained optimum: gradient descent on
// ell(A x, y) over A in R^{C x d} with the iterate renormalized onto the
// sphere ||A||_F^2 = alpha after every step. The renormalization runs both
// ways because with a slack ball constraint the mean-squared objective has
// interior minimizers that are not the norm-budget optimum being checked.
inline ConstrainedAffineResult solve_constrained_affine(LossKind kind, const Vector& x,
                                                        std::size_t label, std::size_t c,
                                                        double alpha, std::size_t steps,
                                                        double lr) {
    if (norm2(x) == 0.0) throw std::invalid_argument("solve_constrained_affine: zero input");
    if (label >= c) throw std::invalid_argument("solve_constrained_affine: label out of range");
    const std::size_t d = x.size();
    Matrix a(c, d, 0.0);
    Matrix grad(c, d, 0.0);
    const double sqrt_alpha = std::sqrt(alpha);
    for (std::size_t it = 0; it < steps; ++it) {
        const Vector out = matvec(a, x);
        const LossValueGrad lv = loss_and_output_grad(out, label, kind);
        for (std::size_t r = 0; r < c; ++r)
            for (std::size_t k = 0; k < d; ++k) grad(r, k) = lv.grad[r] * x[k];
        for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] -= lr * grad.data[i];
        const double nf = frobenius(a);
        if (nf > 0.0)
            for (double& v : a.data) v *= sqrt_alpha / nf;
    }
    // stationarity on the sphere: gradient minus its radial component
    const Vector out = matvec(a, x);
    const LossValueGrad lv = loss_and_output_grad(out, label, kind);
    for (std::size_t r = 0; r < c; ++r)
        for (std::size_t k = 0; k < d; ++k) grad(r, k) = lv.grad[r] * x[k];
    double ga = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) ga += grad.data[i] * a.data[i];
    const double radial = ga / alpha;
    double tang_sq = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double t = grad.data[i] - radial * a.data[i];
        tang_sq += t * t;
    }
    ConstrainedAffineResult res;
    res.A = std::move(a);
    res.grad_norm = std::sqrt(tang_sq);
    res.converged = res.grad_norm <= 1e-6 * std::max(1.0, std::abs(radial) * sqrt_alpha);
    return res;
}

// Minimal misclassifying l2 perturbation norm of the local map c*v^T at x:
// ||eps|| must exceed v^T x / ||v||. Maximized at v proportional to x, where
// it equals ||x||. Returns nullopt when v^T x <= 0 (already misclassified).
inline std::optional<double> robustness_radius_rank1(const Vector& v, const Vector& x) {
    const double nv = norm2(v);
    if (nv == 0.0) throw std::invalid_argument("robustness_radius_rank1: zero v");
    const double vx = dot(v, x);
    if (vx <= 0.0) return std::nullopt;
    return vx / nv;
}

// ---- neural tangent kernel ----

namespace detail {

inline void require_two_layer_scalar(const PwaNetwork& net) {
    if (net.depth() != 2 || net.output_dim() != 1 || net.has_bias())
        throw std::invalid_argument("ntk_two_layer: needs a 2-layer scalar-output bias-free net");
}

}  // namespace detail

// Theta(x, x') = sigma(W1 x)^T sigma(W1 x') + (x^T x') (w2 Qx Qx' w2^T),
// scaled by output_scale^2 when the network carries an output scale.
inline double ntk_two_layer(const PwaNetwork& net, const Vector& x, const Vector& xp) {
    detail::require_two_layer_scalar(net);
    const Matrix& w1 = net.layers[0].weight;
    const Matrix& w2 = net.layers[1].weight;  // 1 x d1
    Vector z = matvec(w1, x);
    Vector zp = matvec(w1, xp);
    double term1 = 0.0, gate_quad = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double qi = gate_value(net.activation, net.leaky_slope, z[i]);
        const double qpi = gate_value(net.activation, net.leaky_slope, zp[i]);
        term1 += (qi * z[i]) * (qpi * zp[i]);
        gate_quad += w2(0, i) * w2(0, i) * qi * qpi;
    }
    const double g2 = net.output_scale * net.output_scale;
    return g2 * (term1 + dot(x, xp) * gate_quad);
}

// Architecture-agnostic kernel: flattened parameter-gradient inner product,
// computed through the generic backward pass.
inline double ntk_brute(const PwaNetwork& net, const Vector& x, const Vector& xp) {
    if (net.output_dim() != 1) throw std::invalid_argument("ntk_brute: scalar output only");
    const LayerGrads gx = backward(net, x, Vector{1.0});
    const LayerGrads gxp = backward(net, xp, Vector{1.0});
    double acc = 0.0;
    for (std::size_t l = 0; l < gx.weight.size(); ++l) {
        const auto& a = gx.weight[l].data;
        const auto& b = gxp.weight[l].data;
        for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
        for (std::size_t i = 0; i < gx.bias[l].size(); ++i) acc += gx.bias[l][i] * gxp.bias[l][i];
    }
    return acc;
}

// d/dt <x, mu_x> under full-batch gradient descent at rate eta with the
// binary cross-entropy loss: (eta/m) sum_p Theta(x, x_p) (y_p - sigmoid(f_p)).
inline double inner_product_rate(const PwaNetwork& net, const std::vector<Vector>& batch,
                                 const std::vector<std::size_t>& labels, const Vector& x,
                                 double eta) {
    detail::require_two_layer_scalar(net);
    if (batch.size() != labels.size() || batch.empty())
        throw std::invalid_argument("inner_product_rate: bad batch");
    double acc = 0.0;
    for (std::size_t p = 0; p < batch.size(); ++p) {
        if (labels[p] > 1) throw std::invalid_argument("inner_product_rate: labels in {0,1}");
        const double f = forward(net, batch[p])[0];
        const double residual = static_cast<double>(labels[p]) - sigmoid(f);
        acc += ntk_two_layer(net, x, batch[p]) * residual;
    }
    return eta / static_cast<double>(batch.size()) * acc;
}

// ---- vector-output centroid dynamics ----

struct CentroidRate {
    Vector total;        // d/dt mu_x
    Vector second_term;  // the residual-sum term; identically zero under CE
};

// Two-term rate of the centroid of a two-layer vector-output bias-free net:
//   (eta/m) sum_p [ (m_p^T W2 Q_p Q_x W2^T 1) x_p
//                   + (W1^T Q_x sigma(W1 x_p)) (m_p^T 1) ]
// with m_p = e_y - softmax(f_p) for cross-entropy, 2(e_y - f_p) for MSE.
inline CentroidRate centroid_rate_terms(const PwaNetwork& net, const std::vector<Vector>& batch,
                                        const std::vector<std::size_t>& labels, const Vector& x,
                                        double eta, LossKind kind) {
    if (net.depth() != 2 || net.has_bias())
        throw std::invalid_argument("centroid_rate: needs a 2-layer bias-free net");
    if (kind == LossKind::binary_ce)
        throw std::invalid_argument("centroid_rate: vector-output losses only");
    if (batch.size() != labels.size() || batch.empty())
        throw std::invalid_argument("centroid_rate: bad batch");
    const Matrix& w1 = net.layers[0].weight;
    const Matrix& w2 = net.layers[1].weight;
    const std::size_t c = net.output_dim();
    const double gamma = net.output_scale;

    Vector zx = matvec(w1, x);
    Vector qx(zx.size());
    for (std::size_t i = 0; i < zx.size(); ++i)
        qx[i] = gate_value(net.activation, net.leaky_slope, zx[i]);
    // W2^T 1 with the x-side gate applied
    const Vector w2t_one = matvec_t(w2, ones(c));

    CentroidRate out;
    out.total = Vector(x.size(), 0.0);
    out.second_term = Vector(x.size(), 0.0);
    const double scale = eta / static_cast<double>(batch.size());
    for (std::size_t p = 0; p < batch.size(); ++p) {
        const Vector zp = matvec(w1, batch[p]);
        Vector sig(zp.size());
        Vector qp(zp.size());
        for (std::size_t i = 0; i < zp.size(); ++i) {
            qp[i] = gate_value(net.activation, net.leaky_slope, zp[i]);
            sig[i] = qp[i] * zp[i];
        }
        Vector f = matvec(w2, sig);
        for (double& v : f) v *= gamma;
        Vector m(c);
        if (kind == LossKind::cross_entropy) {
            const Vector sm = softmax(f);
            for (std::size_t k = 0; k < c; ++k)
                m[k] = (k == labels[p] ? 1.0 : 0.0) - sm[k];
        } else {
            for (std::size_t k = 0; k < c; ++k)
                m[k] = 2.0 * ((k == labels[p] ? 1.0 : 0.0) - f[k]);
        }
        // first term: (m^T W2 Qp Qx W2^T 1) x_p
        const Vector mtw2 = matvec_t(w2, m);
        double kernel = 0.0;
        for (std::size_t i = 0; i < mtw2.size(); ++i)
            kernel += mtw2[i] * qp[i] * qx[i] * w2t_one[i];
        // second term: (W1^T Qx sigma(W1 x_p)) (m^T 1)
        double m_sum = 0.0;
        for (double v : m) m_sum += v;
        Vector gated_sig(sig.size());
        for (std::size_t i = 0; i < sig.size(); ++i) gated_sig[i] = qx[i] * sig[i];
        const Vector w1t = matvec_t(w1, gated_sig);
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double second = scale * gamma * gamma * w1t[k] * m_sum;
            out.second_term[k] += second;
            out.total[k] += scale * gamma * gamma * kernel * batch[p][k] + second;
        }
    }
    return out;
}

inline Vector centroid_rate_vector(const PwaNetwork& net, const std::vector<Vector>& batch,
                                   const std::vector<std::size_t>& labels, const Vector& x,
                                   double eta, LossKind kind) {
    return centroid_rate_terms(net, batch, labels, x, eta, kind).total;
}

}  // namespace grokalign
