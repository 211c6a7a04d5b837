#pragma once

// Piecewise-affine feedforward networks: forward evaluation, activation
// patterns (the diagonal gates that pin down the local affine region), the
// per-region affine operator, and checkpoint serialization.

#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "grokalign/numerics.hpp"
#include "grokalign/rng.hpp"

namespace grokalign {

enum class Activation { relu, leaky_relu, identity };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::identity: return "identity";
    }
    return "?";
}

inline std::optional<Activation> activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "leaky_relu") return Activation::leaky_relu;
    if (s == "identity") return Activation::identity;
    return std::nullopt;
}

struct Layer {
    Matrix weight;               // d_out x d_in
    std::optional<Vector> bias;  // d_out when present
};

// The activation is applied after every layer except the last; the scalar
// output_scale multiplies the final preactivation.
struct PwaNetwork {
    std::vector<Layer> layers;
    Activation activation = Activation::relu;
    double leaky_slope = 0.01;
    double output_scale = 1.0;

    std::size_t depth() const { return layers.size(); }
    std::size_t input_dim() const { return layers.front().weight.cols; }
    std::size_t output_dim() const { return layers.back().weight.rows; }
    bool has_bias() const {
        for (const auto& l : layers)
            if (l.bias) return true;
        return false;
    }
};

// Gate value sigma'(z). Ties at z == 0 take the zero-side subgradient for
// relu and the slope side for leaky relu; any fixed rule keeps the region
// operator consistent with forward on the (measure-zero) boundary.
inline double gate_value(Activation a, double slope, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::leaky_relu: return z > 0.0 ? 1.0 : slope;
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

// Per non-final layer, the gate values at the preactivations.
using ActivationPattern = std::vector<Vector>;

struct RegionAffine {
    Matrix A;  // C x d
    Vector B;  // C
};

// ---- construction ----

inline void check_dims_chain(const std::vector<Layer>& layers) {
    if (layers.empty()) throw std::invalid_argument("PwaNetwork: needs at least one layer");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& w = layers[l].weight;
        if (w.rows == 0 || w.cols == 0) throw std::invalid_argument("PwaNetwork: empty layer");
        if (layers[l].bias && layers[l].bias->size() != w.rows)
            throw std::invalid_argument("PwaNetwork: bias length mismatch");
        if (l + 1 < layers.size() && layers[l + 1].weight.cols != w.rows)
            throw std::invalid_argument("PwaNetwork: adjacent layer dims incompatible");
    }
}

// Uniform init on [-L, L] with L = sqrt(3) * scale * sqrt(2 / fan_in), so the
// entry std is scale * sqrt(2 / fan_in).
inline PwaNetwork init_network(const std::vector<std::size_t>& dims, std::uint64_t seed,
                               bool bias_enabled, Activation act = Activation::relu,
                               double init_scale = 1.0, double output_scale = 1.0,
                               double leaky_slope = 0.01) {
    if (dims.size() < 2) throw std::invalid_argument("init_network: need input and output dims");
    PwaNetwork net;
    net.activation = act;
    net.leaky_slope = leaky_slope;
    net.output_scale = output_scale;
    RngState rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t fan_in = dims[l], fan_out = dims[l + 1];
        if (fan_in == 0 || fan_out == 0) throw std::invalid_argument("init_network: zero dim");
        Layer layer;
        layer.weight = Matrix(fan_out, fan_in);
        const double limit =
            std::sqrt(3.0) * init_scale * std::sqrt(2.0 / static_cast<double>(fan_in));
        RngState lr = rng.split(l + 1);
        for (double& w : layer.weight.data) w = lr.uniform(-limit, limit);
        if (bias_enabled) layer.bias = Vector(fan_out, 0.0);
        net.layers.push_back(std::move(layer));
    }
    check_dims_chain(net.layers);
    return net;
}

inline PwaNetwork explicit_network(std::vector<Matrix> weights,
                                   Activation act = Activation::relu,
                                   double output_scale = 1.0, double leaky_slope = 0.01) {
    PwaNetwork net;
    net.activation = act;
    net.leaky_slope = leaky_slope;
    net.output_scale = output_scale;
    for (auto& w : weights) net.layers.push_back(Layer{std::move(w), std::nullopt});
    check_dims_chain(net.layers);
    return net;
}

// ---- evaluation ----

struct ForwardTrace {
    std::vector<Vector> inputs;  // inputs[l] is the input to layer l; size depth()
    ActivationPattern gates;     // gates[l] for layers 0 .. depth-2
    Vector output;               // scaled by output_scale
};

inline ForwardTrace forward_trace(const PwaNetwork& net, const Vector& x) {
    if (x.size() != net.input_dim())
        throw std::invalid_argument("forward: input dim mismatch");
    ForwardTrace t;
    Vector h = x;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        t.inputs.push_back(h);
        Vector z = matvec(net.layers[l].weight, h);
        if (net.layers[l].bias)
            for (std::size_t i = 0; i < z.size(); ++i) z[i] += (*net.layers[l].bias)[i];
        if (l + 1 < net.depth()) {
            Vector g(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) {
                g[i] = gate_value(net.activation, net.leaky_slope, z[i]);
                z[i] *= g[i];
            }
            t.gates.push_back(std::move(g));
            h = std::move(z);
        } else {
            for (double& v : z) v *= net.output_scale;
            t.output = std::move(z);
        }
    }
    return t;
}

inline Vector forward(const PwaNetwork& net, const Vector& x) {
    return forward_trace(net, x).output;
}

inline ActivationPattern activation_pattern(const PwaNetwork& net, const Vector& x) {
    return forward_trace(net, x).gates;
}

inline bool same_pattern(const ActivationPattern& a, const ActivationPattern& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t l = 0; l < a.size(); ++l)
        if (a[l] != b[l]) return false;
    return true;
}

// The affine operator (A, B) of the linear region containing x:
// A = gamma * W^(L) Q^(L-1) ... Q^(1) W^(1), and f(x') = A x' + B for every
// x' sharing x's activation pattern. B is exactly zero for zero-bias nets.
inline RegionAffine region_affine(const PwaNetwork& net, const Vector& x) {
    const ActivationPattern gates = activation_pattern(net, x);
    Matrix a = net.layers[0].weight;
    Vector b = net.layers[0].bias ? *net.layers[0].bias : Vector(a.rows, 0.0);
    for (std::size_t l = 1; l < net.depth(); ++l) {
        const Vector& q = gates[l - 1];
        Matrix gated = a;  // diag(q) * a
        for (std::size_t i = 0; i < gated.rows; ++i) {
            double* r = gated.row(i);
            for (std::size_t j = 0; j < gated.cols; ++j) r[j] *= q[i];
        }
        a = matmul(net.layers[l].weight, gated);
        Vector gb(b.size());
        for (std::size_t i = 0; i < b.size(); ++i) gb[i] = q[i] * b[i];
        b = matvec(net.layers[l].weight, gb);
        if (net.layers[l].bias)
            for (std::size_t i = 0; i < b.size(); ++i) b[i] += (*net.layers[l].bias)[i];
    }
    for (double& v : a.data) v *= net.output_scale;
    for (double& v : b) v *= net.output_scale;
    return RegionAffine{std::move(a), std::move(b)};
}

inline PwaNetwork scale_weights(PwaNetwork net, double factor) {
    if (!(factor > 0.0)) throw std::invalid_argument("scale_weights: factor must be positive");
    for (auto& layer : net.layers) {
        for (double& w : layer.weight.data) w *= factor;
        if (layer.bias)
            for (double& b : *layer.bias) b *= factor;
    }
    return net;
}

// ---- checkpoint io ----
// Text format; doubles are written with 17 significant digits, which
// round-trips IEEE-754 binary64 exactly.

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline void save_network(const PwaNetwork& net, std::ostream& os) {
    os << "grokalign-net 1\n";
    os << "activation " << activation_name(net.activation) << "\n";
    os << "leaky_slope " << detail::fmt_g17(net.leaky_slope) << "\n";
    os << "output_scale " << detail::fmt_g17(net.output_scale) << "\n";
    os << "layers " << net.depth() << "\n";
    for (const auto& layer : net.layers) {
        os << "layer " << layer.weight.rows << " " << layer.weight.cols << " "
           << (layer.bias ? 1 : 0) << "\n";
        for (std::size_t i = 0; i < layer.weight.rows; ++i) {
            const double* r = layer.weight.row(i);
            for (std::size_t j = 0; j < layer.weight.cols; ++j)
                os << (j ? " " : "") << detail::fmt_g17(r[j]);
            os << "\n";
        }
        if (layer.bias) {
            for (std::size_t i = 0; i < layer.bias->size(); ++i)
                os << (i ? " " : "") << detail::fmt_g17((*layer.bias)[i]);
            os << "\n";
        }
    }
}

inline void save_network(const PwaNetwork& net, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_network: cannot open " + path);
    save_network(net, f);
}

inline PwaNetwork load_network(std::istream& is) {
    std::string tag;
    int version = 0;
    if (!(is >> tag >> version) || tag != "grokalign-net" || version != 1)
        throw std::runtime_error("load_network: bad header");
    PwaNetwork net;
    std::string key, act;
    std::size_t n_layers = 0;
    is >> key >> act;
    if (key != "activation") throw std::runtime_error("load_network: expected activation");
    const auto a = activation_from_name(act);
    if (!a) throw std::runtime_error("load_network: unknown activation " + act);
    net.activation = *a;
    is >> key >> net.leaky_slope;
    if (key != "leaky_slope") throw std::runtime_error("load_network: expected leaky_slope");
    is >> key >> net.output_scale;
    if (key != "output_scale") throw std::runtime_error("load_network: expected output_scale");
    is >> key >> n_layers;
    if (key != "layers") throw std::runtime_error("load_network: expected layers");
    for (std::size_t l = 0; l < n_layers; ++l) {
        std::size_t rows = 0, cols = 0;
        int has_bias = 0;
        is >> key >> rows >> cols >> has_bias;
        if (key != "layer") throw std::runtime_error("load_network: expected layer");
        Layer layer;
        layer.weight = Matrix(rows, cols);
        for (double& w : layer.weight.data)
            if (!(is >> w)) throw std::runtime_error("load_network: truncated weights");
        if (has_bias) {
            Vector b(rows);
            for (double& v : b)
                if (!(is >> v)) throw std::runtime_error("load_network: truncated bias");
            layer.bias = std::move(b);
        }
        net.layers.push_back(std::move(layer));
    }
    check_dims_chain(net.layers);
    check_finite(net.layers.front().weight, "load_network");
    return net;
}

inline PwaNetwork load_network(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_network: cannot open " + path);
    return load_network(f);
}

}  // namespace grokalign
