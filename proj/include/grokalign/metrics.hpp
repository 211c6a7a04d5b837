#pragma once

// Monitored quantities: centroid statistics, accuracies, Gaussian and PGD
// robustness probes, NTK drift, and the per-step MetricRow snapshot.

#include <map>
#include <optional>
#include <sstream>

#include "grokalign/data.hpp"
#include "grokalign/jacobian.hpp"
#include "grokalign/losses.hpp"
#include "grokalign/oracles.hpp"

namespace grokalign {

// cos(x, mu_x); nullopt marks a degenerate centroid (||mu|| < 1e-12) so dead
// networks are counted rather than averaged in as unaligned.
inline std::optional<double> centroid_alignment(const PwaNetwork& net, const Vector& x) {
    const double nx = norm2(x);
    if (nx == 0.0) throw std::invalid_argument("centroid_alignment: zero input");
    const Vector mu = centroid(net, x);
    const double nm = norm2(mu);
    if (nm < 1e-12) return std::nullopt;
    return dot(x, mu) / (nx * nm);
}

inline double centroid_inner(const PwaNetwork& net, const Vector& x) {
    return dot(x, centroid(net, x));
}

inline double centroid_norm(const PwaNetwork& net, const Vector& x) {
    return norm2(centroid(net, x));
}

// Fraction with argmax(f(x)) = label; argmax ties go to the lowest class
// index, scalar outputs threshold at sigmoid 0.5.
inline double accuracy(const PwaNetwork& net, const Dataset& ds) {
    if (ds.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
    const BatchTrace trace = forward_batch(net, ds.inputs);
    std::size_t correct = 0;
    for (std::size_t p = 0; p < ds.size(); ++p)
        if (predict_row(trace.output.row(p), trace.output.cols) == ds.labels[p]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// Mean accuracy under Gaussian perturbations of the coordinates in
// [coord_begin, coord_end), one fresh draw per point per trial. std = 0
// short-circuits to the clean accuracy.
inline std::vector<std::pair<double, double>> gaussian_robustness(
    const PwaNetwork& net, const Dataset& ds, std::size_t coord_begin, std::size_t coord_end,
    const std::vector<double>& stds, std::size_t trials, RngState& rng) {
    if (coord_end > ds.dim() || coord_begin > coord_end)
        throw std::invalid_argument("gaussian_robustness: bad coordinate range");
    if (trials == 0) throw std::invalid_argument("gaussian_robustness: trials must be >= 1");
    std::vector<std::pair<double, double>> out;
    for (double std_dev : stds) {
        if (std_dev == 0.0) {
            out.push_back({0.0, accuracy(net, ds)});
            continue;
        }
        double acc = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            Dataset perturbed = ds;
            for (std::size_t p = 0; p < ds.size(); ++p) {
                const Vector noise = sample_gaussian(rng, coord_end - coord_begin, std_dev);
                double* row = perturbed.inputs.row(p);
                for (std::size_t k = coord_begin; k < coord_end; ++k)
                    row[k] += noise[k - coord_begin];
            }
            acc += accuracy(net, perturbed);
        }
        out.push_back({std_dev, acc / static_cast<double>(trials)});
    }
    return out;
}

struct PgdConfig {
    double eps = 0.0;           // l-inf amplitude; 0 disables the attack
    std::size_t steps = 10;
    double step_size = 0.0;     // 0 picks 2.5 * eps / steps
    LossKind loss = LossKind::cross_entropy;
    bool clamp01 = true;        // clip to the valid pixel range
};

// Accuracy under a projected-gradient l-inf attack with random start and
// sign steps; steps = 1 is FGSM from the random start.
inline double pgd_linf_accuracy(const PwaNetwork& net, const Dataset& ds, const PgdConfig& cfg,
                                RngState& rng) {
    if (cfg.eps == 0.0) return accuracy(net, ds);
    if (!(cfg.eps > 0.0)) throw std::invalid_argument("pgd: eps must be >= 0");
    const double step = cfg.step_size > 0.0
                            ? cfg.step_size
                            : 2.5 * cfg.eps / static_cast<double>(std::max<std::size_t>(1, cfg.steps));
    std::size_t correct = 0;
    for (std::size_t p = 0; p < ds.size(); ++p) {
        const Vector x0 = ds.input_row(p);
        Vector x = x0;
        for (std::size_t k = 0; k < x.size(); ++k) x[k] += rng.uniform(-cfg.eps, cfg.eps);
        if (cfg.clamp01)
            for (double& v : x) v = std::clamp(v, 0.0, 1.0);
        for (std::size_t it = 0; it < cfg.steps; ++it) {
            const ForwardTrace trace = forward_trace(net, x);
            const LossValueGrad lv = loss_and_output_grad(trace.output, ds.labels[p], cfg.loss);
            const Vector g = vjp(net, trace, lv.grad);
            for (std::size_t k = 0; k < x.size(); ++k) {
                x[k] += step * (g[k] > 0.0 ? 1.0 : (g[k] < 0.0 ? -1.0 : 0.0));
                x[k] = std::clamp(x[k], x0[k] - cfg.eps, x0[k] + cfg.eps);
                if (cfg.clamp01) x[k] = std::clamp(x[k], 0.0, 1.0);
            }
        }
        const Vector out = forward(net, x);
        if (predict_row(out.data(), out.size()) == ds.labels[p]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// Mean relative change of the kernel over fixed probe pairs.
inline double ntk_drift(const PwaNetwork& net, const PwaNetwork& net_at_init,
                        const std::vector<std::pair<Vector, Vector>>& probe_pairs) {
    if (probe_pairs.empty()) throw std::invalid_argument("ntk_drift: no probe pairs");
    double acc = 0.0;
    for (const auto& [a, b] : probe_pairs) {
        const double now = ntk_brute(net, a, b);
        const double init = ntk_brute(net_at_init, a, b);
        acc += std::abs(now - init) / (std::abs(init) + 1e-12);
    }
    return acc / static_cast<double>(probe_pairs.size());
}

// ---- per-step snapshot ----

struct MetricRow {
    std::size_t step = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double mean_centroid_alignment = 0.0;
    double mean_centroid_norm = 0.0;
    double mean_centroid_inner = 0.0;
    double mean_pc1 = 0.0;
    double mean_frobenius = 0.0;  // mean ||J||_F over the probe subset
    std::size_t degenerate_centroids = 0;
    std::optional<double> ntk_drift;
    std::vector<std::pair<std::string, double>> robustness;  // descriptor -> accuracy
};

struct ProbeConfig {
    std::vector<std::size_t> probe_indices;  // rows of the training set
    LossKind loss = LossKind::cross_entropy;
    std::vector<double> robust_stds;  // empty disables the Gaussian probe
    std::size_t robust_trials = 5;
    std::size_t robust_coord_begin = 0;
    std::size_t robust_coord_end = 0;  // 0 means the full input range
    PgdConfig pgd;                     // eps 0 disables
    std::vector<std::pair<Vector, Vector>> ntk_pairs;  // empty disables drift
    const PwaNetwork* net_at_init = nullptr;
};

// Seeded probe subset of the training rows (default cap 128).
inline std::vector<std::size_t> choose_probe_indices(std::size_t train_size, std::size_t count,
                                                     std::uint64_t seed) {
    std::vector<std::size_t> idx(train_size);
    for (std::size_t i = 0; i < train_size; ++i) idx[i] = i;
    if (count >= train_size) return idx;
    RngState rng(seed);
    for (std::size_t i = train_size; i > 1; --i) std::swap(idx[i - 1], idx[rng.next_u64() % i]);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline MetricRow snapshot(const PwaNetwork& net, const Dataset& train, const Dataset& test,
                          const ProbeConfig& probes, std::size_t step, RngState& rng) {
    MetricRow row;
    row.step = step;
    const EvalStats tr = evaluate_batch(net, train.inputs, train.labels, probes.loss);
    row.train_loss = tr.mean_loss;
    row.train_acc = tr.accuracy;
    row.test_acc = accuracy(net, test);

    double align = 0.0, norm = 0.0, inner = 0.0, pc1 = 0.0, frob = 0.0;
    std::size_t aligned_count = 0;
    for (const std::size_t p : probes.probe_indices) {
        const Vector x = train.input_row(p);
        const JacobianReport rep = jacobian_report(net, x);
        const double nm = norm2(rep.centroid);
        norm += nm;
        inner += dot(x, rep.centroid);
        pc1 += rep.pc1_explained;
        frob += std::sqrt(rep.frobenius_sq);
        const double nx = norm2(x);
        if (nm < 1e-12 || nx == 0.0) {
            ++row.degenerate_centroids;
        } else {
            align += dot(x, rep.centroid) / (nx * nm);
            ++aligned_count;
        }
    }
    const double np = static_cast<double>(std::max<std::size_t>(1, probes.probe_indices.size()));
    row.mean_centroid_alignment =
        aligned_count ? align / static_cast<double>(aligned_count) : 0.0;
    row.mean_centroid_norm = norm / np;
    row.mean_centroid_inner = inner / np;
    row.mean_pc1 = pc1 / np;
    row.mean_frobenius = frob / np;

    if (!probes.robust_stds.empty()) {
        const std::size_t end = probes.robust_coord_end ? probes.robust_coord_end : test.dim();
        const auto rb = gaussian_robustness(net, test, probes.robust_coord_begin, end,
                                            probes.robust_stds, probes.robust_trials, rng);
        for (const auto& [sd, acc] : rb) {
            std::ostringstream name;
            name << "gauss_" << sd;
            row.robustness.push_back({name.str(), acc});
        }
    }
    if (probes.pgd.eps > 0.0) {
        std::ostringstream name;
        name << "pgd_" << probes.pgd.eps;
        row.robustness.push_back({name.str(), pgd_linf_accuracy(net, test, probes.pgd, rng)});
    }
    if (!probes.ntk_pairs.empty() && probes.net_at_init && net.output_dim() == 1)
        row.ntk_drift = ntk_drift(net, *probes.net_at_init, probes.ntk_pairs);
    return row;
}

// ---- CSV serialization (17 significant digits) ----

inline std::string csv_header(const MetricRow& row) {
    std::string h =
        "step,train_loss,train_acc,test_acc,mean_centroid_alignment,mean_centroid_norm,"
        "mean_centroid_inner,mean_pc1,mean_frobenius,degenerate_centroids,ntk_drift";
    for (const auto& [name, _] : row.robustness) h += ",robust_" + name;
    return h;
}

inline std::string csv_line(const MetricRow& row) {
    char buf[32];
    auto g17 = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    std::string s = std::to_string(row.step);
    s += "," + g17(row.train_loss) + "," + g17(row.train_acc) + "," + g17(row.test_acc);
    s += "," + g17(row.mean_centroid_alignment) + "," + g17(row.mean_centroid_norm);
    s += "," + g17(row.mean_centroid_inner) + "," + g17(row.mean_pc1);
    s += "," + g17(row.mean_frobenius) + "," + std::to_string(row.degenerate_centroids);
    s += ",";
    if (row.ntk_drift) s += g17(*row.ntk_drift);
    for (const auto& [_, acc] : row.robustness) s += "," + g17(acc);
    return s;
}

inline bool row_has_nan(const MetricRow& row) {
    const double vals[] = {row.train_loss,       row.train_acc,
                           row.test_acc,         row.mean_centroid_alignment,
                           row.mean_centroid_norm, row.mean_centroid_inner,
                           row.mean_pc1,         row.mean_frobenius};
    for (double v : vals)
        if (!std::isfinite(v)) return true;
    if (row.ntk_drift && !std::isfinite(*row.ntk_drift)) return true;
    for (const auto& [_, acc] : row.robustness)
        if (!std::isfinite(acc)) return true;
    return false;
}

}  // namespace grokalign
