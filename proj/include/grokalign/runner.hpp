#pragma once

// Experiment runner: builds datasets, trains the configured arms with
// paired seeds, and writes metrics.csv / summary.txt / checkpoint per arm
// plus a resolved-config echo. Deterministic given the config.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "grokalign/config.hpp"
#include "grokalign/data.hpp"
#include "grokalign/metrics.hpp"
#include "grokalign/optim.hpp"

namespace grokalign {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitDataMissing = 2;
constexpr int kExitDiverged = 3;

struct ArmSpec {
    std::string name;
    GrokAlignConfig ga;       // lambda 0 disables the penalty
    double adv_kappa = 0.0;   // > 0 enables accuracy-proportional input noise
};

struct ArmOutcome {
    std::string name;
    std::optional<std::size_t> steps_to_threshold;
    std::optional<std::size_t> memorization_step;  // first snapshot with train_acc == 1
    std::vector<MetricRow> rows;
    double wall_seconds = 0.0;
    bool diverged = false;
    std::size_t last_good_step = 0;

    const MetricRow& final_row() const { return rows.back(); }
};

namespace run_detail {

inline std::string mnist_data_dir(const ExperimentConfig& cfg) {
    if (!cfg.mnist_dir.empty()) return cfg.mnist_dir;
    if (const char* env = std::getenv("GROKALIGN_MNIST_DIR"); env && *env) return env;
    return "data/mnist";
}

inline GrokAlignConfig ga_from_config(const ExperimentConfig& cfg) {
    GrokAlignConfig ga;
    ga.lambda = cfg.ga_lambda;
    ga.mode = cfg.ga_mode == "constrain" ? GrokAlignConfig::Mode::constrain
                                         : GrokAlignConfig::Mode::minimize;
    ga.target = cfg.ga_target;
    ga.estimator = cfg.ga_estimator == "randomized" ? GrokAlignConfig::Estimator::randomized
                                                    : GrokAlignConfig::Estimator::exact;
    ga.n_proj = cfg.ga_n_proj;
    ga.squared = cfg.ga_squared;
    return ga;
}

inline double input_std(const Matrix& x) {
    double mean = 0.0;
    for (double v : x.data) mean += v;
    mean /= static_cast<double>(x.data.size());
    double var = 0.0;
    for (double v : x.data) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(x.data.size()));
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace run_detail

// One training run. All randomness derives from cfg.seed, so arms sharing a
// config are paired: identical init, data order, and probe choices.
inline ArmOutcome train_arm(const ExperimentConfig& cfg, const ArmSpec& arm,
                            const Dataset& train, const Dataset& test,
                            const std::filesystem::path& arm_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(arm_dir);
    const auto t_begin = std::chrono::steady_clock::now();

    RngState root(cfg.seed);
    PwaNetwork net = init_network(cfg.net_dims, root.split(1).next_u64(), cfg.bias,
                                  cfg.activation, cfg.init_scale, cfg.output_scale,
                                  cfg.leaky_slope);
    if (net.input_dim() != train.dim())
        throw std::runtime_error("train_arm: net input dim " + std::to_string(net.input_dim()) +
                                 " does not match data dim " + std::to_string(train.dim()));
    const PwaNetwork net_at_init = net;

    ProbeConfig probes;
    probes.loss = cfg.loss;
    probes.probe_indices =
        choose_probe_indices(train.size(), cfg.probe_count, root.split(4).next_u64());
    probes.robust_stds = cfg.robust_stds;
    probes.robust_trials = cfg.robust_trials;
    probes.robust_coord_begin = cfg.robust_coord_begin;
    probes.robust_coord_end = cfg.robust_coord_end;
    probes.pgd.eps = cfg.pgd_eps;
    probes.pgd.steps = cfg.pgd_steps;
    probes.pgd.step_size = cfg.pgd_step_size;
    probes.pgd.loss = cfg.loss;
    probes.net_at_init = &net_at_init;
    if (cfg.ntk_pairs > 0 && net.output_dim() == 1 && !probes.probe_indices.empty()) {
        RngState pair_rng = root.split(5);
        const Vector anchor = train.input_row(probes.probe_indices.front());
        for (std::size_t k = 0; k < cfg.ntk_pairs; ++k) {
            const std::size_t j = pair_rng.next_u64() % train.size();
            probes.ntk_pairs.push_back({anchor, train.input_row(j)});
        }
    }

    RngState shuffle_rng = root.split(3);
    RngState est_rng = root.split(2);
    RngState adv_rng = root.split(6);

    const std::size_t m = train.size();
    const std::size_t bs = cfg.batch_size == 0 || cfg.batch_size >= m ? m : cfg.batch_size;
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    std::size_t cursor = m;  // force initial shuffle for minibatch runs

    AdamWState adam = AdamWState::init(net);
    OptimizerConfig opt;
    opt.kind = cfg.optimizer;
    opt.learning_rate = cfg.lr;
    opt.weight_decay = cfg.weight_decay;
    opt.beta1 = cfg.beta1;
    opt.beta2 = cfg.beta2;
    opt.eps = cfg.adam_eps;

    const double adv_kappa = arm.adv_kappa;

    ArmOutcome out;
    out.name = arm.name;
    std::ofstream csv(arm_dir / "metrics.csv");
    if (!csv) throw std::runtime_error("train_arm: cannot write metrics.csv");
    double last_train_acc = 0.0;

    auto take_snapshot = [&](std::size_t step) -> bool {
        RngState snap_rng = root.split(1000003 + step);
        MetricRow row = snapshot(net, train, test, probes, step, snap_rng);
        if (out.rows.empty()) csv << csv_header(row) << "\n";
        if (row_has_nan(row)) {
            out.diverged = true;
            csv.flush();
            return false;
        }
        csv << csv_line(row) << "\n";
        csv.flush();
        last_train_acc = row.train_acc;
        if (!out.steps_to_threshold && row.test_acc >= cfg.acc_threshold)
            out.steps_to_threshold = step;
        if (!out.memorization_step && row.train_acc >= 1.0) out.memorization_step = step;
        out.last_good_step = step;
        out.rows.push_back(std::move(row));
        return true;
    };

    bool alive = take_snapshot(0);
    Matrix batch_x;
    std::vector<std::size_t> batch_y;
    for (std::size_t step = 1; alive && step <= cfg.steps; ++step) {
        if (bs == m) {
            batch_x = train.inputs;
            batch_y = train.labels;
        } else {
            if (cursor + bs > m) {
                for (std::size_t i = m; i > 1; --i)
                    std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);
                cursor = 0;
            }
            batch_x = Matrix(bs, train.dim());
            batch_y.resize(bs);
            for (std::size_t i = 0; i < bs; ++i) {
                const std::size_t p = order[cursor + i];
                std::copy(train.inputs.row(p), train.inputs.row(p) + train.dim(),
                          batch_x.row(i));
                batch_y[i] = train.labels[p];
            }
            cursor += bs;
        }
        if (adv_kappa > 0.0) adversarial_noise_augment(batch_x, last_train_acc, adv_kappa, adv_rng);

        ObjectiveResult obj =
            grokalign_objective_batch(net, batch_x, batch_y, cfg.loss, arm.ga, est_rng);
        if (!std::isfinite(obj.total)) {
            out.diverged = true;
            break;
        }
        if (cfg.optimizer == OptimizerKind::adamw)
            adamw_step_inplace(adam, net, obj.grads, opt);
        else
            gd_step_inplace(net, obj.grads, cfg.lr, cfg.weight_decay);

        if (step % cfg.snapshot_every == 0 || step == cfg.steps) alive = take_snapshot(step);
    }

    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    save_network(net, (arm_dir / "checkpoint.txt").string());

    std::ofstream sum(arm_dir / "summary.txt");
    sum << "arm " << arm.name << "\n";
    sum << "steps " << cfg.steps << "\n";
    sum << "wall_seconds " << out.wall_seconds << "\n";
    sum << "threshold " << cfg.acc_threshold << "\n";
    if (out.steps_to_threshold)
        sum << "steps_to_threshold " << *out.steps_to_threshold << "\n";
    else
        sum << "steps_to_threshold not-reached\n";
    if (out.memorization_step)
        sum << "memorization_step " << *out.memorization_step << "\n";
    else
        sum << "memorization_step not-reached\n";
    if (!out.rows.empty()) {
        const MetricRow& fr = out.rows.back();
        sum << "final_step " << fr.step << "\n";
        sum << "final_train_acc " << fr.train_acc << "\n";
        sum << "final_test_acc " << fr.test_acc << "\n";
        sum << "final_centroid_alignment " << fr.mean_centroid_alignment << "\n";
        sum << "final_centroid_norm " << fr.mean_centroid_norm << "\n";
        sum << "final_pc1 " << fr.mean_pc1 << "\n";
        sum << "final_frobenius " << fr.mean_frobenius << "\n";
    }
    if (out.diverged) sum << "diverged last_good_step " << out.last_good_step << "\n";
    return out;
}

// ---- experiment drivers ----

namespace run_detail {

inline Dataset load_mnist_train(const ExperimentConfig& cfg, std::uint64_t seed) {
    const std::string dir = mnist_data_dir(cfg);
    Dataset full = load_mnist_idx(dir + "/train-images-idx3-ubyte",
                                  dir + "/train-labels-idx1-ubyte");
    std::optional<std::set<std::size_t>> filter;
    if (!cfg.mnist_classes.empty())
        filter = std::set<std::size_t>(cfg.mnist_classes.begin(), cfg.mnist_classes.end());
    return subset(full, filter, cfg.train_count, seed);
}

inline Dataset load_mnist_test(const ExperimentConfig& cfg, std::uint64_t seed) {
    const std::string dir = mnist_data_dir(cfg);
    Dataset full =
        load_mnist_idx(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte");
    std::optional<std::set<std::size_t>> filter;
    if (!cfg.mnist_classes.empty())
        filter = std::set<std::size_t>(cfg.mnist_classes.begin(), cfg.mnist_classes.end());
    return subset(full, filter, cfg.test_count, seed);
}

inline void write_comparison(std::ostream& os, const std::vector<ArmOutcome>& arms) {
    for (const auto& a : arms) {
        os << a.name << ": ";
        if (a.diverged) {
            os << "diverged at step " << a.last_good_step << "\n";
            continue;
        }
        os << "steps_to_threshold ";
        if (a.steps_to_threshold)
            os << *a.steps_to_threshold;
        else
            os << "not-reached";
        const MetricRow& fr = a.final_row();
        os << ", final_test_acc " << fmt(fr.test_acc) << ", final_alignment "
           << fmt(fr.mean_centroid_alignment) << ", final_centroid_norm "
           << fmt(fr.mean_centroid_norm) << ", final_pc1 " << fmt(fr.mean_pc1)
           << ", wall_s " << fmt(a.wall_seconds) << "\n";
    }
    for (std::size_t i = 1; i < arms.size(); ++i) {
        if (arms[0].steps_to_threshold && arms[i].steps_to_threshold &&
            *arms[i].steps_to_threshold > 0)
            os << "step_ratio " << arms[0].name << "/" << arms[i].name << " "
               << fmt(static_cast<double>(*arms[0].steps_to_threshold) /
                      static_cast<double>(*arms[i].steps_to_threshold))
               << "\n";
    }
}

}  // namespace run_detail

// Executes the configured experiment; returns a process exit status.
inline int run_experiment(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    const fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir);
    {
        std::ofstream echo(out_dir / "config.txt");
        echo << render_config(cfg);
    }

    RngState root(cfg.seed);
    Dataset train, test;
    try {
        if (cfg.experiment == "xor-grok") {
            train = gen_xor_cluster(cfg.xor_m, cfg.xor_d, cfg.xor_eps,
                                    root.split(11).next_u64());
            test = gen_xor_cluster(cfg.xor_test_m, cfg.xor_d, cfg.xor_eps,
                                   root.split(12).next_u64());
        } else {
            train = run_detail::load_mnist_train(cfg, root.split(13).next_u64());
            test = run_detail::load_mnist_test(cfg, root.split(14).next_u64());
        }
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitDataMissing;
    }

    std::vector<ArmOutcome> outcomes;
    std::ofstream summary(out_dir / "summary.txt");
    summary << "experiment " << cfg.experiment << "\nseed " << cfg.seed << "\n";
    summary << "train_size " << train.size() << " test_size " << test.size() << " dim "
            << train.dim() << " classes " << train.class_count << "\n\n";

    const GrokAlignConfig ga = run_detail::ga_from_config(cfg);

    if (cfg.experiment == "xor-grok" || cfg.experiment == "mnist-grok" ||
        cfg.experiment == "pc1-trace") {
        std::vector<ArmSpec> arms;
        GrokAlignConfig off = ga;
        off.lambda = 0.0;
        arms.push_back({"baseline", off, 0.0});
        arms.push_back({"grokalign", ga, 0.0});
        if (cfg.adv_arm) {
            const double kappa = cfg.adv_kappa > 0.0
                                     ? cfg.adv_kappa
                                     : 0.1 * run_detail::input_std(train.inputs);
            arms.push_back({"adversarial", off, kappa});
        }
        for (const auto& arm : arms)
            outcomes.push_back(train_arm(cfg, arm, train, test, out_dir / arm.name));
        run_detail::write_comparison(summary, outcomes);
    } else if (cfg.experiment == "restricted-jacobian") {
        GrokAlignConfig minimize = ga;
        minimize.mode = GrokAlignConfig::Mode::minimize;
        GrokAlignConfig constrain = ga;
        constrain.mode = GrokAlignConfig::Mode::constrain;
        constrain.squared = false;
        for (const auto& arm : {ArmSpec{"minimize", minimize, 0.0},
                                ArmSpec{"constrain", constrain, 0.0}})
            outcomes.push_back(train_arm(cfg, arm, train, test, out_dir / arm.name));
        run_detail::write_comparison(summary, outcomes);
        if (outcomes.size() == 2 && !outcomes[0].diverged && !outcomes[1].diverged) {
            const double nm = outcomes[0].final_row().mean_centroid_norm;
            const double nc = outcomes[1].final_row().mean_centroid_norm;
            summary << "centroid_norm_ratio constrain/minimize "
                    << run_detail::fmt(nm > 0 ? nc / nm : 0.0) << "\n";
            summary << "test_acc_gap minimize-constrain "
                    << run_detail::fmt(outcomes[0].final_row().test_acc -
                                       outcomes[1].final_row().test_acc)
                    << "\n";
        }
    } else if (cfg.experiment == "ntk-trace") {
        outcomes.push_back(train_arm(cfg, ArmSpec{"main", ga, 0.0}, train, test,
                                     out_dir / "main"));
        run_detail::write_comparison(summary, outcomes);
        if (!outcomes[0].rows.empty()) {
            double max_drift = 0.0;
            for (const auto& r : outcomes[0].rows)
                if (r.ntk_drift) max_drift = std::max(max_drift, *r.ntk_drift);
            summary << "max_ntk_drift " << run_detail::fmt(max_drift) << "\n";
        }
    } else if (cfg.experiment == "scaling-sweep") {
        if (cfg.net_dims.size() != 3 || cfg.net_dims.back() != 1 ||
            cfg.loss != LossKind::binary_ce) {
            std::cerr << "scaling-sweep needs a two-layer scalar-output net with binary_ce\n";
            return kExitConfigError;
        }
        summary << "mode scale initial_rate mean_inv_centroid_norm max_alignment\n";
        for (const std::string mode : {"weights", "output"}) {
            for (double s : cfg.sweep_scales) {
                ExperimentConfig cell = cfg;
                if (mode == "weights")
                    cell.init_scale = cfg.init_scale * s;
                else
                    cell.output_scale = cfg.output_scale * s;
                const fs::path cell_dir =
                    out_dir / (mode + "_x" + run_detail::fmt(s));
                // initial-rate probe on the same net train_arm will build
                RngState cell_root(cell.seed);
                PwaNetwork net0 = init_network(
                    cell.net_dims, cell_root.split(1).next_u64(), cell.bias, cell.activation,
                    cell.init_scale, cell.output_scale, cell.leaky_slope);
                std::vector<Vector> batch;
                for (std::size_t p = 0; p < train.size(); ++p)
                    batch.push_back(train.input_row(p));
                const auto probe_idx = choose_probe_indices(
                    train.size(), cell.probe_count, cell_root.split(4).next_u64());
                double rate = 0.0, inv_norm = 0.0;
                for (const std::size_t p : probe_idx) {
                    rate += inner_product_rate(net0, batch, train.labels, batch[p], cell.lr);
                    const double nm = norm2(centroid(net0, batch[p]));
                    inv_norm += nm > 1e-12 ? 1.0 / nm : 0.0;
                }
                rate /= static_cast<double>(probe_idx.size());
                inv_norm /= static_cast<double>(probe_idx.size());
                ArmOutcome cell_out =
                    train_arm(cell, ArmSpec{"main", run_detail::ga_from_config(cell), 0.0},
                              train, test, cell_dir);
                double max_align = -1.0;
                for (const auto& r : cell_out.rows)
                    max_align = std::max(max_align, r.mean_centroid_alignment);
                summary << mode << " " << run_detail::fmt(s) << " " << run_detail::fmt(rate)
                        << " " << run_detail::fmt(inv_norm) << " "
                        << run_detail::fmt(max_align) << "\n";
                outcomes.push_back(std::move(cell_out));
            }
        }
    } else if (cfg.experiment == "row-alignment-report") {
        if (cfg.report_checkpoints.empty()) {
            std::cerr << "row-alignment-report needs report_checkpoints\n";
            return kExitConfigError;
        }
        const auto probe_idx =
            choose_probe_indices(train.size(), cfg.probe_count, root.split(4).next_u64());
        std::ofstream csv(out_dir / "metrics.csv");
        summary << "checkpoint test_acc row_alignment_max row_alignment_min\n";
        std::size_t index = 0;
        for (const auto& path : cfg.report_checkpoints) {
            PwaNetwork net;
            try {
                net = load_network(path);
            } catch (const std::exception& e) {
                std::cerr << "checkpoint error: " << e.what() << "\n";
                return kExitDataMissing;
            }
            double mx = 0.0, mn = 0.0;
            std::size_t counted = 0;
            for (const std::size_t p : probe_idx) {
                const auto ra = row_alignment(net, train.input_row(p));
                if (!ra) continue;
                mx += ra->max_cos;
                mn += ra->min_cos;
                ++counted;
            }
            if (counted) {
                mx /= static_cast<double>(counted);
                mn /= static_cast<double>(counted);
            }
            ProbeConfig probes;
            probes.loss = cfg.loss;
            probes.probe_indices = probe_idx;
            RngState snap_rng = root.split(2000003 + index);
            MetricRow row = snapshot(net, train, test, probes, index, snap_rng);
            if (index == 0) csv << csv_header(row) << "\n";
            csv << csv_line(row) << "\n";
            summary << path << " " << run_detail::fmt(row.test_acc) << " "
                    << run_detail::fmt(mx) << " " << run_detail::fmt(mn) << "\n";
            ++index;
        }
        return kExitOk;
    } else {
        std::cerr << "unknown experiment " << cfg.experiment << "\n";
        return kExitConfigError;
    }

    for (const auto& a : outcomes)
        if (a.diverged) return kExitDiverged;
    return kExitOk;
}

}  // namespace grokalign
