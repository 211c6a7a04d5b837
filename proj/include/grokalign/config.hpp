#pragma once

// Run configuration: plain-text "key = value" lines, optional [experiment]
// sections scoping keys to one experiment, '#' comments. Unknown keys are
// rejected with their line number. render() emits a flat, fully resolved
// config that parses back to an identical struct.

#include <array>
#include <charconv>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "grokalign/losses.hpp"
#include "grokalign/network.hpp"
#include "grokalign/optim.hpp"

namespace grokalign {

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {
        "pc1-trace",       "ntk-trace",     "xor-grok",        "mnist-grok",
        "restricted-jacobian", "scaling-sweep", "row-alignment-report"};
    return names;
}

struct ExperimentConfig {
    std::string experiment = "xor-grok";
    std::uint64_t seed = 1;
    std::string out_dir = "runs/xor-grok";

    // network
    std::vector<std::size_t> net_dims = {400, 2048, 1};
    Activation activation = Activation::relu;
    double leaky_slope = 0.01;
    bool bias = false;
    double init_scale = 1.0;
    double output_scale = 1.0;

    // loss and optimizer
    LossKind loss = LossKind::binary_ce;
    OptimizerKind optimizer = OptimizerKind::full_batch_gd;
    double lr = 0.1;
    double weight_decay = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 0;  // 0 = full batch

    // jacobian penalty (the treated arm of paired experiments)
    double ga_lambda = 1.0;
    std::string ga_mode = "minimize";  // minimize | constrain
    double ga_target = 5.0;
    std::string ga_estimator = "exact";  // exact | randomized
    std::size_t ga_n_proj = 1;
    bool ga_squared = true;
    bool adv_arm = false;    // adds an adversarial-training arm to paired experiments
    double adv_kappa = 0.0;  // adversarial noise scale; 0 = auto (0.1 x input std)

    // training
    std::size_t steps = 1000;
    std::size_t snapshot_every = 25;
    double acc_threshold = 0.95;

    // probes
    std::size_t probe_count = 128;
    std::vector<double> robust_stds = {0.1, 0.5, 1.0, 2.0};
    std::size_t robust_trials = 5;
    std::size_t robust_coord_begin = 2;  // xor: perturb only the noise coordinates
    std::size_t robust_coord_end = 0;  // 0 = input dim
    double pgd_eps = 0.0;
    std::size_t pgd_steps = 10;
    double pgd_step_size = 0.0;
    std::size_t ntk_pairs = 0;

    // data
    std::size_t xor_m = 400;
    std::size_t xor_d = 400;
    double xor_eps = 0.05;
    std::size_t xor_test_m = 400;
    std::string mnist_dir;  // empty: $GROKALIGN_MNIST_DIR or data/mnist
    std::vector<std::size_t> mnist_classes;  // empty = all ten
    std::size_t train_count = 1000;
    std::size_t test_count = 2000;

    // scaling-sweep
    std::vector<double> sweep_scales = {0.5, 1.0, 2.0, 4.0};

    // row-alignment-report
    std::vector<std::string> report_checkpoints;

    bool operator==(const ExperimentConfig&) const = default;
};

namespace cfg_detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline std::string g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

[[noreturn]] inline void fail(int line, const std::string& msg) {
    throw std::runtime_error("config line " + std::to_string(line) + ": " + msg);
}

inline double parse_double(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) fail(line, "bad number '" + v + "'");
        return d;
    } catch (const std::logic_error&) {
        fail(line, "bad number '" + v + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const unsigned long long u = std::stoull(v, &pos);
        if (pos != v.size()) fail(line, "bad integer '" + v + "'");
        return u;
    } catch (const std::logic_error&) {
        fail(line, "bad integer '" + v + "'");
    }
}

inline bool parse_bool(const std::string& v, int line) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    fail(line, "bad flag '" + v + "' (use on/off)");
}

template <typename T, typename F>
inline std::vector<T> parse_list(const std::string& v, int line, F parse_one) {
    std::vector<T> out;
    std::string item;
    std::istringstream ss(v);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_one(item, line));
    }
    return out;
}

template <typename T, typename F>
inline std::string render_list(const std::vector<T>& v, F render_one) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + render_one(v[i]);
    return s;
}

struct KeyDef {
    std::string name;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&, int)> set;
};

inline const std::vector<KeyDef>& key_defs() {
    using C = ExperimentConfig;
    static const std::vector<KeyDef> defs = {
        {"experiment", [](const C& c) { return c.experiment; },
         [](C& c, const std::string& v, int line) {
             for (const auto& n : experiment_names())
                 if (n == v) {
                     c.experiment = v;
                     return;
                 }
             fail(line, "unknown experiment '" + v + "'");
         }},
        {"seed", [](const C& c) { return std::to_string(c.seed); },
         [](C& c, const std::string& v, int line) { c.seed = parse_u64(v, line); }},
        {"out", [](const C& c) { return c.out_dir; },
         [](C& c, const std::string& v, int) { c.out_dir = v; }},
        {"net_dims",
         [](const C& c) {
             return render_list(c.net_dims, [](std::size_t d) { return std::to_string(d); });
         },
         [](C& c, const std::string& v, int line) {
             c.net_dims = parse_list<std::size_t>(v, line, [](const std::string& s, int l) {
                 return static_cast<std::size_t>(parse_u64(s, l));
             });
             if (c.net_dims.size() < 2) fail(line, "net_dims needs at least two entries");
         }},
        {"activation", [](const C& c) { return activation_name(c.activation); },
         [](C& c, const std::string& v, int line) {
             const auto a = activation_from_name(v);
             if (!a) fail(line, "unknown activation '" + v + "'");
             c.activation = *a;
         }},
        {"leaky_slope", [](const C& c) { return g17(c.leaky_slope); },
         [](C& c, const std::string& v, int line) { c.leaky_slope = parse_double(v, line); }},
        {"bias", [](const C& c) { return c.bias ? std::string("on") : std::string("off"); },
         [](C& c, const std::string& v, int line) { c.bias = parse_bool(v, line); }},
        {"init_scale", [](const C& c) { return g17(c.init_scale); },
         [](C& c, const std::string& v, int line) { c.init_scale = parse_double(v, line); }},
        {"output_scale", [](const C& c) { return g17(c.output_scale); },
         [](C& c, const std::string& v, int line) {
             c.output_scale = parse_double(v, line);
             if (!(c.output_scale > 0.0)) fail(line, "output_scale must be positive");
         }},
        {"loss", [](const C& c) { return loss_name(c.loss); },
         [](C& c, const std::string& v, int line) {
             const auto k = loss_from_name(v);
             if (!k) fail(line, "unknown loss '" + v + "'");
             c.loss = *k;
         }},
        {"optimizer",
         [](const C& c) {
             return c.optimizer == OptimizerKind::adamw ? std::string("adamw")
                                                        : std::string("gd");
         },
         [](C& c, const std::string& v, int line) {
             if (v == "adamw")
                 c.optimizer = OptimizerKind::adamw;
             else if (v == "gd")
                 c.optimizer = OptimizerKind::full_batch_gd;
             else
                 fail(line, "unknown optimizer '" + v + "' (use gd or adamw)");
         }},
        {"lr", [](const C& c) { return g17(c.lr); },
         [](C& c, const std::string& v, int line) {
             c.lr = parse_double(v, line);
             if (!(c.lr > 0.0)) fail(line, "lr must be positive");
         }},
        {"weight_decay", [](const C& c) { return g17(c.weight_decay); },
         [](C& c, const std::string& v, int line) { c.weight_decay = parse_double(v, line); }},
        {"beta1", [](const C& c) { return g17(c.beta1); },
         [](C& c, const std::string& v, int line) { c.beta1 = parse_double(v, line); }},
        {"beta2", [](const C& c) { return g17(c.beta2); },
         [](C& c, const std::string& v, int line) { c.beta2 = parse_double(v, line); }},
        {"adam_eps", [](const C& c) { return g17(c.adam_eps); },
         [](C& c, const std::string& v, int line) { c.adam_eps = parse_double(v, line); }},
        {"batch_size", [](const C& c) { return std::to_string(c.batch_size); },
         [](C& c, const std::string& v, int line) {
             c.batch_size = static_cast<std::size_t>(parse_u64(v, line));
         }},
        {"ga_lambda", [](const C& c) { return g17(c.ga_lambda); },
         [](C& c, const std::string& v, int line) {
             c.ga_lambda = parse_double(v, line);
             if (c.ga_lambda < 0.0) fail(line, "ga_lambda must be >= 0");
         }},
        {"ga_mode", [](const C& c) { return c.ga_mode; },
         [](C& c, const std::string& v, int line) {
             if (v != "minimize" && v != "constrain")
                 fail(line, "ga_mode must be minimize or constrain");
             c.ga_mode = v;
         }},
        {"ga_target", [](const C& c) { return g17(c.ga_target); },
         [](C& c, const std::string& v, int line) {
             c.ga_target = parse_double(v, line);
             if (!(c.ga_target > 0.0)) fail(line, "ga_target must be positive");
         }},
        {"ga_estimator", [](const C& c) { return c.ga_estimator; },
         [](C& c, const std::string& v, int line) {
             if (v != "exact" && v != "randomized")
                 fail(line, "ga_estimator must be exact or randomized");
             c.ga_estimator = v;
         }},
        {"ga_n_proj", [](const C& c) { return std::to_string(c.ga_n_proj); },
         [](C& c, const std::string& v, int line) {
             c.ga_n_proj = static_cast<std::size_t>(parse_u64(v, line));
             if (c.ga_n_proj == 0) fail(line, "ga_n_proj must be >= 1");
         }},
        {"ga_squared", [](const C& c) { return c.ga_squared ? std::string("on") : std::string("off"); },
         [](C& c, const std::string& v, int line) { c.ga_squared = parse_bool(v, line); }},
        {"adv_arm", [](const C& c) { return c.adv_arm ? std::string("on") : std::string("off"); },
         [](C& c, const std::string& v, int line) { c.adv_arm = parse_bool(v, line); }},
        {"adv_kappa", [](const C& c) { return g17(c.adv_kappa); },
         [](C& c, const std::string& v, int line) {
             c.adv_kappa = parse_double(v, line);
             if (c.adv_kappa < 0.0) fail(line, "adv_kappa must be >= 0");
         }},
        {"steps", [](const C& c) { return std::to_string(c.steps); },
         [](C& c, const std::string& v, int line) {
             c.steps = static_cast<std::size_t>(parse_u64(v, line));
         }},
        {"snapshot_every", [](const C& c) { return std::to_string(c.snapshot_every); },
         [](C& c, const std::string& v, int line) {
             c.snapshot_every = static_cast<std::size_t>(parse_u64(v, line));
             if (c.snapshot_every == 0) fail(line, "snapshot_every must be >= 1");
         }},
        {"acc_threshold", [](const C& c) { return g17(c.acc_threshold); },
         [](C& c, const std::string& v, int line) { c.acc_threshold = parse_double(v, line); }},
        {"probe_count", [](const C& c) { return std::to_string(c.probe_count); },
         [](C& c, const std::string& v, int line) {
             c.probe_count = static_cast<std::size_t>(parse_u64(v, line));
         }},
        {"robust_stds",
         [](const C& c) { return render_list(c.robust_stds, [](double d) { return g17(d); }); },
         [](C& c, const std::string& v, int line) {
             c.robust_stds = parse_list<double>(v, line, parse_double);
         }},
        {"robust_trials", [](const C& c) { return std::to_string(c.robust_trials); },
         [](C& c, const std::string& v, int line) {
             c.robust_trials = static_cast<std::size_t>(parse_u64(v, line));
             if (c.robust_trials == 0) fail(line, "robust_trials must be >= 1");
         }},
        {"robust_coord_begin", [](const C& c) { return std::to_string(c.robust_coord_begin); },
         [](C& c, const std::string& v, int line) {
             c.robust_coord_begin = static_cast<std::size_t>(parse_u64(v, line));
         }},
        {"robust_coord_end", [](const C& c) { return std::to_string(c.robust_coord_end); },
         [](C& c, const std::string& v, int line) {
             c.robust_coord_end = static_cast<std::size_t>(parse_u64(v, line));
         }},
        {"pgd_eps", [](const C& c) { return g17(c.pgd_eps); },
         [](C& c, const std::string& v, int line) { c.pgd_eps = parse_double(v, line); }},
        {"pgd_steps", [](const C& c) { return std::to_string(c.pgd_steps); },
         [](C& c, const std::string& v, int line) {
             c.pgd_steps = static_cast<std::size_t>(parse_u64(v, line));
         }},
        {"pgd_step_size", [](const C& c) { return g17(c.pgd_step_size); },
         [](C& c, const std::string& v, int line) { c.pgd_step_size = parse_double(v, line); }},
        {"ntk_pairs", [](const C& c) { return std::to_string(c.ntk_pairs); },
         [](C& c, const std::string& v, int line) {
             c.ntk_pairs = static_cast<std::size_t>(parse_u64(v, line));
         }},
        {"xor_m", [](const C& c) { return std::to_string(c.xor_m); },
         [](C& c, const std::string& v, int line) {
             c.xor_m = static_cast<std::size_t>(parse_u64(v, line));
         }},
        {"xor_d", [](const C& c) { return std::to_string(c.xor_d); },
         [](C& c, const std::string& v, int line) {
             c.xor_d = static_cast<std::size_t>(parse_u64(v, line));
         }},
        {"xor_eps", [](const C& c) { return g17(c.xor_eps); },
         [](C& c, const std::string& v, int line) { c.xor_eps = parse_double(v, line); }},
        {"xor_test_m", [](const C& c) { return std::to_string(c.xor_test_m); },
         [](C& c, const std::string& v, int line) {
             c.xor_test_m = static_cast<std::size_t>(parse_u64(v, line));
         }},
        {"mnist_dir", [](const C& c) { return c.mnist_dir; },
         [](C& c, const std::string& v, int) { c.mnist_dir = v; }},
        {"mnist_classes",
         [](const C& c) {
             return render_list(c.mnist_classes,
                                [](std::size_t d) { return std::to_string(d); });
         },
         [](C& c, const std::string& v, int line) {
             c.mnist_classes = parse_list<std::size_t>(v, line, [](const std::string& s, int l) {
                 return static_cast<std::size_t>(parse_u64(s, l));
             });
         }},
        {"train_count", [](const C& c) { return std::to_string(c.train_count); },
         [](C& c, const std::string& v, int line) {
             c.train_count = static_cast<std::size_t>(parse_u64(v, line));
             if (c.train_count == 0) fail(line, "train_count must be >= 1");
         }},
        {"test_count", [](const C& c) { return std::to_string(c.test_count); },
         [](C& c, const std::string& v, int line) {
             c.test_count = static_cast<std::size_t>(parse_u64(v, line));
             if (c.test_count == 0) fail(line, "test_count must be >= 1");
         }},
        {"sweep_scales",
         [](const C& c) { return render_list(c.sweep_scales, [](double d) { return g17(d); }); },
         [](C& c, const std::string& v, int line) {
             c.sweep_scales = parse_list<double>(v, line, parse_double);
         }},
        {"report_checkpoints",
         [](const C& c) {
             return render_list(c.report_checkpoints, [](const std::string& s) { return s; });
         },
         [](C& c, const std::string& v, int line) {
             c.report_checkpoints =
                 parse_list<std::string>(v, line, [](const std::string& s, int) { return s; });
         }},
    };
    return defs;
}

inline const KeyDef* find_key(const std::string& name) {
    for (const auto& def : key_defs())
        if (def.name == name) return &def;
    return nullptr;
}

}  // namespace cfg_detail

// Built-in defaults for each registered experiment.
inline ExperimentConfig experiment_defaults(const std::string& name) {
    ExperimentConfig c;
    c.experiment = name;
    c.out_dir = "runs/" + name;
    if (name == "xor-grok") {
        // defaults already describe the xor setup
    } else if (name == "mnist-grok" || name == "pc1-trace") {
        c.net_dims = {784, 200, 200, 10};
        c.init_scale = 8.0;
        c.loss = LossKind::cross_entropy;
        c.optimizer = OptimizerKind::adamw;
        c.lr = 1e-3;
        c.weight_decay = 0.01;
        c.batch_size = 200;
        c.ga_lambda = 1e-3;
        c.ga_estimator = "randomized";
        c.steps = 4000;
        c.snapshot_every = 50;
        c.acc_threshold = 0.85;
        c.robust_stds.clear();
        c.robust_coord_begin = 0;
    } else if (name == "ntk-trace" || name == "scaling-sweep") {
        c.net_dims = {784, 512, 1};
        c.loss = LossKind::binary_ce;
        c.optimizer = OptimizerKind::full_batch_gd;
        c.lr = 0.01;
        c.weight_decay = 0.0;
        c.batch_size = 0;
        c.ga_lambda = 0.0;
        c.steps = name == "ntk-trace" ? 2000 : 400;
        c.snapshot_every = 25;
        c.acc_threshold = 0.95;
        c.mnist_classes = {0, 1};
        c.train_count = 256;
        c.test_count = 512;
        c.probe_count = 16;
        c.ntk_pairs = name == "ntk-trace" ? 32 : 8;
        c.robust_stds.clear();
        c.robust_coord_begin = 0;
    } else if (name == "restricted-jacobian") {
        c.net_dims = {784, 200, 200, 10};
        c.init_scale = 8.0;
        c.loss = LossKind::mse_onehot;
        c.optimizer = OptimizerKind::adamw;
        c.lr = 1e-3;
        c.weight_decay = 0.01;
        c.batch_size = 200;
        c.ga_lambda = 1e-3;
        c.ga_mode = "minimize";  // the paired constrain arm reuses ga_lambda and ga_target
        c.ga_target = 5.0;
        c.ga_estimator = "randomized";
        c.steps = 4000;
        c.snapshot_every = 50;
        c.acc_threshold = 0.85;
        c.robust_stds.clear();
        c.robust_coord_begin = 0;
    } else if (name == "row-alignment-report") {
        c.net_dims = {784, 200, 200, 10};
        c.loss = LossKind::cross_entropy;
        c.acc_threshold = 0.85;
        c.robust_stds.clear();
        c.robust_coord_begin = 0;
    } else {
        throw std::runtime_error("unknown experiment '" + name + "'");
    }
    return c;
}

// Parses config text. Precedence: experiment defaults, then global lines in
// file order, then lines in the matching [experiment] section. experiment_override
// (from the command line) wins over an `experiment =` line in the file.
inline ExperimentConfig parse_config(const std::string& text,
                                     const std::string& experiment_override = "") {
    struct Entry {
        std::string section, key, value;
        int line;
    };
    std::vector<Entry> entries;
    std::string section;
    std::istringstream ss(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(ss, raw)) {
        ++line_no;
        std::string line = raw;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = cfg_detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                cfg_detail::fail(line_no, "malformed section header '" + raw + "'");
            section = cfg_detail::trim(line.substr(1, line.size() - 2));
            bool known = false;
            for (const auto& n : experiment_names()) known = known || n == section;
            if (!known) cfg_detail::fail(line_no, "unknown experiment section '" + section + "'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) cfg_detail::fail(line_no, "expected 'key = value'");
        const std::string key = cfg_detail::trim(line.substr(0, eq));
        const std::string value = cfg_detail::trim(line.substr(eq + 1));
        if (!cfg_detail::find_key(key)) cfg_detail::fail(line_no, "unknown key '" + key + "'");
        entries.push_back({section, key, value, line_no});
    }

    // figure out which experiment to resolve
    std::string experiment = experiment_override;
    if (experiment.empty()) {
        for (const auto& e : entries)
            if (e.section.empty() && e.key == "experiment") experiment = e.value;
    }
    if (experiment.empty()) experiment = ExperimentConfig{}.experiment;
    {
        bool known = false;
        for (const auto& n : experiment_names()) known = known || n == experiment;
        if (!known) throw std::runtime_error("unknown experiment '" + experiment + "'");
    }

    ExperimentConfig cfg = experiment_defaults(experiment);
    for (const auto& e : entries) {
        if (!e.section.empty() && e.section != experiment) continue;
        if (e.key == "experiment") {
            if (e.value != experiment && experiment_override.empty() && e.section.empty())
                cfg_detail::fail(e.line, "conflicting experiment lines");
            continue;
        }
        cfg_detail::find_key(e.key)->set(cfg, e.value, e.line);
    }
    cfg.experiment = experiment;
    return cfg;
}

// Fully resolved flat form; parse_config(render_config(c)) == c.
inline std::string render_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& def : cfg_detail::key_defs())
        out += def.name + " = " + def.get(cfg) + "\n";
    return out;
}

}  // namespace grokalign
