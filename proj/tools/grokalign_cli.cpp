// Experiment runner CLI.
//
//   grokalign run --config cfg.txt [--experiment name] [--seed n] [--out dir]
//   grokalign report --threshold 0.85 --baseline "runs/s*/baseline/metrics.csv" \
//                    --treated "runs/s*/grokalign/metrics.csv"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "grokalign/report.hpp"
#include "grokalign/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"grokalign experiment lab"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "execute an experiment from a config");
    std::string config_path, experiment, out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false, out_set = false;
    run->add_option("--config", config_path, "config file (key = value lines)");
    run->add_option("--experiment", experiment, "experiment name override");
    run->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
        seed_set = true;
    });
    run->add_option("--out", out_dir, "output directory override")->each([&](const std::string&) {
        out_set = true;
    });

    auto* report = app.add_subcommand("report", "speedup report over paired runs");
    std::string baseline_glob, treated_glob;
    double threshold = 0.85;
    report->add_option("--threshold", threshold, "test-accuracy threshold")->required();
    report->add_option("--baseline", baseline_glob, "baseline metrics.csv glob")->required();
    report->add_option("--treated", treated_glob, "treated metrics.csv glob")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            std::string text;
            if (!config_path.empty()) {
                std::ifstream f(config_path);
                if (!f) {
                    std::cerr << "cannot open config " << config_path << "\n";
                    return grokalign::kExitConfigError;
                }
                std::stringstream ss;
                ss << f.rdbuf();
                text = ss.str();
            }
            grokalign::ExperimentConfig cfg = grokalign::parse_config(text, experiment);
            if (seed_set) cfg.seed = seed;
            if (out_set) cfg.out_dir = out_dir;
            const int status = grokalign::run_experiment(cfg);
            if (status == grokalign::kExitOk)
                std::cout << "done: " << cfg.out_dir << "\n";
            else
                std::cerr << "run failed with status " << status << "\n";
            return status;
        }
        const grokalign::SpeedupReport rep =
            grokalign::report_speedup(baseline_glob, treated_glob, threshold);
        std::cout << grokalign::format_report(rep);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return grokalign::kExitConfigError;
    }
}
