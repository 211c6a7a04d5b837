#pragma once

// Speedup report across paired runs: parses metrics.csv files, finds the
// first snapshot reaching the accuracy threshold, and aggregates
// baseline/treated step and wall-time ratios. Runs that never reach the
// threshold are listed separately and excluded from the ratios.

#include <filesystem>
#include <fstream>
#include <sstream>

#include "grokalign/numerics.hpp"

namespace grokalign {

struct RunRecord {
    std::string path;
    std::optional<std::size_t> steps_to_threshold;
    std::optional<double> wall_seconds;  // from the sibling summary.txt when present
};

namespace report_detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(line);
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

// Minimal glob: '*' matches any run of characters (no path separators
// crossed by a single component star is not enforced; patterns here are
// simple like runs/seed*/baseline/metrics.csv).
inline bool glob_match(const std::string& pat, const std::string& str) {
    std::size_t p = 0, s = 0, star = std::string::npos, mark = 0;
    while (s < str.size()) {
        if (p < pat.size() && (pat[p] == str[s])) {
            ++p;
            ++s;
        } else if (p < pat.size() && pat[p] == '*') {
            star = p++;
            mark = s;
        } else if (star != std::string::npos) {
            p = star + 1;
            s = ++mark;
        } else {
            return false;
        }
    }
    while (p < pat.size() && pat[p] == '*') ++p;
    return p == pat.size();
}

inline std::vector<std::string> expand_glob(const std::string& pattern) {
    namespace fs = std::filesystem;
    std::vector<std::string> out;
    if (pattern.find('*') == std::string::npos) {
        if (fs::exists(pattern)) out.push_back(pattern);
        return out;
    }
    // walk from the deepest fixed prefix
    fs::path base = fs::path(pattern).parent_path();
    while (!base.empty() && base.string().find('*') != std::string::npos)
        base = base.parent_path();
    if (base.empty()) base = ".";
    if (!fs::exists(base)) return out;
    for (const auto& entry : fs::recursive_directory_iterator(base)) {
        if (!entry.is_regular_file()) continue;
        const std::string p = entry.path().generic_string();
        if (glob_match(pattern, p)) out.push_back(p);
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::optional<double> wall_seconds_near(const std::string& csv_path) {
    namespace fs = std::filesystem;
    const fs::path sum = fs::path(csv_path).parent_path() / "summary.txt";
    std::ifstream f(sum);
    if (!f) return std::nullopt;
    std::string key;
    while (f >> key) {
        if (key == "wall_seconds") {
            double v = 0.0;
            if (f >> v) return v;
            return std::nullopt;
        }
        std::string rest;
        std::getline(f, rest);
    }
    return std::nullopt;
}

}  // namespace report_detail

inline RunRecord parse_run_csv(const std::string& path, double threshold) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("report: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("report: empty csv " + path);
    const auto header = report_detail::split_csv_line(line);
    std::size_t step_col = SIZE_MAX, acc_col = SIZE_MAX;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "step") step_col = i;
        if (header[i] == "test_acc") acc_col = i;
    }
    if (step_col == SIZE_MAX || acc_col == SIZE_MAX)
        throw std::runtime_error("report: missing step/test_acc columns in " + path);
    RunRecord rec;
    rec.path = path;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto cells = report_detail::split_csv_line(line);
        if (cells.size() <= std::max(step_col, acc_col)) continue;
        const double acc = std::stod(cells[acc_col]);
        if (acc >= threshold) {
            rec.steps_to_threshold = static_cast<std::size_t>(std::stoull(cells[step_col]));
            break;
        }
    }
    rec.wall_seconds = report_detail::wall_seconds_near(path);
    return rec;
}

struct SpeedupReport {
    std::vector<RunRecord> baseline, treated;
    std::vector<double> step_ratios;  // baseline/treated per pair, both reached
    std::vector<double> time_ratios;
    double step_ratio_mean = 0.0, step_ratio_std = 0.0;
    double time_ratio_mean = 0.0, time_ratio_std = 0.0;
    std::vector<std::string> not_reached;
};

namespace report_detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() == 1) return {mean, 0.0};
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return {mean, std::sqrt(var / static_cast<double>(v.size() - 1))};
}

}  // namespace report_detail

// Pairs runs by sorted order (paired seeds); requires at least one pair in
// which both arms reached the threshold.
inline SpeedupReport report_speedup(const std::string& baseline_glob,
                                    const std::string& treated_glob, double threshold) {
    SpeedupReport rep;
    const auto bp = report_detail::expand_glob(baseline_glob);
    const auto tp = report_detail::expand_glob(treated_glob);
    if (bp.empty() || tp.empty())
        throw std::runtime_error("report: no runs matched (" + baseline_glob + " / " +
                                 treated_glob + ")");
    for (const auto& p : bp) rep.baseline.push_back(parse_run_csv(p, threshold));
    for (const auto& p : tp) rep.treated.push_back(parse_run_csv(p, threshold));
    const std::size_t pairs = std::min(rep.baseline.size(), rep.treated.size());
    bool baseline_reached = false, treated_reached = false;
    for (const auto& r : rep.baseline) baseline_reached |= r.steps_to_threshold.has_value();
    for (const auto& r : rep.treated) treated_reached |= r.steps_to_threshold.has_value();
    if (!baseline_reached) throw std::runtime_error("report: no baseline run reached threshold");
    if (!treated_reached) throw std::runtime_error("report: no treated run reached threshold");
    for (std::size_t i = 0; i < pairs; ++i) {
        const auto& b = rep.baseline[i];
        const auto& t = rep.treated[i];
        if (!b.steps_to_threshold) rep.not_reached.push_back(b.path);
        if (!t.steps_to_threshold) rep.not_reached.push_back(t.path);
        if (b.steps_to_threshold && t.steps_to_threshold && *t.steps_to_threshold > 0) {
            rep.step_ratios.push_back(static_cast<double>(*b.steps_to_threshold) /
                                      static_cast<double>(*t.steps_to_threshold));
            if (b.wall_seconds && t.wall_seconds && *t.wall_seconds > 0.0)
                rep.time_ratios.push_back(*b.wall_seconds / *t.wall_seconds);
        }
    }
    std::tie(rep.step_ratio_mean, rep.step_ratio_std) =
        report_detail::mean_std(rep.step_ratios);
    std::tie(rep.time_ratio_mean, rep.time_ratio_std) =
        report_detail::mean_std(rep.time_ratios);
    return rep;
}

inline std::string format_report(const SpeedupReport& rep) {
    std::ostringstream os;
    os << "pairs " << rep.step_ratios.size() << "\n";
    os << "step_ratio " << rep.step_ratio_mean << " +- " << rep.step_ratio_std << "\n";
    if (!rep.time_ratios.empty())
        os << "time_ratio " << rep.time_ratio_mean << " +- " << rep.time_ratio_std << "\n";
    for (const auto& p : rep.not_reached) os << "not_reached " << p << "\n";
    return os.str();
}

}  // namespace grokalign
