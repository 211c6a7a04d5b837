#pragma once

// Dataset synthesis and ingestion: XOR cluster data, the big-endian IDX
// image/label format, stratified subsetting, and a columnar text format
// with a provenance header.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "grokalign/numerics.hpp"
#include "grokalign/rng.hpp"

namespace grokalign {

struct Dataset {
    Matrix inputs;  // m x d
    std::vector<std::size_t> labels;
    std::size_t class_count = 0;
    std::string provenance;

    std::size_t size() const { return inputs.rows; }
    std::size_t dim() const { return inputs.cols; }

    Vector input_row(std::size_t p) const {
        return Vector(inputs.row(p), inputs.row(p) + inputs.cols);
    }
};

// Two +-1 signal coordinates, d-2 noise coordinates uniform on {+-eps},
// label = 1 when x1*x2 is positive, else 0.
inline Dataset gen_xor_cluster(std::size_t m, std::size_t d, double eps, std::uint64_t seed) {
    if (d < 3) throw std::invalid_argument("gen_xor_cluster: d must be >= 3");
    if (!(eps > 0.0)) throw std::invalid_argument("gen_xor_cluster: eps must be positive");
    if (m == 0) throw std::invalid_argument("gen_xor_cluster: m must be positive");
    Dataset ds;
    ds.inputs = Matrix(m, d);
    ds.labels.resize(m);
    ds.class_count = 2;
    RngState rng(seed);
    for (std::size_t p = 0; p < m; ++p) {
        double* row = ds.inputs.row(p);
        row[0] = rng.uniform() < 0.5 ? -1.0 : 1.0;
        row[1] = rng.uniform() < 0.5 ? -1.0 : 1.0;
        for (std::size_t k = 2; k < d; ++k) row[k] = rng.uniform() < 0.5 ? -eps : eps;
        ds.labels[p] = row[0] * row[1] > 0.0 ? 1 : 0;
    }
    std::ostringstream prov;
    prov << "xor-cluster m=" << m << " d=" << d << " eps=" << eps << " seed=" << seed;
    ds.provenance = prov.str();
    return ds;
}

// ---- IDX format ----

namespace detail {

inline std::uint32_t read_be32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error(std::string("idx: truncated header in ") + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Parses the big-endian IDX pair; pixel bytes are scaled to [0, 1].
inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("load_mnist_idx: cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("load_mnist_idx: cannot open " + labels_path);

    const std::uint32_t img_magic = detail::read_be32(img, "images");
    if (img_magic != kIdxImagesMagic)
        throw std::runtime_error("load_mnist_idx: bad image magic " + std::to_string(img_magic));
    const std::uint32_t n_img = detail::read_be32(img, "images");
    const std::uint32_t rows = detail::read_be32(img, "images");
    const std::uint32_t cols = detail::read_be32(img, "images");

    const std::uint32_t lab_magic = detail::read_be32(lab, "labels");
    if (lab_magic != kIdxLabelsMagic)
        throw std::runtime_error("load_mnist_idx: bad label magic " + std::to_string(lab_magic));
    const std::uint32_t n_lab = detail::read_be32(lab, "labels");
    if (n_img != n_lab)
        throw std::runtime_error("load_mnist_idx: image/label count mismatch (" +
                                 std::to_string(n_img) + " vs " + std::to_string(n_lab) + ")");
    if (n_img == 0) throw std::runtime_error("load_mnist_idx: empty files");

    const std::size_t d = static_cast<std::size_t>(rows) * cols;
    Dataset ds;
    ds.inputs = Matrix(n_img, d);
    ds.labels.resize(n_img);
    std::vector<unsigned char> buf(d);
    for (std::uint32_t p = 0; p < n_img; ++p) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(d)))
            throw std::runtime_error("load_mnist_idx: truncated image data");
        double* row = ds.inputs.row(p);
        for (std::size_t k = 0; k < d; ++k) row[k] = static_cast<double>(buf[k]) / 255.0;
        char y = 0;
        if (!lab.read(&y, 1)) throw std::runtime_error("load_mnist_idx: truncated label data");
        if (static_cast<unsigned char>(y) > 9)
            throw std::runtime_error("load_mnist_idx: label out of range");
        ds.labels[p] = static_cast<unsigned char>(y);
    }
    ds.class_count = 10;
    ds.provenance = "mnist-idx images=" + images_path + " labels=" + labels_path;
    return ds;
}

// Inverse of load_mnist_idx for round-trip checks and fixtures; assumes
// square 28x28 unless dim is a different perfect square.
inline void save_mnist_idx(const Dataset& ds, const std::string& images_path,
                           const std::string& labels_path) {
    const auto side = static_cast<std::uint32_t>(std::lround(std::sqrt(double(ds.dim()))));
    if (std::size_t(side) * side != ds.dim())
        throw std::invalid_argument("save_mnist_idx: dim is not a perfect square");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("save_mnist_idx: cannot open " + images_path);
    detail::write_be32(img, kIdxImagesMagic);
    detail::write_be32(img, static_cast<std::uint32_t>(ds.size()));
    detail::write_be32(img, side);
    detail::write_be32(img, side);
    std::vector<unsigned char> buf(ds.dim());
    for (std::size_t p = 0; p < ds.size(); ++p) {
        const double* row = ds.inputs.row(p);
        for (std::size_t k = 0; k < ds.dim(); ++k)
            buf[k] = static_cast<unsigned char>(
                std::clamp<long>(std::lround(row[k] * 255.0), 0, 255));
        img.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size()));
    }
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("save_mnist_idx: cannot open " + labels_path);
    detail::write_be32(lab, kIdxLabelsMagic);
    detail::write_be32(lab, static_cast<std::uint32_t>(ds.size()));
    for (std::size_t p = 0; p < ds.size(); ++p) {
        const char y = static_cast<char>(ds.labels[p]);
        lab.write(&y, 1);
    }
}

// Deterministic stratified sample of at most m_max points; classes are
// re-indexed densely when a filter is applied. Proportions are preserved to
// within one sample per class (largest-remainder allocation).
inline Dataset subset(const Dataset& ds, const std::optional<std::set<std::size_t>>& class_filter,
                      std::size_t m_max, std::uint64_t seed) {
    if (m_max == 0) throw std::invalid_argument("subset: m_max must be >= 1");
    std::vector<std::size_t> class_map(ds.class_count, SIZE_MAX);
    std::size_t next_id = 0;
    for (std::size_t c = 0; c < ds.class_count; ++c)
        if (!class_filter || class_filter->count(c)) class_map[c] = next_id++;
    std::vector<std::vector<std::size_t>> by_class(next_id);
    for (std::size_t p = 0; p < ds.size(); ++p)
        if (class_map[ds.labels[p]] != SIZE_MAX) by_class[class_map[ds.labels[p]]].push_back(p);
    std::size_t total = 0;
    for (const auto& v : by_class) total += v.size();
    if (total == 0) throw std::runtime_error("subset: no samples match the class filter");

    std::vector<std::size_t> quota(next_id, 0);
    if (m_max >= total) {
        for (std::size_t c = 0; c < next_id; ++c) quota[c] = by_class[c].size();
    } else {
        std::vector<std::pair<double, std::size_t>> remainders;
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < next_id; ++c) {
            const double exact = static_cast<double>(m_max) *
                                 static_cast<double>(by_class[c].size()) /
                                 static_cast<double>(total);
            quota[c] = static_cast<std::size_t>(exact);
            assigned += quota[c];
            remainders.push_back({exact - static_cast<double>(quota[c]), c});
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t i = 0; assigned < m_max && i < remainders.size(); ++i) {
            const std::size_t c = remainders[i].second;
            if (quota[c] < by_class[c].size()) {
                ++quota[c];
                ++assigned;
            }
        }
    }

    RngState rng(seed);
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < next_id; ++c) {
        auto& idx = by_class[c];
        RngState cr = rng.split(c + 1);
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[cr.next_u64() % i]);
        chosen.insert(chosen.end(), idx.begin(), idx.begin() + quota[c]);
    }
    std::sort(chosen.begin(), chosen.end());

    Dataset out;
    out.inputs = Matrix(chosen.size(), ds.dim());
    out.labels.resize(chosen.size());
    out.class_count = next_id;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        std::copy(ds.inputs.row(chosen[i]), ds.inputs.row(chosen[i]) + ds.dim(),
                  out.inputs.row(i));
        out.labels[i] = class_map[ds.labels[chosen[i]]];
    }
    std::ostringstream prov;
    prov << ds.provenance << " | subset m_max=" << m_max << " seed=" << seed;
    if (class_filter) {
        prov << " classes=";
        bool first = true;
        for (auto c : *class_filter) {
            prov << (first ? "" : ",") << c;
            first = false;
        }
    }
    out.provenance = prov.str();
    return out;
}

// ---- columnar text serialization ----

inline void save_dataset_text(const Dataset& ds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_dataset_text: cannot open " + path);
    f << "grokalign-dataset 1\n";
    f << "provenance " << ds.provenance << "\n";
    f << "m " << ds.size() << " d " << ds.dim() << " classes " << ds.class_count << "\n";
    char buf[32];
    for (std::size_t p = 0; p < ds.size(); ++p) {
        f << ds.labels[p];
        const double* row = ds.inputs.row(p);
        for (std::size_t k = 0; k < ds.dim(); ++k) {
            std::snprintf(buf, sizeof(buf), "%.17g", row[k]);
            f << ' ' << buf;
        }
        f << '\n';
    }
}

inline Dataset load_dataset_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_dataset_text: cannot open " + path);
    std::string tag;
    int version = 0;
    f >> tag >> version;
    if (tag != "grokalign-dataset" || version != 1)
        throw std::runtime_error("load_dataset_text: bad header");
    f >> tag;
    if (tag != "provenance") throw std::runtime_error("load_dataset_text: expected provenance");
    Dataset ds;
    std::getline(f, ds.provenance);
    if (!ds.provenance.empty() && ds.provenance.front() == ' ') ds.provenance.erase(0, 1);
    std::size_t m = 0, d = 0;
    f >> tag >> m;
    if (tag != "m") throw std::runtime_error("load_dataset_text: expected m");
    f >> tag >> d;
    if (tag != "d") throw std::runtime_error("load_dataset_text: expected d");
    f >> tag >> ds.class_count;
    if (tag != "classes") throw std::runtime_error("load_dataset_text: expected classes");
    ds.inputs = Matrix(m, d);
    ds.labels.resize(m);
    for (std::size_t p = 0; p < m; ++p) {
        if (!(f >> ds.labels[p])) throw std::runtime_error("load_dataset_text: truncated");
        double* row = ds.inputs.row(p);
        for (std::size_t k = 0; k < d; ++k)
            if (!(f >> row[k])) throw std::runtime_error("load_dataset_text: truncated");
    }
    check_finite(ds.inputs, "load_dataset_text");
    return ds;
}

}  // namespace grokalign
