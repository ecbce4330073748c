#include "fedcme/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "fedcme/rng.hpp"

namespace fedcme {

void Dataset::validate() const {
    if (x.shape().size() != 2) throw DimensionError("dataset: x must be 2-D");
    if (x.rows() != y.size()) throw ValidationError("dataset: row count != label count");
    for (int label : y) {
        if (label < 0 || label >= num_classes) {
            throw ValidationError("dataset: label " + std::to_string(label) + " out of range");
        }
    }
}

std::size_t Partition::total_assigned() const {
    std::size_t n = 0;
    for (const auto& idx : client_indices) n += idx.size();
    return n;
}

Dataset generate_blobs(int classes, int dim, int n_per_class, double spread, std::uint64_t seed) {
    if (classes < 2 || dim < 2) throw ValidationError("generate_blobs: need classes >= 2, dim >= 2");
    if (n_per_class < 1 || spread < 0.0) {
        throw ValidationError("generate_blobs: need n_per_class >= 1, spread >= 0");
    }
    auto gen = rng::engine(rng::derive(seed, {rng::kBlobs}));
    std::uniform_real_distribution<double> center_dist(-1.0, 1.0);

    const double min_sep = 4.0 * spread;
    std::vector<double> centers;
    constexpr int kMaxAttempts = 10000;
    for (int attempt = 0;; ++attempt) {
        if (attempt >= kMaxAttempts) {
            throw ValidationError("generate_blobs: could not separate centers by 4*spread");
        }
        centers.assign(static_cast<std::size_t>(classes * dim), 0.0);
        for (double& v : centers) v = center_dist(gen);
        bool ok = true;
        for (int a = 0; a < classes && ok; ++a) {
            for (int b = a + 1; b < classes && ok; ++b) {
                double d2 = 0.0;
                for (int f = 0; f < dim; ++f) {
                    const double diff = centers[static_cast<std::size_t>(a * dim + f)] -
                                        centers[static_cast<std::size_t>(b * dim + f)];
                    d2 += diff * diff;
                }
                ok = d2 >= min_sep * min_sep;
            }
        }
        if (ok) break;
    }

    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t n_total = static_cast<std::size_t>(classes) * static_cast<std::size_t>(n_per_class);
    Dataset ds;
    ds.num_classes = classes;
    ds.x = Tensor({n_total, static_cast<std::size_t>(dim)});
    ds.y.resize(n_total);
    std::size_t row = 0;
    for (int c = 0; c < classes; ++c) {
        for (int s = 0; s < n_per_class; ++s, ++row) {
            for (int f = 0; f < dim; ++f) {
                ds.x.at(row, static_cast<std::size_t>(f)) =
                    centers[static_cast<std::size_t>(c * dim + f)] + spread * noise(gen);
            }
            ds.y[row] = c;
        }
    }
    return ds;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, int test_per_class) {
    if (test_per_class < 0) throw ValidationError("split_train_test: negative test count");
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        by_class[static_cast<std::size_t>(ds.y[i])].push_back(i);
    }
    std::vector<char> is_test(ds.size(), 0);
    for (const auto& idx : by_class) {
        if (idx.size() < static_cast<std::size_t>(test_per_class)) {
            throw ValidationError("split_train_test: class smaller than test_per_class");
        }
        for (std::size_t i = idx.size() - static_cast<std::size_t>(test_per_class); i < idx.size();
             ++i) {
            is_test[idx[i]] = 1;
        }
    }
    auto take = [&](bool test_part) {
        Dataset out;
        out.num_classes = ds.num_classes;
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if ((is_test[i] != 0) == test_part) rows.push_back(i);
        }
        out.x = Tensor({rows.size(), ds.dim()});
        out.y.resize(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t f = 0; f < ds.dim(); ++f) out.x.at(r, f) = ds.x.at(rows[r], f);
            out.y[r] = ds.y[rows[r]];
        }
        return out;
    };
    return {take(false), take(true)};
}

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;  // 2051
constexpr std::uint32_t kLabelsMagic = 0x00000801;  // 2049

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("idx: cannot open " + path);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(f),
                                      std::istreambuf_iterator<char>());
}

std::uint32_t read_u32_be(const std::vector<unsigned char>& buf, std::size_t offset,
                          const std::string& path) {
    if (offset + 4 > buf.size()) throw std::length_error("idx: truncated header in " + path);
    return (static_cast<std::uint32_t>(buf[offset]) << 24) |
           (static_cast<std::uint32_t>(buf[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(buf[offset + 2]) << 8) |
           static_cast<std::uint32_t>(buf[offset + 3]);
}

void write_u32_be(std::ofstream& f, std::uint32_t v) {
    const unsigned char bytes[4] = {static_cast<unsigned char>((v >> 24) & 0xFF),
                                    static_cast<unsigned char>((v >> 16) & 0xFF),
                                    static_cast<unsigned char>((v >> 8) & 0xFF),
                                    static_cast<unsigned char>(v & 0xFF)};
    f.write(reinterpret_cast<const char*>(bytes), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);

    if (read_u32_be(img, 0, images_path) != kImagesMagic) {
        throw FormatError("idx: bad image magic in " + images_path);
    }
    if (read_u32_be(lab, 0, labels_path) != kLabelsMagic) {
        throw FormatError("idx: bad label magic in " + labels_path);
    }
    const std::uint32_t n_images = read_u32_be(img, 4, images_path);
    const std::uint32_t rows = read_u32_be(img, 8, images_path);
    const std::uint32_t cols = read_u32_be(img, 12, images_path);
    const std::uint32_t n_labels = read_u32_be(lab, 4, labels_path);
    if (n_images != n_labels) {
        throw ValidationError("idx: image count " + std::to_string(n_images) +
                              " != label count " + std::to_string(n_labels));
    }
    const std::size_t pixels = static_cast<std::size_t>(n_images) * rows * cols;
    if (img.size() < 16 + pixels) throw std::length_error("idx: truncated image data in " + images_path);
    if (lab.size() < 8 + n_labels) throw std::length_error("idx: truncated label data in " + labels_path);

    Dataset ds;
    ds.x = Tensor({n_images, static_cast<std::size_t>(rows) * cols});
    ds.y.resize(n_images);
    for (std::size_t i = 0; i < pixels; ++i) {
        ds.x[i] = static_cast<double>(img[16 + i]) / 255.0;
    }
    int max_label = -1;
    for (std::uint32_t i = 0; i < n_labels; ++i) {
        ds.y[i] = static_cast<int>(lab[8 + i]);
        max_label = std::max(max_label, ds.y[i]);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

void save_idx(const Dataset& ds, std::uint32_t rows, std::uint32_t cols,
              const std::string& images_path, const std::string& labels_path) {
    if (static_cast<std::size_t>(rows) * cols != ds.dim()) {
        throw DimensionError("idx: rows*cols != dataset dimension");
    }
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("idx: cannot write " + images_path);
    write_u32_be(img, kImagesMagic);
    write_u32_be(img, static_cast<std::uint32_t>(ds.size()));
    write_u32_be(img, rows);
    write_u32_be(img, cols);
    for (std::size_t i = 0; i < ds.x.size(); ++i) {
        const long v = std::lround(ds.x[i] * 255.0);
        img.put(static_cast<char>(std::clamp(v, 0L, 255L)));
    }
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("idx: cannot write " + labels_path);
    write_u32_be(lab, kLabelsMagic);
    write_u32_be(lab, static_cast<std::uint32_t>(ds.size()));
    for (int label : ds.y) lab.put(static_cast<char>(label));
}

Partition dirichlet_partition(const Dataset& ds, int num_clients, double alpha,
                              std::uint64_t seed) {
    if (num_clients < 1) throw ValidationError("dirichlet_partition: need K >= 1");
    if (!(alpha > 0.0)) throw ValidationError("dirichlet_partition: need alpha > 0");
    const std::size_t k = static_cast<std::size_t>(num_clients);

    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        by_class[static_cast<std::size_t>(ds.y[i])].push_back(i);
    }

    auto gen = rng::engine(rng::derive(seed, {rng::kPartition}));
    std::gamma_distribution<double> gamma(alpha, 1.0);

    Partition part;
    part.client_indices.assign(k, {});
    for (auto& class_indices : by_class) {
        std::shuffle(class_indices.begin(), class_indices.end(), gen);

        std::vector<double> proportions(k);
        double sum = 0.0;
        for (double& p : proportions) {
            p = gamma(gen);
            sum += p;
        }
        if (sum <= 0.0) {
            proportions.assign(k, 1.0);  // degenerate underflow; fall back to uniform
            sum = static_cast<double>(k);
        }
        for (double& p : proportions) p /= sum;

        // Largest-remainder rounding conserves the per-class total exactly.
        const std::size_t n = class_indices.size();
        std::vector<std::size_t> counts(k);
        std::vector<std::pair<double, std::size_t>> remainders(k);
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < k; ++c) {
            const double exact = proportions[c] * static_cast<double>(n);
            counts[c] = static_cast<std::size_t>(std::floor(exact));
            assigned += counts[c];
            remainders[c] = {exact - std::floor(exact), c};
        }
        std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t r = 0; r < n - assigned; ++r) ++counts[remainders[r].second];

        std::size_t cursor = 0;
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t i = 0; i < counts[c]; ++i) {
                part.client_indices[c].push_back(class_indices[cursor++]);
            }
        }
    }
    for (auto& idx : part.client_indices) std::sort(idx.begin(), idx.end());
    return part;
}

EvalSplit split_eval(const std::vector<std::size_t>& client_indices, double fraction,
                     std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ValidationError("split_eval: fraction must be in (0, 1)");
    }
    EvalSplit out;
    if (client_indices.empty()) {
        out.empty_client = true;
        return out;
    }
    const std::size_t n = static_cast<std::size_t>(
        std::lround(fraction * static_cast<double>(client_indices.size())));
    std::vector<std::size_t> pool = client_indices;
    auto gen = rng::engine(seed);
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(gen)]);
    }
    out.indices.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(out.indices.begin(), out.indices.end());
    return out;
}

std::vector<std::vector<std::size_t>> batch_iter(const std::vector<std::size_t>& indices,
                                                 int batch_size, std::uint64_t seed, int epoch) {
    if (batch_size < 1) throw ValidationError("batch_iter: batch size must be >= 1");
    std::vector<std::size_t> order = indices;
    auto gen = rng::engine(rng::derive(seed, {static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), gen);

    std::vector<std::vector<std::size_t>> batches;
    const std::size_t b = static_cast<std::size_t>(batch_size);
    for (std::size_t start = 0; start < order.size(); start += b) {
        const std::size_t end = std::min(start + b, order.size());
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

void gather_batch(const Dataset& ds, const std::vector<std::size_t>& indices, Tensor& x_out,
                  std::vector<int>& y_out) {
    x_out = Tensor({indices.size(), ds.dim()});
    y_out.resize(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        for (std::size_t f = 0; f < ds.dim(); ++f) x_out.at(r, f) = ds.x.at(indices[r], f);
        y_out[r] = ds.y[indices[r]];
    }
}

}  // namespace fedcme
