#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedcme/tensor.hpp"

namespace fedcme {

// Immutable after construction; shared read-only across client workers.
struct Dataset {
    Tensor x;                // [N x d]
    std::vector<int> y;      // class ids, every label < num_classes
    int num_classes = 0;

    std::size_t size() const { return y.size(); }
    std::size_t dim() const { return x.cols(); }
    void validate() const;
};

// Per-client index lists into a parent dataset. Disjoint; union covers all
// assigned samples.
struct Partition {
    std::vector<std::vector<std::size_t>> client_indices;

    std::size_t num_clients() const { return client_indices.size(); }
    std::size_t total_assigned() const;
};

struct EvalSplit {
    std::vector<std::size_t> indices;
    bool empty_client = false;  // flagged when the owning client had no data
};

// Isotropic Gaussian blobs, one seeded random center per class, centers
// pairwise separated by at least 4*spread (centers resampled until
// satisfied). Samples ordered class by class.
Dataset generate_blobs(int classes, int dim, int n_per_class, double spread, std::uint64_t seed);

// Deterministic per-class split: the last `test_per_class` samples of each
// class form the test set. Requires class-contiguous ordering as produced
// by generate_blobs.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, int test_per_class);

// Big-endian IDX ingestion. Pixels scaled to [0,1], images flattened to
// rows*cols. Wrong magic -> FormatError, truncation -> std::length_error,
// image/label count mismatch -> ValidationError.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Inverse of load_idx for datasets whose entries are multiples of 1/255;
// rows*cols must equal the dataset dimension.
void save_idx(const Dataset& ds, std::uint32_t rows, std::uint32_t cols,
              const std::string& images_path, const std::string& labels_path);

// For each class draw proportions ~ Dir(alpha * 1_K) and split that class's
// indices across clients with largest-remainder rounding. Clients may end up
// with zero samples of some or all classes.
Partition dirichlet_partition(const Dataset& ds, int num_clients, double alpha, std::uint64_t seed);

// Seeded uniform sample without replacement of round(fraction * n) indices.
EvalSplit split_eval(const std::vector<std::size_t>& client_indices, double fraction,
                     std::uint64_t seed);

// One epoch of mini-batches: seeded shuffle, final partial batch included.
// The epoch index is mixed into the seed so every epoch reshuffles.
std::vector<std::vector<std::size_t>> batch_iter(const std::vector<std::size_t>& indices,
                                                 int batch_size, std::uint64_t seed, int epoch);

// Rows x / labels y for the given sample indices.
void gather_batch(const Dataset& ds, const std::vector<std::size_t>& indices, Tensor& x_out,
                  std::vector<int>& y_out);

}  // namespace fedcme
