#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "fedcme/tensor.hpp"

namespace fedcme {

// One dense layer: weights [out x in], bias [out].
struct LinearLayer {
    Tensor weights;
    Tensor bias;

    LinearLayer() = default;
    LinearLayer(Tensor w, Tensor b);

    std::size_t in_dim() const { return weights.cols(); }
    std::size_t out_dim() const { return weights.rows(); }

    friend bool operator==(const LinearLayer& a, const LinearLayer& b) {
        return a.weights == b.weights && a.bias == b.bias;
    }
};

// Glorot-uniform initialized layer; weights and bias both drawn from
// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
LinearLayer init_linear(std::size_t out, std::size_t in, std::uint64_t seed);

// One gradient tensor per parameter tensor, identical shapes.
struct GradBundle {
    std::vector<Tensor> grads;

    GradBundle() = default;
    static GradBundle zeros_like(const std::vector<Tensor*>& params);
    void add_scaled(const GradBundle& other, double scale);
};

// out[b][o] = sum_i x[b][i] * W[o][i] + bias[o]
Tensor linear_forward(const Tensor& x, const LinearLayer& layer);

// Gradients of a linear layer given upstream dL/dout; also returns dL/dx.
void linear_backward(const Tensor& x, const LinearLayer& layer, const Tensor& dout,
                     Tensor& dweights, Tensor& dbias, Tensor& dx);

Tensor relu(const Tensor& x);
// Zeroes the upstream gradient wherever the forward input was <= 0.
Tensor relu_backward(const Tensor& x, const Tensor& upstream);

// Mean cross-entropy over the batch with max-subtraction stabilization.
// dlogits = (softmax - onehot) / B.
std::pair<double, Tensor> softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Row-wise softmax of logits (stabilized); exposed for evaluation paths.
Tensor softmax(const Tensor& logits);

// Per-class feature container used both for a round's global features and
// a client's finalized local features. A class with set=false has never
// been observed and carries no value.
struct PerClassFeatures {
    Tensor values;            // [C x F]
    std::vector<char> set;    // per-class flag

    PerClassFeatures() = default;
    PerClassFeatures(std::size_t num_classes, std::size_t feature_dim)
        : values({num_classes, feature_dim}), set(num_classes, 0) {}

    std::size_t num_classes() const { return set.size(); }
    std::size_t feature_dim() const { return set.empty() ? 0 : values.cols(); }
    bool any_set() const;

    friend bool operator==(const PerClassFeatures& a, const PerClassFeatures& b) {
        return a.values == b.values && a.set == b.set;
    }
};

// Alignment loss: sum over classes present in the batch (and set in
// `global_features`) of || mean feature of that class - global feature ||^2.
// The gradient routes 2 * (mean - zeta_c) / |B_c| to every member of class c.
std::pair<double, Tensor> l2_feature_loss(const Tensor& features, const std::vector<int>& labels,
                                          const PerClassFeatures& global_features);

// p <- p - eta * g for every entry of every parameter tensor.
void sgd_step(const std::vector<Tensor*>& params, const GradBundle& grads, double eta);

// Central-difference gradient of an arbitrary scalar loss over the given
// parameters. Test oracle; independent of any backprop path.
GradBundle finite_difference_grad(const std::function<double()>& loss_fn,
                                  const std::vector<Tensor*>& params, double eps);

}  // namespace fedcme
