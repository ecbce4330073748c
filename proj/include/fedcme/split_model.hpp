#pragma once

#include <cstdint>
#include <vector>

#include "fedcme/nn.hpp"

namespace fedcme {

// Feature extractor (a stack of linear+ReLU layers) plus one final linear
// classifier. The two halves are independently swappable, which is the
// exchange mechanism the simulator is built around.
struct SplitModel {
    std::vector<LinearLayer> extractor;  // ReLU after every extractor layer
    LinearLayer classifier;              // [C x F]

    SplitModel() = default;
    SplitModel(std::vector<LinearLayer> extractor_layers, LinearLayer classifier_layer);

    std::size_t input_dim() const { return extractor.front().in_dim(); }
    std::size_t feature_dim() const { return classifier.in_dim(); }
    std::size_t num_classes() const { return classifier.out_dim(); }

    // All parameter tensors, extractor first then classifier, each layer
    // contributing weights then bias. This is also the flatten() layout.
    std::vector<Tensor*> param_tensors();
    std::vector<const Tensor*> param_tensors() const;

    friend bool operator==(const SplitModel& a, const SplitModel& b) {
        return a.extractor == b.extractor && a.classifier == b.classifier;
    }
};

// Seeded Glorot-uniform model: input -> hidden[0] ReLU -> ... -> C linear.
SplitModel make_split_model(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                            std::size_t num_classes, std::uint64_t seed);

// Intermediate activations retained by a training forward pass.
struct ForwardCache {
    Tensor input;
    std::vector<Tensor> preacts;  // per extractor layer, before ReLU
    std::vector<Tensor> acts;     // per extractor layer, after ReLU
};

Tensor forward_features(const SplitModel& m, const Tensor& x);
Tensor forward_features(const SplitModel& m, const Tensor& x, ForwardCache& cache);
Tensor forward_logits(const SplitModel& m, const Tensor& features);

// Backprop through classifier and extractor. `dlogits` flows into both
// halves; `dfeatures_extra` (may be empty) is injected at the feature
// boundary and therefore reaches the extractor only.
GradBundle backward(const SplitModel& m, const ForwardCache& cache, const Tensor& features,
                    const Tensor& dlogits, const Tensor& dfeatures_extra);

// In-place exchanges between two models of identical architecture.
void swap_classifiers(SplitModel& a, SplitModel& b);
void swap_extractors(SplitModel& a, SplitModel& b);
void swap_whole(SplitModel& a, SplitModel& b);

// Flat parameter buffer with a layout descriptor. All extractor segments
// precede classifier segments so aggregation can operate per-part.
struct ParamVector {
    struct Segment {
        std::size_t offset = 0;
        std::vector<std::size_t> shape;
        std::size_t count() const;
    };

    std::vector<double> values;
    std::vector<Segment> layout;
    std::size_t theta_count = 0;  // values[0:theta_count) hold extractor parameters

    std::size_t size() const { return values.size(); }
    bool same_layout(const ParamVector& other) const;

    friend bool operator==(const ParamVector& a, const ParamVector& b) {
        return a.theta_count == b.theta_count && a.values == b.values && a.same_layout(b);
    }
};

ParamVector flatten(const SplitModel& m);
SplitModel unflatten(const ParamVector& v, const SplitModel& tmpl);

}  // namespace fedcme
