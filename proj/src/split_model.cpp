#include "fedcme/split_model.hpp"

#include <string>
#include <utility>

#include "fedcme/rng.hpp"

namespace fedcme {

SplitModel::SplitModel(std::vector<LinearLayer> extractor_layers, LinearLayer classifier_layer)
    : extractor(std::move(extractor_layers)), classifier(std::move(classifier_layer)) {
    if (extractor.empty()) throw ValidationError("split model: extractor must have >= 1 layer");
    for (std::size_t l = 1; l < extractor.size(); ++l) {
        if (extractor[l].in_dim() != extractor[l - 1].out_dim()) {
            throw DimensionError("split model: extractor layer " + std::to_string(l) +
                                 " width mismatch");
        }
    }
    if (classifier.in_dim() != extractor.back().out_dim()) {
        throw DimensionError("split model: classifier input width != extractor output width");
    }
}

std::vector<Tensor*> SplitModel::param_tensors() {
    std::vector<Tensor*> out;
    out.reserve(2 * (extractor.size() + 1));
    for (auto& layer : extractor) {
        out.push_back(&layer.weights);
        out.push_back(&layer.bias);
    }
    out.push_back(&classifier.weights);
    out.push_back(&classifier.bias);
    return out;
}

std::vector<const Tensor*> SplitModel::param_tensors() const {
    std::vector<const Tensor*> out;
    out.reserve(2 * (extractor.size() + 1));
    for (const auto& layer : extractor) {
        out.push_back(&layer.weights);
        out.push_back(&layer.bias);
    }
    out.push_back(&classifier.weights);
    out.push_back(&classifier.bias);
    return out;
}

SplitModel make_split_model(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                            std::size_t num_classes, std::uint64_t seed) {
    if (hidden.empty()) throw ValidationError("split model: need >= 1 hidden layer");
    std::vector<LinearLayer> extractor;
    std::size_t in = input_dim;
    std::uint64_t layer_index = 0;
    for (std::size_t width : hidden) {
        extractor.push_back(init_linear(width, in, rng::derive(seed, {layer_index})));
        in = width;
        ++layer_index;
    }
    LinearLayer classifier = init_linear(num_classes, in, rng::derive(seed, {layer_index}));
    return SplitModel(std::move(extractor), std::move(classifier));
}

Tensor forward_features(const SplitModel& m, const Tensor& x) {
    if (x.cols() != m.input_dim()) {
        throw DimensionError("forward_features: input width != model input dim");
    }
    Tensor h = x;
    for (const auto& layer : m.extractor) h = relu(linear_forward(h, layer));
    return h;
}

Tensor forward_features(const SplitModel& m, const Tensor& x, ForwardCache& cache) {
    if (x.cols() != m.input_dim()) {
        throw DimensionError("forward_features: input width != model input dim");
    }
    cache.input = x;
    cache.preacts.clear();
    cache.acts.clear();
    const Tensor* h = &cache.input;
    for (const auto& layer : m.extractor) {
        cache.preacts.push_back(linear_forward(*h, layer));
        cache.acts.push_back(relu(cache.preacts.back()));
        h = &cache.acts.back();
    }
    return cache.acts.back();
}

Tensor forward_logits(const SplitModel& m, const Tensor& features) {
    return linear_forward(features, m.classifier);
}

GradBundle backward(const SplitModel& m, const ForwardCache& cache, const Tensor& features,
                    const Tensor& dlogits, const Tensor& dfeatures_extra) {
    GradBundle bundle;
    bundle.grads.resize(2 * (m.extractor.size() + 1));
    const std::size_t cls_w = 2 * m.extractor.size();

    Tensor dfeat;
    linear_backward(features, m.classifier, dlogits, bundle.grads[cls_w], bundle.grads[cls_w + 1],
                    dfeat);
    if (!dfeatures_extra.empty()) {
        if (!dfeat.same_shape(dfeatures_extra)) {
            throw DimensionError("backward: extra feature gradient shape mismatch");
        }
        for (std::size_t i = 0; i < dfeat.size(); ++i) dfeat[i] += dfeatures_extra[i];
    }

    Tensor upstream = std::move(dfeat);
    for (std::size_t l = m.extractor.size(); l-- > 0;) {
        const Tensor dpre = relu_backward(cache.preacts[l], upstream);
        const Tensor& layer_in = (l == 0) ? cache.input : cache.acts[l - 1];
        Tensor dx;
        linear_backward(layer_in, m.extractor[l], dpre, bundle.grads[2 * l],
                        bundle.grads[2 * l + 1], dx);
        upstream = std::move(dx);
    }
    return bundle;
}

namespace {

void require_same_architecture(const SplitModel& a, const SplitModel& b) {
    bool ok = a.extractor.size() == b.extractor.size() && a.feature_dim() == b.feature_dim() &&
              a.num_classes() == b.num_classes() && a.input_dim() == b.input_dim();
    if (ok) {
        for (std::size_t l = 0; l < a.extractor.size(); ++l) {
            ok = ok && a.extractor[l].out_dim() == b.extractor[l].out_dim() &&
                 a.extractor[l].in_dim() == b.extractor[l].in_dim();
        }
    }
    if (!ok) throw DimensionError("swap: models have different architectures");
}

}  // namespace

void swap_classifiers(SplitModel& a, SplitModel& b) {
    require_same_architecture(a, b);
    std::swap(a.classifier, b.classifier);
}

void swap_extractors(SplitModel& a, SplitModel& b) {
    require_same_architecture(a, b);
    std::swap(a.extractor, b.extractor);
}

void swap_whole(SplitModel& a, SplitModel& b) {
    require_same_architecture(a, b);
    std::swap(a.extractor, b.extractor);
    std::swap(a.classifier, b.classifier);
}

std::size_t ParamVector::Segment::count() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

bool ParamVector::same_layout(const ParamVector& other) const {
    if (layout.size() != other.layout.size() || theta_count != other.theta_count) return false;
    for (std::size_t s = 0; s < layout.size(); ++s) {
        if (layout[s].offset != other.layout[s].offset || layout[s].shape != other.layout[s].shape) {
            return false;
        }
    }
    return true;
}

ParamVector flatten(const SplitModel& m) {
    ParamVector v;
    const auto tensors = m.param_tensors();
    std::size_t total = 0;
    for (const Tensor* t : tensors) total += t->size();
    v.values.reserve(total);
    for (const Tensor* t : tensors) {
        ParamVector::Segment seg;
        seg.offset = v.values.size();
        seg.shape = t->shape();
        v.layout.push_back(std::move(seg));
        v.values.insert(v.values.end(), t->data().begin(), t->data().end());
    }
    // Last two segments are the classifier; everything before is extractor.
    v.theta_count = v.layout[v.layout.size() - 2].offset;
    return v;
}

SplitModel unflatten(const ParamVector& v, const SplitModel& tmpl) {
    SplitModel m = tmpl;
    const auto tensors = m.param_tensors();
    if (v.layout.size() != tensors.size()) {
        throw ValidationError("unflatten: layout has " + std::to_string(v.layout.size()) +
                              " segments, template expects " + std::to_string(tensors.size()));
    }
    for (std::size_t s = 0; s < tensors.size(); ++s) {
        const auto& seg = v.layout[s];
        if (seg.shape != tensors[s]->shape()) {
            throw ValidationError("unflatten: segment " + std::to_string(s) +
                                  " shape mismatch with template");
        }
        if (seg.offset + seg.count() > v.values.size()) {
            throw ValidationError("unflatten: segment " + std::to_string(s) +
                                  " exceeds value buffer");
        }
        std::copy(v.values.begin() + static_cast<std::ptrdiff_t>(seg.offset),
                  v.values.begin() + static_cast<std::ptrdiff_t>(seg.offset + seg.count()),
                  tensors[s]->data().begin());
    }
    return m;
}

}  // namespace fedcme
