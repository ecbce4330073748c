#include "fedcme/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedcme/rng.hpp"

namespace fedcme {

LinearLayer::LinearLayer(Tensor w, Tensor b) : weights(std::move(w)), bias(std::move(b)) {
    if (weights.shape().size() != 2 || bias.shape().size() != 1 ||
        bias.shape()[0] != weights.rows()) {
        throw DimensionError("linear layer: bias length must equal weight rows");
    }
}

LinearLayer init_linear(std::size_t out, std::size_t in, std::uint64_t seed) {
    auto gen = rng::engine(seed);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor w({out, in});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = dist(gen);
    Tensor b({out});
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = dist(gen);
    return LinearLayer(std::move(w), std::move(b));
}

GradBundle GradBundle::zeros_like(const std::vector<Tensor*>& params) {
    GradBundle g;
    g.grads.reserve(params.size());
    for (const Tensor* p : params) g.grads.emplace_back(Tensor(p->shape()));
    return g;
}

void GradBundle::add_scaled(const GradBundle& other, double scale) {
    if (other.grads.size() != grads.size()) {
        throw DimensionError("grad bundle: tensor count mismatch");
    }
    for (std::size_t t = 0; t < grads.size(); ++t) {
        if (!grads[t].same_shape(other.grads[t])) {
            throw DimensionError("grad bundle: shape mismatch at tensor " + std::to_string(t));
        }
        for (std::size_t i = 0; i < grads[t].size(); ++i) {
            grads[t][i] += scale * other.grads[t][i];
        }
    }
}

Tensor linear_forward(const Tensor& x, const LinearLayer& layer) {
    if (x.cols() != layer.in_dim()) {
        throw DimensionError("linear_forward: input width " + std::to_string(x.cols()) +
                             " != layer in " + std::to_string(layer.in_dim()));
    }
    const std::size_t batch = x.rows(), out = layer.out_dim(), in = layer.in_dim();
    Tensor y({batch, out});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < out; ++o) {
            double acc = layer.bias[o];
            for (std::size_t i = 0; i < in; ++i) {
                acc += x.at(b, i) * layer.weights.at(o, i);
            }
            y.at(b, o) = acc;
        }
    }
    return y;
}

void linear_backward(const Tensor& x, const LinearLayer& layer, const Tensor& dout,
                     Tensor& dweights, Tensor& dbias, Tensor& dx) {
    const std::size_t batch = x.rows(), out = layer.out_dim(), in = layer.in_dim();
    if (dout.rows() != batch || dout.cols() != out) {
        throw DimensionError("linear_backward: upstream shape mismatch");
    }
    dweights = Tensor({out, in});
    dbias = Tensor({out});
    dx = Tensor({batch, in});
    for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t i = 0; i < in; ++i) {
            double acc = 0.0;
            for (std::size_t b = 0; b < batch; ++b) acc += dout.at(b, o) * x.at(b, i);
            dweights.at(o, i) = acc;
        }
        double acc = 0.0;
        for (std::size_t b = 0; b < batch; ++b) acc += dout.at(b, o);
        dbias[o] = acc;
    }
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < in; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o) acc += dout.at(b, o) * layer.weights.at(o, i);
            dx.at(b, i) = acc;
        }
    }
}

Tensor relu(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& upstream) {
    if (!x.same_shape(upstream)) throw DimensionError("relu_backward: shape mismatch");
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > 0.0 ? upstream[i] : 0.0;
    return g;
}

Tensor softmax(const Tensor& logits) {
    const std::size_t batch = logits.rows(), classes = logits.cols();
    Tensor p({batch, classes});
    for (std::size_t b = 0; b < batch; ++b) {
        double m = logits.at(b, 0);
        for (std::size_t c = 1; c < classes; ++c) m = std::max(m, logits.at(b, c));
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) denom += std::exp(logits.at(b, c) - m);
        for (std::size_t c = 0; c < classes; ++c) p.at(b, c) = std::exp(logits.at(b, c) - m) / denom;
    }
    return p;
}

std::pair<double, Tensor> softmax_cross_entropy(const Tensor& logits,
                                                const std::vector<int>& labels) {
    const std::size_t batch = logits.rows(), classes = logits.cols();
    if (labels.size() != batch) {
        throw DimensionError("softmax_cross_entropy: label count != batch size");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw ValidationError("softmax_cross_entropy: label " + std::to_string(y) +
                                  " out of range [0, " + std::to_string(classes) + ")");
        }
    }
    Tensor dlogits({batch, classes});
    double loss_sum = 0.0;
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        double m = logits.at(b, 0);
        for (std::size_t c = 1; c < classes; ++c) m = std::max(m, logits.at(b, c));
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) denom += std::exp(logits.at(b, c) - m);
        const std::size_t y = static_cast<std::size_t>(labels[b]);
        loss_sum += std::log(denom) - (logits.at(b, y) - m);
        for (std::size_t c = 0; c < classes; ++c) {
            const double p = std::exp(logits.at(b, c) - m) / denom;
            dlogits.at(b, c) = (p - (c == y ? 1.0 : 0.0)) * inv_batch;
        }
    }
    return {loss_sum * inv_batch, std::move(dlogits)};
}

bool PerClassFeatures::any_set() const {
    return std::any_of(set.begin(), set.end(), [](char f) { return f != 0; });
}

std::pair<double, Tensor> l2_feature_loss(const Tensor& features, const std::vector<int>& labels,
                                          const PerClassFeatures& global_features) {
    const std::size_t batch = features.rows(), fdim = features.cols();
    if (labels.size() != batch) {
        throw DimensionError("l2_feature_loss: label count != batch size");
    }
    if (global_features.num_classes() > 0 && global_features.feature_dim() != fdim) {
        throw DimensionError("l2_feature_loss: feature dim " + std::to_string(fdim) +
                             " != global feature dim " +
                             std::to_string(global_features.feature_dim()));
    }
    Tensor dfeatures({batch, fdim});
    double loss = 0.0;
    const std::size_t classes = global_features.num_classes();
    for (std::size_t c = 0; c < classes; ++c) {
        // Classes with no global feature yet are skipped: there is nothing
        // meaningful to align to before the first aggregation.
        if (!global_features.set[c]) continue;
        std::size_t count = 0;
        for (std::size_t b = 0; b < batch; ++b) {
            if (labels[b] == static_cast<int>(c)) ++count;
        }
        if (count == 0) continue;
        const double inv_count = 1.0 / static_cast<double>(count);
        for (std::size_t f = 0; f < fdim; ++f) {
            double mean = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                if (labels[b] == static_cast<int>(c)) mean += features.at(b, f);
            }
            mean *= inv_count;
            const double diff = mean - global_features.values.at(c, f);
            loss += diff * diff;
            const double g = 2.0 * diff * inv_count;
            for (std::size_t b = 0; b < batch; ++b) {
                if (labels[b] == static_cast<int>(c)) dfeatures.at(b, f) += g;
            }
        }
    }
    return {loss, std::move(dfeatures)};
}

void sgd_step(const std::vector<Tensor*>& params, const GradBundle& grads, double eta) {
    if (params.size() != grads.grads.size()) {
        throw DimensionError("sgd_step: parameter/gradient count mismatch");
    }
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& p = *params[t];
        const Tensor& g = grads.grads[t];
        if (!p.same_shape(g)) {
            throw DimensionError("sgd_step: shape mismatch at tensor " + std::to_string(t));
        }
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= eta * g[i];
    }
}

GradBundle finite_difference_grad(const std::function<double()>& loss_fn,
                                  const std::vector<Tensor*>& params, double eps) {
    GradBundle g = GradBundle::zeros_like(params);
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& p = *params[t];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p[i];
            p[i] = saved + eps;
            const double up = loss_fn();
            p[i] = saved - eps;
            const double down = loss_fn();
            p[i] = saved;
            g.grads[t][i] = (up - down) / (2.0 * eps);
        }
    }
    return g;
}

}  // namespace fedcme
