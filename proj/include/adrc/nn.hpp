#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "adrc/embeddings.hpp"
#include "adrc/io.hpp"
#include "adrc/random.hpp"

// The sentence CNN: one convolutional layer over the sentence matrix,
// max-over-time pooling, two fully-connected layers with inverted dropout,
// softmax output. Gradients are exact and hand-derived; training uses Adam.
//
// Everything is templated on the scalar type: double is the reference
// (bit-deterministic) width, float is the fast path behind the CLI flag.

namespace adrc::nn {

using emb::SentenceMatrix;

struct SentenceTooShort : std::runtime_error {
    explicit SentenceTooShort(const std::string& what) : std::runtime_error(what) {}
};
struct NonFiniteLoss : std::runtime_error {
    NonFiniteLoss(int step, double loss)
        : std::runtime_error("non-finite loss " + std::to_string(loss) + " at step " +
                             std::to_string(step)),
          step(step),
          loss(loss) {}
    int step;
    double loss;
};

struct CnnConfig {
    int filter_count = 300;   // F
    int filter_width = 5;     // h
    int embedding_dim = 300;  // d
    int fc1_units = 1024;
    int fc2_units = 256;
    int class_count = 2;
    double dropout_rate = 0.2;
    double l2 = 1e-2;            // lambda; loss carries (lambda/2)*||W||^2
    double learning_rate = 5e-4;
    int iterations = 20000;      // minibatch steps
    int batch_size = 50;
    uint64_t seed = 1;

    bool operator==(const CnnConfig&) const = default;
};

template <class Scalar>
struct CnnModel {
    CnnConfig config;
    std::vector<Scalar> conv_w;  // F x h x d, filter-major
    std::vector<Scalar> conv_b;  // F
    std::vector<Scalar> fc1_w;   // F x fc1_units, input-major
    std::vector<Scalar> fc1_b;
    std::vector<Scalar> fc2_w;   // fc1_units x fc2_units
    std::vector<Scalar> fc2_b;
    std::vector<Scalar> out_w;   // fc2_units x class_count
    std::vector<Scalar> out_b;

    // Tensors in declaration order; even slots are weight matrices, odd are biases.
    std::array<std::span<Scalar>, 8> tensors() {
        return {conv_w, conv_b, fc1_w, fc1_b, fc2_w, fc2_b, out_w, out_b};
    }
    std::array<std::span<const Scalar>, 8> tensors() const {
        return {conv_w, conv_b, fc1_w, fc1_b, fc2_w, fc2_b, out_w, out_b};
    }

    size_t parameter_count() const {
        size_t n = 0;
        for (auto t : tensors()) n += t.size();
        return n;
    }
};

template <class Scalar>
struct CnnGradients {
    std::vector<Scalar> conv_w, conv_b, fc1_w, fc1_b, fc2_w, fc2_b, out_w, out_b;

    std::array<std::span<Scalar>, 8> tensors() {
        return {conv_w, conv_b, fc1_w, fc1_b, fc2_w, fc2_b, out_w, out_b};
    }

    static CnnGradients zeros_like(const CnnModel<Scalar>& model) {
        CnnGradients g;
        auto src = model.tensors();
        auto dst = std::array{&g.conv_w, &g.conv_b, &g.fc1_w, &g.fc1_b,
                              &g.fc2_w,  &g.fc2_b,  &g.out_w, &g.out_b};
        for (size_t i = 0; i < src.size(); ++i) dst[i]->assign(src[i].size(), Scalar(0));
        return g;
    }

    void zero() {
        for (auto t : tensors()) std::fill(t.begin(), t.end(), Scalar(0));
    }
};

namespace detail {

template <class Scalar>
void fill_uniform(std::vector<Scalar>& tensor, size_t count, double bound, Rng& rng) {
    tensor.resize(count);
    for (auto& x : tensor) x = static_cast<Scalar>(rng.uniform(-bound, bound));
}

}  // namespace detail

// Symmetric scaled initialization, biases zero.
template <class Scalar>
CnnModel<Scalar> init_model(const CnnConfig& config) {
    CnnModel<Scalar> model;
    model.config = config;
    Rng rng(mix_seed(config.seed, 0x1417));
    const size_t window = static_cast<size_t>(config.filter_width) * config.embedding_dim;
    auto glorot = [](size_t fan_in, size_t fan_out) {
        return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    };
    detail::fill_uniform(model.conv_w, static_cast<size_t>(config.filter_count) * window,
                         glorot(window, static_cast<size_t>(config.filter_count)), rng);
    model.conv_b.assign(static_cast<size_t>(config.filter_count), Scalar(0));
    detail::fill_uniform(model.fc1_w, static_cast<size_t>(config.filter_count) * config.fc1_units,
                         glorot(static_cast<size_t>(config.filter_count),
                                static_cast<size_t>(config.fc1_units)),
                         rng);
    model.fc1_b.assign(static_cast<size_t>(config.fc1_units), Scalar(0));
    detail::fill_uniform(model.fc2_w, static_cast<size_t>(config.fc1_units) * config.fc2_units,
                         glorot(static_cast<size_t>(config.fc1_units),
                                static_cast<size_t>(config.fc2_units)),
                         rng);
    model.fc2_b.assign(static_cast<size_t>(config.fc2_units), Scalar(0));
    detail::fill_uniform(model.out_w, static_cast<size_t>(config.fc2_units) * config.class_count,
                         glorot(static_cast<size_t>(config.fc2_units),
                                static_cast<size_t>(config.class_count)),
                         rng);
    model.out_b.assign(static_cast<size_t>(config.class_count), Scalar(0));
    return model;
}

// --- forward pass -----------------------------------------------------------

enum class Mode { Train, Infer };

template <class Scalar>
struct ForwardTrace {
    const SentenceMatrix<Scalar>* input = nullptr;
    int32_t width = 0;             // W = N - h + 1 valid window positions
    std::vector<Scalar> conv_map;  // F x W, filter-major, post-ReLU
    std::vector<Scalar> pooled;    // F
    std::vector<int32_t> argmax;   // F, window position of each filter's max
    std::vector<Scalar> fc1_pre, fc1_act;
    std::vector<Scalar> fc2_pre, fc2_act;
    std::vector<uint8_t> mask1, mask2;  // dropout keep masks (all 1 at inference)
    Scalar keep_scale1 = Scalar(1), keep_scale2 = Scalar(1);
    std::vector<Scalar> logits;
    std::vector<Scalar> probs;
};

// Valid (no-overhang) convolution with ReLU:
//   map[f, t] = relu(bias_f + sum_{j<h,k<d} filter_f[j,k] * M[k, t+j])
// The sentence matrix is column-major so a window is h*d contiguous scalars.
template <class Scalar>
void conv_forward_into(const SentenceMatrix<Scalar>& m, std::span<const Scalar> filters,
                       std::span<const Scalar> biases, int32_t filter_width,
                       std::vector<Scalar>& map_out, int32_t& width_out) {
    const auto filter_count = static_cast<int32_t>(biases.size());
    const int32_t width = m.cols - filter_width + 1;
    if (width < 1)
        throw SentenceTooShort("sentence of " + std::to_string(m.cols) +
                               " columns is shorter than filter width " +
                               std::to_string(filter_width));
    const size_t window = static_cast<size_t>(filter_width) * m.dim;
    map_out.assign(static_cast<size_t>(filter_count) * width, Scalar(0));
    for (int32_t t = 0; t < width; ++t) {
        const Scalar* win = m.column(t);
        for (int32_t f = 0; f < filter_count; ++f) {
            const Scalar* w = filters.data() + static_cast<size_t>(f) * window;
            Scalar acc = biases[static_cast<size_t>(f)];
            for (size_t k = 0; k < window; ++k) acc += w[k] * win[k];
            map_out[static_cast<size_t>(f) * width + t] = acc > Scalar(0) ? acc : Scalar(0);
        }
    }
    width_out = width;
}

template <class Scalar>
std::vector<Scalar> conv_forward(const SentenceMatrix<Scalar>& m, std::span<const Scalar> filters,
                                 std::span<const Scalar> biases, int32_t filter_width,
                                 int32_t* width_out = nullptr) {
    std::vector<Scalar> map;
    int32_t width = 0;
    conv_forward_into(m, filters, biases, filter_width, map, width);
    if (width_out) *width_out = width;
    return map;
}

// Global max per filter; records the argmax position for backprop.
template <class Scalar>
void max_pool_over_time(std::span<const Scalar> map, int32_t filter_count, int32_t width,
                        std::vector<Scalar>& pooled, std::vector<int32_t>& argmax) {
    pooled.resize(static_cast<size_t>(filter_count));
    argmax.resize(static_cast<size_t>(filter_count));
    for (int32_t f = 0; f < filter_count; ++f) {
        const Scalar* row = map.data() + static_cast<size_t>(f) * width;
        int32_t best = 0;
        for (int32_t t = 1; t < width; ++t)
            if (row[t] > row[best]) best = t;
        pooled[static_cast<size_t>(f)] = row[best];
        argmax[static_cast<size_t>(f)] = best;
    }
}

namespace detail {

// y[j] = b[j] + sum_i x[i] * w[i*out+j]   (input-major weight layout)
template <class Scalar>
void dense_forward(std::span<const Scalar> x, std::span<const Scalar> w,
                   std::span<const Scalar> b, std::vector<Scalar>& y) {
    const size_t in = x.size(), out = b.size();
    y.assign(b.begin(), b.end());
    for (size_t i = 0; i < in; ++i) {
        const Scalar xi = x[i];
        if (xi == Scalar(0)) continue;
        const Scalar* row = w.data() + i * out;
        for (size_t j = 0; j < out; ++j) y[j] += xi * row[j];
    }
}

template <class Scalar>
void relu_inplace(std::vector<Scalar>& v) {
    for (auto& x : v)
        if (x < Scalar(0)) x = Scalar(0);
}

template <class Scalar>
void softmax(std::span<const Scalar> logits, std::vector<Scalar>& probs) {
    probs.resize(logits.size());
    Scalar max_logit = logits[0];
    for (Scalar v : logits) max_logit = std::max(max_logit, v);
    double total = 0;
    for (size_t i = 0; i < logits.size(); ++i) {
        double e = std::exp(static_cast<double>(logits[i] - max_logit));
        probs[i] = static_cast<Scalar>(e);
        total += e;
    }
    for (auto& p : probs) p = static_cast<Scalar>(static_cast<double>(p) / total);
}

}  // namespace detail

// Full pipeline: conv -> ReLU -> max-over-time -> fc1 -> ReLU -> dropout
// -> fc2 -> ReLU -> dropout -> linear -> softmax. Train mode applies
// inverted dropout (survivors scaled by 1/(1-rate)); Infer is mask-free.
template <class Scalar>
void forward_into(const CnnModel<Scalar>& model, const SentenceMatrix<Scalar>& m, Mode mode,
                  Rng* dropout_rng, ForwardTrace<Scalar>& trace) {
    const CnnConfig& cfg = model.config;
    trace.input = &m;
    conv_forward_into(m, std::span<const Scalar>(model.conv_w), std::span<const Scalar>(model.conv_b),
                      cfg.filter_width, trace.conv_map, trace.width);
    max_pool_over_time(std::span<const Scalar>(trace.conv_map), cfg.filter_count, trace.width,
                       trace.pooled, trace.argmax);

    const bool dropping = mode == Mode::Train && cfg.dropout_rate > 0.0;
    const double keep = 1.0 - cfg.dropout_rate;

    auto dropout = [&](std::vector<Scalar>& act, std::vector<uint8_t>& mask, Scalar& scale) {
        mask.assign(act.size(), 1);
        scale = Scalar(1);
        if (!dropping) return;
        scale = static_cast<Scalar>(1.0 / keep);
        for (size_t j = 0; j < act.size(); ++j) {
            if (dropout_rng->bernoulli(keep)) {
                act[j] *= scale;
            } else {
                mask[j] = 0;
                act[j] = Scalar(0);
            }
        }
    };

    detail::dense_forward(std::span<const Scalar>(trace.pooled), std::span<const Scalar>(model.fc1_w),
                          std::span<const Scalar>(model.fc1_b), trace.fc1_pre);
    trace.fc1_act = trace.fc1_pre;
    detail::relu_inplace(trace.fc1_act);
    dropout(trace.fc1_act, trace.mask1, trace.keep_scale1);

    detail::dense_forward(std::span<const Scalar>(trace.fc1_act), std::span<const Scalar>(model.fc2_w),
                          std::span<const Scalar>(model.fc2_b), trace.fc2_pre);
    trace.fc2_act = trace.fc2_pre;
    detail::relu_inplace(trace.fc2_act);
    dropout(trace.fc2_act, trace.mask2, trace.keep_scale2);

    detail::dense_forward(std::span<const Scalar>(trace.fc2_act), std::span<const Scalar>(model.out_w),
                          std::span<const Scalar>(model.out_b), trace.logits);
    detail::softmax(std::span<const Scalar>(trace.logits), trace.probs);
}

template <class Scalar>
ForwardTrace<Scalar> forward(const CnnModel<Scalar>& model, const SentenceMatrix<Scalar>& m,
                             Mode mode, uint64_t rng_seed = 0) {
    ForwardTrace<Scalar> trace;
    Rng rng(rng_seed);
    forward_into(model, m, mode, &rng, trace);
    return trace;
}

// Replays a forward pass under externally fixed dropout masks; the
// finite-difference oracle uses this to evaluate the loss at perturbed
// parameters without re-sampling the masks.
template <class Scalar>
void forward_with_masks(const CnnModel<Scalar>& model, const SentenceMatrix<Scalar>& m,
                        const std::vector<uint8_t>& mask1, const std::vector<uint8_t>& mask2,
                        ForwardTrace<Scalar>& trace) {
    const CnnConfig& cfg = model.config;
    trace.input = &m;
    conv_forward_into(m, std::span<const Scalar>(model.conv_w), std::span<const Scalar>(model.conv_b),
                      cfg.filter_width, trace.conv_map, trace.width);
    max_pool_over_time(std::span<const Scalar>(trace.conv_map), cfg.filter_count, trace.width,
                       trace.pooled, trace.argmax);
    const double keep = 1.0 - cfg.dropout_rate;
    const auto scale = static_cast<Scalar>(cfg.dropout_rate > 0 ? 1.0 / keep : 1.0);

    auto apply_mask = [&](std::vector<Scalar>& act, const std::vector<uint8_t>& mask) {
        for (size_t j = 0; j < act.size(); ++j) act[j] = mask[j] ? act[j] * scale : Scalar(0);
    };

    detail::dense_forward(std::span<const Scalar>(trace.pooled), std::span<const Scalar>(model.fc1_w),
                          std::span<const Scalar>(model.fc1_b), trace.fc1_pre);
    trace.fc1_act = trace.fc1_pre;
    detail::relu_inplace(trace.fc1_act);
    apply_mask(trace.fc1_act, mask1);
    trace.mask1 = mask1;
    trace.keep_scale1 = scale;

    detail::dense_forward(std::span<const Scalar>(trace.fc1_act), std::span<const Scalar>(model.fc2_w),
                          std::span<const Scalar>(model.fc2_b), trace.fc2_pre);
    trace.fc2_act = trace.fc2_pre;
    detail::relu_inplace(trace.fc2_act);
    apply_mask(trace.fc2_act, mask2);
    trace.mask2 = mask2;
    trace.keep_scale2 = scale;

    detail::dense_forward(std::span<const Scalar>(trace.fc2_act), std::span<const Scalar>(model.out_w),
                          std::span<const Scalar>(model.out_b), trace.logits);
    detail::softmax(std::span<const Scalar>(trace.logits), trace.probs);
}

// --- loss and gradients -------------------------------------------------------

template <class Scalar>
double regularizer(const CnnModel<Scalar>& model) {
    double sum = 0;
    auto ts = model.tensors();
    for (size_t i = 0; i < ts.size(); i += 2)  // weight matrices only, biases excluded
        for (Scalar w : ts[i]) sum += static_cast<double>(w) * static_cast<double>(w);
    return 0.5 * model.config.l2 * sum;
}

template <class Scalar>
double cross_entropy(const ForwardTrace<Scalar>& trace, int label) {
    const double p = std::max(static_cast<double>(trace.probs[static_cast<size_t>(label)]), 1e-12);
    return -std::log(p);
}

// -log p_label + (lambda/2) * sum of squared weight-matrix entries.
template <class Scalar>
double loss(const ForwardTrace<Scalar>& trace, int label, const CnnModel<Scalar>& model) {
    return cross_entropy(trace, label) + regularizer(model);
}

// Accumulates d(loss)/d(parameter) into `grads` (caller zeroes them).
// Dropout masks and pooling argmaxes come from the trace, never re-sampled.
// The pooled path routes gradient only through each filter's argmax window.
template <class Scalar>
void backward(const ForwardTrace<Scalar>& trace, int label, const CnnModel<Scalar>& model,
              CnnGradients<Scalar>& grads, bool include_regularizer = true) {
    const CnnConfig& cfg = model.config;
    const size_t classes = static_cast<size_t>(cfg.class_count);
    const size_t u1 = static_cast<size_t>(cfg.fc1_units);
    const size_t u2 = static_cast<size_t>(cfg.fc2_units);
    const size_t filters = static_cast<size_t>(cfg.filter_count);

    // softmax + cross-entropy: d logits = probs - one_hot(label)
    std::vector<Scalar> dlogits(trace.probs.begin(), trace.probs.end());
    dlogits[static_cast<size_t>(label)] -= Scalar(1);

    // output layer
    std::vector<Scalar> dfc2_act(u2, Scalar(0));
    for (size_t i = 0; i < u2; ++i) {
        const Scalar act = trace.fc2_act[i];
        Scalar* gw = grads.out_w.data() + i * classes;
        const Scalar* w = model.out_w.data() + i * classes;
        Scalar acc = Scalar(0);
        for (size_t j = 0; j < classes; ++j) {
            gw[j] += act * dlogits[j];
            acc += w[j] * dlogits[j];
        }
        dfc2_act[i] = acc;
    }
    for (size_t j = 0; j < classes; ++j) grads.out_b[j] += dlogits[j];

    // dropout2 + relu2
    std::vector<Scalar> dfc2_pre(u2, Scalar(0));
    for (size_t i = 0; i < u2; ++i)
        if (trace.mask2[i] && trace.fc2_pre[i] > Scalar(0))
            dfc2_pre[i] = dfc2_act[i] * trace.keep_scale2;

    // fc2
    std::vector<Scalar> dfc1_act(u1, Scalar(0));
    for (size_t i = 0; i < u1; ++i) {
        const Scalar act = trace.fc1_act[i];
        Scalar* gw = grads.fc2_w.data() + i * u2;
        const Scalar* w = model.fc2_w.data() + i * u2;
        Scalar acc = Scalar(0);
        for (size_t j = 0; j < u2; ++j) {
            gw[j] += act * dfc2_pre[j];
            acc += w[j] * dfc2_pre[j];
        }
        dfc1_act[i] = acc;
    }
    for (size_t j = 0; j < u2; ++j) grads.fc2_b[j] += dfc2_pre[j];

    // dropout1 + relu1
    std::vector<Scalar> dfc1_pre(u1, Scalar(0));
    for (size_t i = 0; i < u1; ++i)
        if (trace.mask1[i] && trace.fc1_pre[i] > Scalar(0))
            dfc1_pre[i] = dfc1_act[i] * trace.keep_scale1;

    // fc1
    std::vector<Scalar> dpooled(filters, Scalar(0));
    for (size_t f = 0; f < filters; ++f) {
        const Scalar act = trace.pooled[f];
        Scalar* gw = grads.fc1_w.data() + f * u1;
        const Scalar* w = model.fc1_w.data() + f * u1;
        Scalar acc = Scalar(0);
        for (size_t j = 0; j < u1; ++j) {
            gw[j] += act * dfc1_pre[j];
            acc += w[j] * dfc1_pre[j];
        }
        dpooled[f] = acc;
    }
    for (size_t j = 0; j < u1; ++j) grads.fc1_b[j] += dfc1_pre[j];

    // pool + relu + conv. pooled[f] > 0 means the argmax window survived the
    // ReLU, so the gradient flows into that window only. The embeddings are
    // a fixed input representation: no gradient w.r.t. the sentence matrix.
    const size_t window = static_cast<size_t>(cfg.filter_width) * cfg.embedding_dim;
    for (size_t f = 0; f < filters; ++f) {
        if (trace.pooled[f] <= Scalar(0)) continue;
        const Scalar g = dpooled[f];
        if (g == Scalar(0)) continue;
        const Scalar* win = trace.input->column(trace.argmax[f]);
        Scalar* gw = grads.conv_w.data() + f * window;
        for (size_t k = 0; k < window; ++k) gw[k] += g * win[k];
        grads.conv_b[f] += g;
    }

    if (include_regularizer) {
        auto ws = model.tensors();
        auto gs = grads.tensors();
        const auto lambda = static_cast<Scalar>(cfg.l2);
        for (size_t i = 0; i < ws.size(); i += 2)
            for (size_t k = 0; k < ws[i].size(); ++k) gs[i][k] += lambda * ws[i][k];
    }
}

// --- Adam ---------------------------------------------------------------------

template <class Scalar>
struct AdamState {
    int64_t t = 0;
    std::vector<Scalar> m, v;  // flat over all tensors, declaration order
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState zeros_like(const CnnModel<Scalar>& model) {
        AdamState s;
        s.m.assign(model.parameter_count(), Scalar(0));
        s.v.assign(model.parameter_count(), Scalar(0));
        return s;
    }
};

template <class Scalar>
void adam_step(CnnModel<Scalar>& model, CnnGradients<Scalar>& grads, AdamState<Scalar>& state,
               double lr) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    const auto b1 = static_cast<Scalar>(state.beta1);
    const auto b2 = static_cast<Scalar>(state.beta2);
    auto params = model.tensors();
    auto gs = grads.tensors();
    size_t offset = 0;
    for (size_t i = 0; i < params.size(); ++i) {
        Scalar* m = state.m.data() + offset;
        Scalar* v = state.v.data() + offset;
        Scalar* p = params[i].data();
        const Scalar* g = gs[i].data();
        const size_t n = params[i].size();
        for (size_t k = 0; k < n; ++k) {
            m[k] = b1 * m[k] + (Scalar(1) - b1) * g[k];
            v[k] = b2 * v[k] + (Scalar(1) - b2) * g[k] * g[k];
            const double mhat = static_cast<double>(m[k]) / bc1;
            const double vhat = static_cast<double>(v[k]) / bc2;
            p[k] -= static_cast<Scalar>(lr * mhat / (std::sqrt(vhat) + state.epsilon));
        }
        offset += n;
    }
}

// --- training loop --------------------------------------------------------------

struct TrainLogEntry {
    int step;     // 1-based step count at which the batch loss was recorded
    double loss;  // batch mean cross-entropy + l2 term
};

inline std::string loss_trace_csv(const std::vector<TrainLogEntry>& entries) {
    std::ostringstream out;
    out << "step,loss\n";
    char buf[64];
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof buf, "%d,%.17g\n", e.step, e.loss);
        out << buf;
    }
    return out.str();
}

// Core loop over an example fetcher. fetch(i) must return a reference valid
// until the next fetch on the same thread.
template <class Scalar, class Fetch>
CnnModel<Scalar> train_cnn_core(const CnnConfig& config, size_t example_count, Fetch&& fetch,
                                std::span<const int> labels,
                                std::vector<TrainLogEntry>* log = nullptr) {
    if (example_count == 0) throw std::invalid_argument("train_cnn: empty training set");
    CnnModel<Scalar> model = init_model<Scalar>(config);
    if (config.iterations <= 0) return model;

    Rng batch_rng(mix_seed(config.seed, 0xb47c));
    Rng dropout_rng(mix_seed(config.seed, 0xd309));
    auto grads = CnnGradients<Scalar>::zeros_like(model);
    auto state = AdamState<Scalar>::zeros_like(model);
    ForwardTrace<Scalar> trace;

    const int batch = std::max(1, config.batch_size);
    const auto inv_batch = static_cast<Scalar>(1.0 / batch);
    for (int step = 0; step < config.iterations; ++step) {
        grads.zero();
        double batch_ce = 0;
        for (int b = 0; b < batch; ++b) {
            const size_t idx = static_cast<size_t>(batch_rng.below(example_count));
            const SentenceMatrix<Scalar>& m = fetch(idx);
            forward_into(model, m, Mode::Train, &dropout_rng, trace);
            batch_ce += cross_entropy(trace, labels[idx]);
            backward(trace, labels[idx], model, grads, /*include_regularizer=*/false);
        }
        for (auto t : grads.tensors())
            for (auto& g : t) g *= inv_batch;
        {  // l2 term enters once per batch
            auto ws = model.tensors();
            auto gs = grads.tensors();
            const auto lambda = static_cast<Scalar>(config.l2);
            for (size_t i = 0; i < ws.size(); i += 2)
                for (size_t k = 0; k < ws[i].size(); ++k) gs[i][k] += lambda * ws[i][k];
        }
        const double batch_loss = batch_ce / batch + regularizer(model);
        if (!std::isfinite(batch_loss)) throw NonFiniteLoss(step, batch_loss);
        adam_step(model, grads, state, config.learning_rate);
        if (log && ((step + 1) % 100 == 0 || step + 1 == config.iterations))
            log->push_back({step + 1, batch_loss});
    }
    return model;
}

// Spec-shaped overload over prebuilt sentence matrices.
template <class Scalar>
CnnModel<Scalar> train_cnn(const CnnConfig& config, std::span<const SentenceMatrix<Scalar>> inputs,
                           std::span<const int> labels,
                           std::vector<TrainLogEntry>* log = nullptr) {
    return train_cnn_core<Scalar>(
        config, inputs.size(), [&](size_t i) -> const SentenceMatrix<Scalar>& { return inputs[i]; },
        labels, log);
}

// Overload that builds sentence matrices on the fly from encoded sequences,
// which keeps memory flat for large corpora.
template <class Scalar>
CnnModel<Scalar> train_cnn(const CnnConfig& config,
                           std::span<const std::vector<int32_t>> encoded,
                           std::span<const int> labels, const emb::EmbeddingTable& table,
                           int32_t max_len, int32_t min_len,
                           std::vector<TrainLogEntry>* log = nullptr) {
    SentenceMatrix<Scalar> scratch;
    return train_cnn_core<Scalar>(
        config, encoded.size(),
        [&](size_t i) -> const SentenceMatrix<Scalar>& {
            emb::build_sentence_matrix_into(encoded[i], table, max_len, min_len, scratch);
            return scratch;
        },
        labels, log);
}

template <class Scalar>
int predict_class(const CnnModel<Scalar>& model, const SentenceMatrix<Scalar>& m,
                  std::vector<Scalar>* probs_out = nullptr) {
    ForwardTrace<Scalar> trace;
    forward_into(model, m, Mode::Infer, nullptr, trace);
    int best = 0;
    for (size_t j = 1; j < trace.probs.size(); ++j)
        if (trace.probs[j] > trace.probs[static_cast<size_t>(best)]) best = static_cast<int>(j);
    if (probs_out) *probs_out = trace.probs;
    return best;
}

// --- model persistence -----------------------------------------------------------
//
// Self-describing binary: magic, the full config, then the parameter tensors
// in declaration order as little-endian float64. Loading validates tensor
// sizes against the embedded config.

inline constexpr char kModelMagic[8] = {'A', 'D', 'R', 'C', 'M', 'D', 'L', '1'};

template <class Scalar>
void save_model(const CnnModel<Scalar>& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io::FileUnreadable("cannot write model: " + path.string());
    const CnnConfig& c = model.config;
    io::write_bytes(out, kModelMagic, sizeof kModelMagic);
    io::write_i32le(out, c.filter_count);
    io::write_i32le(out, c.filter_width);
    io::write_i32le(out, c.embedding_dim);
    io::write_i32le(out, c.fc1_units);
    io::write_i32le(out, c.fc2_units);
    io::write_i32le(out, c.class_count);
    io::write_i32le(out, c.iterations);
    io::write_i32le(out, c.batch_size);
    io::write_f64le(out, c.dropout_rate);
    io::write_f64le(out, c.l2);
    io::write_f64le(out, c.learning_rate);
    io::write_u64le(out, c.seed);
    for (auto t : model.tensors())
        for (Scalar v : t) io::write_f64le(out, static_cast<double>(v));
    if (!out) throw io::FileUnreadable("write failed: " + path.string());
}

template <class Scalar = double>
CnnModel<Scalar> load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io::FileUnreadable("cannot open model: " + path.string());
    char magic[8];
    io::read_bytes(in, magic, 8, "model magic");
    if (!std::equal(magic, magic + 8, kModelMagic))
        throw io::FileUnreadable("not a model file: " + path.string());
    CnnConfig c;
    c.filter_count = io::read_i32le(in, "filter_count");
    c.filter_width = io::read_i32le(in, "filter_width");
    c.embedding_dim = io::read_i32le(in, "embedding_dim");
    c.fc1_units = io::read_i32le(in, "fc1_units");
    c.fc2_units = io::read_i32le(in, "fc2_units");
    c.class_count = io::read_i32le(in, "class_count");
    c.iterations = io::read_i32le(in, "iterations");
    c.batch_size = io::read_i32le(in, "batch_size");
    c.dropout_rate = io::read_f64le(in, "dropout_rate");
    c.l2 = io::read_f64le(in, "l2");
    c.learning_rate = io::read_f64le(in, "learning_rate");
    c.seed = io::read_u64le(in, "seed");
    if (c.filter_count <= 0 || c.filter_width <= 0 || c.embedding_dim <= 0 || c.fc1_units <= 0 ||
        c.fc2_units <= 0 || c.class_count <= 0)
        throw io::FileUnreadable("model header has non-positive shapes: " + path.string());

    CnnModel<Scalar> model;
    model.config = c;
    const size_t window = static_cast<size_t>(c.filter_width) * c.embedding_dim;
    model.conv_w.resize(static_cast<size_t>(c.filter_count) * window);
    model.conv_b.resize(static_cast<size_t>(c.filter_count));
    model.fc1_w.resize(static_cast<size_t>(c.filter_count) * c.fc1_units);
    model.fc1_b.resize(static_cast<size_t>(c.fc1_units));
    model.fc2_w.resize(static_cast<size_t>(c.fc1_units) * c.fc2_units);
    model.fc2_b.resize(static_cast<size_t>(c.fc2_units));
    model.out_w.resize(static_cast<size_t>(c.fc2_units) * c.class_count);
    model.out_b.resize(static_cast<size_t>(c.class_count));
    for (auto t : model.tensors())
        for (auto& v : t) v = static_cast<Scalar>(io::read_f64le(in, "parameter"));
    char extra;
    if (in.read(&extra, 1) && in.gcount() == 1)
        throw io::FileUnreadable("model file has trailing bytes: " + path.string());
    return model;
}

}  // namespace adrc::nn
