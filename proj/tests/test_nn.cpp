#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "adrc/nn.hpp"
#include "support/gradcheck.hpp"
#include "support/tmpdir.hpp"

using namespace adrc;
using namespace adrc::nn;
using emb::SentenceMatrix;

namespace {

// Column-major matrix from per-word rows: words[i] is column i.
SentenceMatrix<double> matrix_from_words(const std::vector<std::vector<double>>& words,
                                         int pad_to = 0) {
    SentenceMatrix<double> m;
    m.dim = static_cast<int32_t>(words.front().size());
    m.cols = std::max<int32_t>(static_cast<int32_t>(words.size()), pad_to);
    m.data.assign(static_cast<size_t>(m.cols) * m.dim, 0.0);
    m.pad.assign(static_cast<size_t>(m.cols), 0);
    for (size_t c = 0; c < words.size(); ++c)
        for (int32_t k = 0; k < m.dim; ++k) m.data[c * m.dim + static_cast<size_t>(k)] = words[c][k];
    for (size_t c = words.size(); c < static_cast<size_t>(m.cols); ++c) m.pad[c] = 1;
    return m;
}

SentenceMatrix<double> random_matrix(int dim, int cols, uint64_t seed) {
    SentenceMatrix<double> m;
    m.dim = dim;
    m.cols = cols;
    m.data.resize(static_cast<size_t>(dim) * cols);
    m.pad.assign(static_cast<size_t>(cols), 0);
    Rng rng(seed);
    for (auto& v : m.data) v = rng.uniform(-1.0, 1.0);
    return m;
}

CnnConfig tiny_config(uint64_t seed) {
    CnnConfig cfg;
    cfg.filter_count = 3;
    cfg.filter_width = 2;
    cfg.embedding_dim = 4;
    cfg.fc1_units = 5;
    cfg.fc2_units = 4;
    cfg.class_count = 3;
    cfg.dropout_rate = 0.2;
    cfg.l2 = 1e-2;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("conv oracle: all-ones filter sums the window", "[nn]") {
    auto m = matrix_from_words({{1, 0}, {0, 1}, {1, 1}});
    std::vector<double> filter(4, 1.0);  // h=2, d=2
    std::vector<double> bias = {0.0};
    int32_t width = 0;
    auto map = conv_forward<double>(m, filter, bias, 2, &width);
    REQUIRE(width == 2);
    CHECK(map[0] == Catch::Approx(2.0));
    CHECK(map[1] == Catch::Approx(3.0));
}

TEST_CASE("conv: zero filter gives zero map, negative bias clamps", "[nn]") {
    auto m = matrix_from_words({{0.5, 0.2}, {0.1, 0.9}, {0.3, 0.3}});
    std::vector<double> zero(4, 0.0), ones(4, 1.0);
    auto map = conv_forward<double>(m, zero, std::vector<double>{0.0}, 2);
    for (double v : map) CHECK(v == 0.0);
    map = conv_forward<double>(m, ones, std::vector<double>{-10.0}, 2);
    for (double v : map) CHECK(v == 0.0);  // ReLU clamps bias-dominated sums
}

TEST_CASE("conv against a direct-summation oracle", "[nn]") {
    const int d = 3, h = 2, F = 4, n = 6;
    auto m = random_matrix(d, n, 41);
    Rng rng(42);
    std::vector<double> filters(static_cast<size_t>(F) * h * d);
    std::vector<double> biases(F);
    for (auto& v : filters) v = rng.uniform(-1, 1);
    for (auto& v : biases) v = rng.uniform(-0.5, 0.5);
    int32_t width = 0;
    auto map = conv_forward<double>(m, filters, biases, h, &width);
    REQUIRE(width == n - h + 1);
    for (int f = 0; f < F; ++f)
        for (int t = 0; t < width; ++t) {
            double acc = biases[static_cast<size_t>(f)];
            for (int j = 0; j < h; ++j)
                for (int k = 0; k < d; ++k)
                    acc += filters[static_cast<size_t>(f) * h * d + static_cast<size_t>(j) * d +
                                   static_cast<size_t>(k)] *
                           m.data[static_cast<size_t>(t + j) * d + static_cast<size_t>(k)];
            const double expected = acc > 0 ? acc : 0;
            CHECK(map[static_cast<size_t>(f) * width + static_cast<size_t>(t)] ==
                  Catch::Approx(expected).margin(1e-12));
        }
}

TEST_CASE("conv rejects sentences shorter than the filter", "[nn]") {
    auto m = matrix_from_words({{1, 0}});
    std::vector<double> filter(4, 1.0);
    CHECK_THROWS_AS(conv_forward<double>(m, filter, std::vector<double>{0.0}, 2), SentenceTooShort);
}

TEST_CASE("max pool over time", "[nn]") {
    std::vector<double> pooled;
    std::vector<int32_t> argmax;
    max_pool_over_time<double>(std::vector<double>{1, 5, 2}, 1, 3, pooled, argmax);
    CHECK(pooled == std::vector<double>{5});
    CHECK(argmax == std::vector<int32_t>{1});

    std::vector<double> constant(6, 3.25);
    max_pool_over_time<double>(constant, 2, 3, pooled, argmax);
    CHECK(pooled == std::vector<double>{3.25, 3.25});

    Rng rng(7);
    std::vector<double> map(4 * 7);
    for (auto& v : map) v = rng.uniform(-2, 2);
    max_pool_over_time<double>(map, 4, 7, pooled, argmax);
    for (int f = 0; f < 4; ++f) {
        double best = map[static_cast<size_t>(f) * 7];
        for (int t = 1; t < 7; ++t) best = std::max(best, map[static_cast<size_t>(f) * 7 + t]);
        CHECK(pooled[static_cast<size_t>(f)] == best);
        CHECK(map[static_cast<size_t>(f) * 7 + argmax[static_cast<size_t>(f)]] == best);
    }
}

TEST_CASE("inference is deterministic and mask-free", "[nn]") {
    auto cfg = tiny_config(5);
    auto model = init_model<double>(cfg);
    auto m = random_matrix(cfg.embedding_dim, 6, 8);
    auto a = forward(model, m, Mode::Infer);
    auto b = forward(model, m, Mode::Infer);
    CHECK(a.probs == b.probs);
}

TEST_CASE("zero dropout in train mode equals inference", "[nn]") {
    auto cfg = tiny_config(6);
    cfg.dropout_rate = 0.0;
    auto model = init_model<double>(cfg);
    auto m = random_matrix(cfg.embedding_dim, 5, 9);
    auto train_trace = forward(model, m, Mode::Train, 1234);
    auto infer_trace = forward(model, m, Mode::Infer);
    CHECK(train_trace.probs == infer_trace.probs);
}

TEST_CASE("softmax output is a probability vector", "[nn]") {
    for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        auto cfg = tiny_config(seed);
        auto model = init_model<double>(cfg);
        auto m = random_matrix(cfg.embedding_dim, 4 + static_cast<int>(seed), seed * 31);
        auto trace = forward(model, m, Mode::Train, seed);
        double total = 0;
        for (double p : trace.probs) {
            CHECK(p >= 0.0);
            total += p;
        }
        CHECK(total == Catch::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("loss of a perfect prediction with zero weights is zero", "[nn]") {
    auto cfg = tiny_config(1);
    CnnModel<double> model = init_model<double>(cfg);
    for (auto t : model.tensors()) std::fill(t.begin(), t.end(), 0.0);
    ForwardTrace<double> trace;
    trace.probs = {1.0, 0.0, 0.0};
    CHECK(loss(trace, 0, model) == 0.0);

    // single weight w=2 under lambda=1e-2 contributes (lambda/2)*4 = 0.02
    model.fc2_w[0] = 2.0;
    CHECK(loss(trace, 0, model) == Catch::Approx(0.02));
    // regularized loss strictly exceeds the unregularized one when any weight is nonzero
    CnnModel<double> reg_free = model;
    reg_free.config.l2 = 0.0;
    CHECK(loss(trace, 0, model) > loss(trace, 0, reg_free));
}

TEST_CASE("output layer gradient is the softmax-minus-onehot outer product", "[nn]") {
    auto cfg = tiny_config(11);
    cfg.dropout_rate = 0.0;
    cfg.l2 = 0.0;
    auto model = init_model<double>(cfg);
    auto m = random_matrix(cfg.embedding_dim, 5, 12);
    auto trace = forward(model, m, Mode::Train, 0);
    auto grads = CnnGradients<double>::zeros_like(model);
    const int label = 1;
    backward(trace, label, model, grads);
    for (int i = 0; i < cfg.fc2_units; ++i)
        for (int j = 0; j < cfg.class_count; ++j) {
            const double expected =
                trace.fc2_act[static_cast<size_t>(i)] *
                (trace.probs[static_cast<size_t>(j)] - (j == label ? 1.0 : 0.0));
            CHECK(grads.out_w[static_cast<size_t>(i) * cfg.class_count + static_cast<size_t>(j)] ==
                  Catch::Approx(expected).margin(1e-12));
        }
    for (int j = 0; j < cfg.class_count; ++j)
        CHECK(grads.out_b[static_cast<size_t>(j)] ==
              Catch::Approx(trace.probs[static_cast<size_t>(j)] - (j == label ? 1.0 : 0.0))
                  .margin(1e-12));
}

TEST_CASE("max-pool routes gradient only through the argmax", "[nn]") {
    auto cfg = tiny_config(13);
    cfg.dropout_rate = 0.0;
    cfg.l2 = 0.0;
    auto model = init_model<double>(cfg);
    auto m = random_matrix(cfg.embedding_dim, 6, 14);
    auto trace = forward(model, m, Mode::Train, 0);
    auto grads = CnnGradients<double>::zeros_like(model);
    backward(trace, 0, model, grads);
    // The conv filter gradient must be expressible as g_f * argmax-window.
    const size_t window = static_cast<size_t>(cfg.filter_width) * cfg.embedding_dim;
    for (int f = 0; f < cfg.filter_count; ++f) {
        const double* win = m.column(trace.argmax[static_cast<size_t>(f)]);
        const double gb = grads.conv_b[static_cast<size_t>(f)];
        for (size_t k = 0; k < window; ++k)
            CHECK(grads.conv_w[static_cast<size_t>(f) * window + k] ==
                  Catch::Approx(gb * win[k]).margin(1e-12));
    }
}

TEST_CASE("analytic gradients match central finite differences", "[nn]") {
    auto cfg = tiny_config(0x9e3779b9);
    auto model = init_model<double>(cfg);
    auto m = random_matrix(cfg.embedding_dim, 6, 0xabcdef);
    auto result = gradcheck::run(model, m, 2, /*mask_seed=*/99);
    INFO("checked " << result.checked << " params, max rel err " << result.max_rel_err);
    CHECK(result.failures.empty());
    CHECK(result.checked == model.parameter_count());
}

TEST_CASE("adam first step matches the hand recurrence", "[nn]") {
    auto cfg = tiny_config(3);
    auto model = init_model<double>(cfg);
    for (auto t : model.tensors()) std::fill(t.begin(), t.end(), 1.0);
    auto grads = CnnGradients<double>::zeros_like(model);
    for (auto t : grads.tensors()) std::fill(t.begin(), t.end(), 1.0);
    auto state = AdamState<double>::zeros_like(model);
    adam_step(model, grads, state, 0.1);
    // m=0.1 -> mhat=1; v=0.001 -> vhat=1; theta = 1 - 0.1/(1+1e-8)
    const double expected = 1.0 - 0.1 * 1.0 / (std::sqrt(1.0) + 1e-8);
    for (auto t : model.tensors())
        for (double v : t) {
            REQUIRE(std::abs(v - expected) < 1e-9);
            REQUIRE(std::abs(v - 0.9) < 1e-7);
        }
    CHECK(state.t == 1);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged", "[nn]") {
    auto cfg = tiny_config(4);
    auto model = init_model<double>(cfg);
    auto before = model.conv_w;
    auto grads = CnnGradients<double>::zeros_like(model);
    auto state = AdamState<double>::zeros_like(model);
    adam_step(model, grads, state, 0.1);
    CHECK(model.conv_w == before);
}

TEST_CASE("adam: constant positive gradient decreases the parameter monotonically", "[nn]") {
    auto cfg = tiny_config(5);
    auto model = init_model<double>(cfg);
    for (auto t : model.tensors()) std::fill(t.begin(), t.end(), 1.0);
    auto grads = CnnGradients<double>::zeros_like(model);
    for (auto t : grads.tensors()) std::fill(t.begin(), t.end(), 1.0);
    auto state = AdamState<double>::zeros_like(model);
    double prev = 1.0;
    for (int s = 0; s < 2; ++s) {
        adam_step(model, grads, state, 0.1);
        CHECK(model.conv_w[0] < prev);
        prev = model.conv_w[0];
    }
}

namespace {

// Tiny planted-keyword task: class decided by which keyword embedding
// appears; everything else is shared noise.
struct ToyTask {
    emb::EmbeddingTable table;
    std::vector<SentenceMatrix<double>> inputs;
    std::vector<int> labels;
};

ToyTask make_toy_task(int examples, uint64_t seed) {
    ToyTask toy;
    const int32_t vocab = 12, dim = 8;
    toy.table.dim = dim;
    toy.table.vectors.resize(static_cast<size_t>(vocab) * dim);
    Rng rng(seed);
    for (auto& v : toy.table.vectors) v = rng.uniform(-0.8, 0.8);
    for (int i = 0; i < examples; ++i) {
        const int label = static_cast<int>(rng.below(2));
        std::vector<int32_t> encoded;
        const int len = 4 + static_cast<int>(rng.below(3));
        for (int t = 0; t < len; ++t)
            encoded.push_back(2 + static_cast<int32_t>(rng.below(vocab - 2)));
        encoded[rng.below(encoded.size())] = label;  // word 0 or 1 is the keyword
        toy.inputs.push_back(emb::build_sentence_matrix(encoded, toy.table, 20, 4));
        toy.labels.push_back(label);
    }
    return toy;
}

}  // namespace

TEST_CASE("zero iterations return the initialized model", "[nn]") {
    auto toy = make_toy_task(10, 21);
    CnnConfig cfg = tiny_config(77);
    cfg.embedding_dim = 8;
    cfg.class_count = 2;
    cfg.iterations = 0;
    auto trained = train_cnn<double>(cfg, toy.inputs, toy.labels);
    auto fresh = init_model<double>(cfg);
    CHECK(trained.conv_w == fresh.conv_w);
    CHECK(trained.out_w == fresh.out_w);
}

TEST_CASE("planted keyword task trains to high accuracy quickly", "[nn]") {
    auto toy = make_toy_task(60, 22);
    CnnConfig cfg;
    cfg.filter_count = 8;
    cfg.filter_width = 2;
    cfg.embedding_dim = 8;
    cfg.fc1_units = 16;
    cfg.fc2_units = 8;
    cfg.class_count = 2;
    cfg.dropout_rate = 0.1;
    cfg.l2 = 1e-3;
    cfg.learning_rate = 5e-3;
    cfg.iterations = 500;
    cfg.batch_size = 16;
    cfg.seed = 23;
    std::vector<TrainLogEntry> log;
    auto model = train_cnn<double>(cfg, toy.inputs, toy.labels, &log);
    int correct = 0;
    for (size_t i = 0; i < toy.inputs.size(); ++i)
        if (predict_class(model, toy.inputs[i]) == toy.labels[i]) ++correct;
    CHECK(static_cast<double>(correct) / toy.inputs.size() >= 0.99);
    // loss trace was recorded every 100 steps
    REQUIRE(log.size() == 5);
    CHECK(log.front().step == 100);
    CHECK(log.back().step == 500);
    CHECK(std::isfinite(log.back().loss));
}

TEST_CASE("training is bit-deterministic given the seed", "[nn]") {
    auto toy = make_toy_task(20, 31);
    CnnConfig cfg = tiny_config(91);
    cfg.embedding_dim = 8;
    cfg.class_count = 2;
    cfg.iterations = 40;
    cfg.batch_size = 8;
    auto a = train_cnn<double>(cfg, toy.inputs, toy.labels);
    auto b = train_cnn<double>(cfg, toy.inputs, toy.labels);
    CHECK(a.conv_w == b.conv_w);
    CHECK(a.fc1_w == b.fc1_w);
    CHECK(a.fc2_w == b.fc2_w);
    CHECK(a.out_w == b.out_w);
    CHECK(a.conv_b == b.conv_b);
}

TEST_CASE("training throws NonFiniteLoss when the loss explodes", "[nn]") {
    auto toy = make_toy_task(10, 33);
    CnnConfig cfg = tiny_config(17);
    cfg.embedding_dim = 8;
    cfg.class_count = 2;
    cfg.iterations = 50;
    cfg.batch_size = 4;
    cfg.learning_rate = 1e200;  // guaranteed overflow within a few steps
    CHECK_THROWS_AS(train_cnn<double>(cfg, toy.inputs, toy.labels), NonFiniteLoss);
}

TEST_CASE("padding columns do not change inference when a real window dominates", "[nn]") {
    auto cfg = tiny_config(51);
    cfg.dropout_rate = 0.0;
    auto model = init_model<double>(cfg);
    // All-positive filters over all-positive words: every fully-real window
    // strictly beats any window that overlaps zero padding.
    for (auto& w : model.conv_w) w = 1.0;
    for (auto& b : model.conv_b) b = -0.05;  // all-pad windows produce relu(bias) = 0
    std::vector<std::vector<double>> words = {{2, 2, 2, 2}, {2, 2, 2, 2}, {1, 2, 3, 4}};
    auto bare = matrix_from_words(words);
    auto padded = matrix_from_words(words, 8);
    auto a = forward(model, bare, Mode::Infer);
    auto b = forward(model, padded, Mode::Infer);
    REQUIRE(a.pooled == b.pooled);
    CHECK(a.probs == b.probs);
}

TEST_CASE("model files round-trip bit-exactly", "[nn]") {
    auto cfg = tiny_config(61);
    cfg.iterations = 123;  // arbitrary config payload
    auto model = init_model<double>(cfg);
    TempDir dir;
    save_model(model, dir / "m.bin");
    auto loaded = load_model<double>(dir / "m.bin");
    CHECK(loaded.config == model.config);
    CHECK(loaded.conv_w == model.conv_w);
    CHECK(loaded.fc1_w == model.fc1_w);
    CHECK(loaded.fc2_w == model.fc2_w);
    CHECK(loaded.out_w == model.out_w);
    CHECK(loaded.out_b == model.out_b);
    CHECK_THROWS_AS(load_model<double>(dir / "missing.bin"), io::FileUnreadable);
}

TEST_CASE("loss trace CSV format", "[nn]") {
    std::vector<TrainLogEntry> log = {{100, 0.5}, {200, 0.25}};
    CHECK(loss_trace_csv(log) == "step,loss\n100,0.5\n200,0.25\n");
}
