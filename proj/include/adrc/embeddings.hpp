#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "adrc/io.hpp"
#include "adrc/random.hpp"
#include "adrc/text.hpp"

// Skipgram word embeddings trained with negative sampling, and the
// d x N sentence matrices consumed by the CNN.

namespace adrc::emb {

struct EmptyCorpus : std::runtime_error {
    explicit EmptyCorpus(const std::string& what) : std::runtime_error(what) {}
};
struct EmptyEncoding : std::runtime_error {
    explicit EmptyEncoding(const std::string& what) : std::runtime_error(what) {}
};

struct SkipgramConfig {
    int window = 5;
    int min_count = 5;
    int dim = 300;
    int negatives = 5;
    int epochs = 5;
    double initial_lr = 0.025;
    double noise_power = 0.75;
    uint64_t seed = 1;
};

struct EmbeddingTable {
    int32_t dim = 0;
    std::vector<double> vectors;          // V x d, row-major
    std::vector<double> context_vectors;  // V x d, training-time only

    int32_t vocab_size() const {
        return dim == 0 ? 0 : static_cast<int32_t>(vectors.size() / static_cast<size_t>(dim));
    }
    const double* row(int32_t word) const {
        return vectors.data() + static_cast<size_t>(word) * dim;
    }
    double* row(int32_t word) { return vectors.data() + static_cast<size_t>(word) * dim; }
    const double* context_row(int32_t word) const {
        return context_vectors.data() + static_cast<size_t>(word) * dim;
    }
    double* context_row(int32_t word) {
        return context_vectors.data() + static_cast<size_t>(word) * dim;
    }
};

inline double cosine(const EmbeddingTable& table, int32_t a, int32_t b) {
    double dot = 0, na = 0, nb = 0;
    const double* va = table.row(a);
    const double* vb = table.row(b);
    for (int32_t k = 0; k < table.dim; ++k) {
        dot += va[k] * vb[k];
        na += va[k] * va[k];
        nb += vb[k] * vb[k];
    }
    double denom = std::sqrt(na) * std::sqrt(nb);
    return denom == 0 ? 0.0 : dot / denom;
}

// --- skipgram pair generation ----------------------------------------------

// For every position t a window size b is drawn uniformly from 1..window,
// then (x_t, x_{t+j}) is emitted for all in-bounds j in [-b, b], j != 0.
// Sequences shorter than two tokens draw nothing and emit nothing.
template <class Emit>
void for_each_pair(std::span<const int32_t> encoded, int window, Rng& rng, Emit&& emit) {
    const auto n = static_cast<ptrdiff_t>(encoded.size());
    if (n < 2) return;
    for (ptrdiff_t t = 0; t < n; ++t) {
        const auto b = static_cast<ptrdiff_t>(rng.uniform_int(1, window));
        for (ptrdiff_t j = -b; j <= b; ++j) {
            if (j == 0) continue;
            ptrdiff_t s = t + j;
            if (s < 0 || s >= n) continue;
            emit(encoded[t], encoded[s]);
        }
    }
}

inline std::vector<std::pair<int32_t, int32_t>> generate_pairs(std::span<const int32_t> encoded,
                                                               int window, uint64_t seed) {
    Rng rng(seed);
    std::vector<std::pair<int32_t, int32_t>> pairs;
    for_each_pair(encoded, window, rng, [&](int32_t c, int32_t o) { pairs.emplace_back(c, o); });
    return pairs;
}

// Fixed window size everywhere; used by tests to pin the pair set.
inline std::vector<std::pair<int32_t, int32_t>> generate_pairs_fixed(
    std::span<const int32_t> encoded, int b) {
    std::vector<std::pair<int32_t, int32_t>> pairs;
    const auto n = static_cast<ptrdiff_t>(encoded.size());
    if (n < 2) return pairs;
    for (ptrdiff_t t = 0; t < n; ++t)
        for (ptrdiff_t j = -b; j <= b; ++j) {
            if (j == 0) continue;
            ptrdiff_t s = t + j;
            if (s >= 0 && s < n) pairs.emplace_back(encoded[t], encoded[s]);
        }
    return pairs;
}

// --- negative-sampling objective -------------------------------------------

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Noise word sampler over the unigram^power distribution.
class UnigramSampler {
  public:
    UnigramSampler(std::span<const int64_t> frequencies, double power) {
        cumulative_.reserve(frequencies.size());
        double total = 0;
        for (int64_t f : frequencies) {
            total += f > 0 ? std::pow(static_cast<double>(f), power) : 0.0;
            cumulative_.push_back(total);
        }
        total_ = total;
    }

    int32_t sample(Rng& rng) const {
        double r = rng.uniform() * total_;
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), r);
        if (it == cumulative_.end()) --it;
        return static_cast<int32_t>(it - cumulative_.begin());
    }

    bool empty() const { return total_ <= 0; }

  private:
    std::vector<double> cumulative_;
    double total_ = 0;
};

}  // namespace detail

// Loss of one (center, context) pair with the given negatives:
//   -log s(u_o . v_c) - sum_i log s(-u_ni . v_c)
inline double sgns_pair_loss(const EmbeddingTable& table, int32_t center, int32_t context,
                             std::span<const int32_t> negatives) {
    const double* vc = table.row(center);
    auto dot_ctx = [&](int32_t word) {
        const double* u = table.context_row(word);
        double dot = 0;
        for (int32_t k = 0; k < table.dim; ++k) dot += u[k] * vc[k];
        return dot;
    };
    double loss = -std::log(std::max(detail::sigmoid(dot_ctx(context)), 1e-12));
    for (int32_t neg : negatives)
        loss += -std::log(std::max(detail::sigmoid(-dot_ctx(neg)), 1e-12));
    return loss;
}

// One SGD step on the pair loss above. Gradients:
//   positive: g = s(u_o.v_c) - 1, negative: g = s(u_n.v_c)
//   u <- u - lr * g * v_c,  v_c <- v_c - lr * sum g * u
inline void sgns_update(EmbeddingTable& table, int32_t center, int32_t context,
                        std::span<const int32_t> negatives, double lr,
                        std::vector<double>& center_grad_scratch) {
    const int32_t d = table.dim;
    center_grad_scratch.assign(static_cast<size_t>(d), 0.0);
    double* vc = table.row(center);

    auto step_output = [&](int32_t word, double label) {
        double* u = table.context_row(word);
        double dot = 0;
        for (int32_t k = 0; k < d; ++k) dot += u[k] * vc[k];
        const double g = detail::sigmoid(dot) - label;
        for (int32_t k = 0; k < d; ++k) {
            center_grad_scratch[k] += g * u[k];
            u[k] -= lr * g * vc[k];
        }
    };
    step_output(context, 1.0);
    for (int32_t neg : negatives) step_output(neg, 0.0);
    for (int32_t k = 0; k < d; ++k) vc[k] -= lr * center_grad_scratch[k];
}

// --- training ----------------------------------------------------------------

// Trains skipgram embeddings over encoded sequences. Deterministic for a
// fixed seed in single-worker execution: the window draws, negative draws
// and initialization each use their own derived stream, and the learning
// rate decays linearly from initial_lr to initial_lr/100 over the exact
// number of (epoch, pair) steps, counted in a first pass over the window
// stream.
inline EmbeddingTable train_skipgram(const std::vector<std::vector<int32_t>>& corpus,
                                     const SkipgramConfig& config, int32_t vocab_size) {
    if (corpus.empty()) throw EmptyCorpus("skipgram: empty corpus");
    if (vocab_size <= 0) throw EmptyCorpus("skipgram: empty vocabulary");

    // Unigram frequencies over the training corpus itself.
    std::vector<int64_t> frequencies(static_cast<size_t>(vocab_size), 0);
    size_t total_tokens = 0;
    for (const auto& seq : corpus)
        for (int32_t w : seq) {
            if (w < 0 || w >= vocab_size)
                throw std::out_of_range("skipgram: token index " + std::to_string(w) +
                                        " outside vocabulary");
            ++frequencies[static_cast<size_t>(w)];
            ++total_tokens;
        }
    if (total_tokens == 0) throw EmptyCorpus("skipgram: corpus has no tokens");

    EmbeddingTable table;
    table.dim = config.dim;
    table.vectors.resize(static_cast<size_t>(vocab_size) * config.dim);
    table.context_vectors.assign(static_cast<size_t>(vocab_size) * config.dim, 0.0);
    {
        Rng init_rng(mix_seed(config.seed, 0x1217));
        const double half = 0.5 / config.dim;
        for (auto& x : table.vectors) x = init_rng.uniform(-half, half);
    }

    // Pass 1: count pairs so the per-step linear decay has an exact horizon.
    uint64_t total_steps = 0;
    {
        Rng window_rng(mix_seed(config.seed, 0x77a9));
        for (int epoch = 0; epoch < config.epochs; ++epoch)
            for (const auto& seq : corpus)
                for_each_pair(seq, config.window, window_rng,
                              [&](int32_t, int32_t) { ++total_steps; });
    }
    if (total_steps == 0) return table;  // nothing to train on

    detail::UnigramSampler sampler(frequencies, config.noise_power);
    Rng window_rng(mix_seed(config.seed, 0x77a9));  // same stream as the counting pass
    Rng noise_rng(mix_seed(config.seed, 0x5eed));

    std::vector<double> grad_scratch;
    std::vector<int32_t> negatives;
    uint64_t step = 0;
    const double lr0 = config.initial_lr;
    const double denom = total_steps > 1 ? static_cast<double>(total_steps - 1) : 1.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (const auto& seq : corpus) {
            for_each_pair(seq, config.window, window_rng, [&](int32_t center, int32_t context) {
                const double lr = lr0 * (1.0 - 0.99 * (static_cast<double>(step) / denom));
                negatives.clear();
                for (int i = 0; i < config.negatives; ++i) {
                    int32_t neg = sampler.sample(noise_rng);
                    if (neg == context) continue;  // skip draws hitting the true context
                    negatives.push_back(neg);
                }
                sgns_update(table, center, context, negatives, lr, grad_scratch);
                ++step;
            });
        }
    }
    return table;
}

// --- sentence matrices ---------------------------------------------------------

template <class Scalar>
struct SentenceMatrix {
    int32_t dim = 0;
    int32_t cols = 0;
    std::vector<Scalar> data;      // column-major: data[c*dim + k]
    std::vector<uint8_t> pad;      // 1 marks a zero padding column

    const Scalar* column(int32_t c) const { return data.data() + static_cast<size_t>(c) * dim; }
};

// Truncates to max_len, right-pads with zero columns up to min_len.
template <class Scalar>
void build_sentence_matrix_into(std::span<const int32_t> encoded, const EmbeddingTable& table,
                                int32_t max_len, int32_t min_len, SentenceMatrix<Scalar>& out) {
    if (encoded.empty()) throw EmptyEncoding("cannot build a sentence matrix from no tokens");
    const auto used = static_cast<int32_t>(std::min<size_t>(encoded.size(), static_cast<size_t>(max_len)));
    const int32_t cols = std::max(used, min_len);
    out.dim = table.dim;
    out.cols = cols;
    out.data.assign(static_cast<size_t>(cols) * table.dim, Scalar(0));
    out.pad.assign(static_cast<size_t>(cols), 0);
    for (int32_t c = 0; c < used; ++c) {
        const double* src = table.row(encoded[static_cast<size_t>(c)]);
        Scalar* dst = out.data.data() + static_cast<size_t>(c) * table.dim;
        for (int32_t k = 0; k < table.dim; ++k) dst[k] = static_cast<Scalar>(src[k]);
    }
    for (int32_t c = used; c < cols; ++c) out.pad[static_cast<size_t>(c)] = 1;
}

template <class Scalar = double>
SentenceMatrix<Scalar> build_sentence_matrix(std::span<const int32_t> encoded,
                                             const EmbeddingTable& table, int32_t max_len,
                                             int32_t min_len) {
    SentenceMatrix<Scalar> m;
    build_sentence_matrix_into(encoded, table, max_len, min_len, m);
    return m;
}

// --- persistence ----------------------------------------------------------------
//
// Binary layout: magic "ADRCEMB1", u32 vocab size, u32 dim, u16 endian tag
// (1 = little), then V*d float32 little-endian. Context vectors are a
// training artifact and are not persisted.

inline constexpr char kEmbeddingMagic[8] = {'A', 'D', 'R', 'C', 'E', 'M', 'B', '1'};

inline void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io::FileUnreadable("cannot write embeddings: " + path.string());
    io::write_bytes(out, kEmbeddingMagic, sizeof kEmbeddingMagic);
    io::write_u32le(out, static_cast<uint32_t>(table.vocab_size()));
    io::write_u32le(out, static_cast<uint32_t>(table.dim));
    io::write_u16le(out, 1);
    for (double v : table.vectors) io::write_f32le(out, static_cast<float>(v));
    if (!out) throw io::FileUnreadable("write failed: " + path.string());
}

inline EmbeddingTable load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io::FileUnreadable("cannot open embeddings: " + path.string());
    char magic[8];
    io::read_bytes(in, magic, 8, "embedding magic");
    if (!std::equal(magic, magic + 8, kEmbeddingMagic))
        throw io::FileUnreadable("not an embedding file: " + path.string());
    const auto vocab = io::read_u32le(in, "vocab size");
    const auto dim = io::read_u32le(in, "dim");
    if (io::read_u16le(in, "endian tag") != 1)
        throw io::FileUnreadable("unsupported endianness tag in " + path.string());
    EmbeddingTable table;
    table.dim = static_cast<int32_t>(dim);
    table.vectors.resize(static_cast<size_t>(vocab) * dim);
    for (auto& v : table.vectors) v = static_cast<double>(io::read_f32le(in, "embedding value"));
    return table;
}

// Text export for inspection: one line per word, space-separated floats.
inline void export_embeddings_text(const EmbeddingTable& table, const text::Vocabulary& vocab,
                                   const std::filesystem::path& path) {
    std::ostringstream out;
    out.precision(8);
    for (int32_t i = 0; i < table.vocab_size(); ++i) {
        out << vocab.words[static_cast<size_t>(i)];
        const double* v = table.row(i);
        for (int32_t k = 0; k < table.dim; ++k) out << ' ' << v[k];
        out << '\n';
    }
    io::write_file(path, out.str());
}

}  // namespace adrc::emb
