#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>

#include "adrc/embeddings.hpp"
#include "support/tmpdir.hpp"

using namespace adrc;
using namespace adrc::emb;

TEST_CASE("single-token sequences yield no pairs", "[embeddings]") {
    std::vector<int32_t> encoded = {3};
    CHECK(generate_pairs(encoded, 5, 1).empty());
    CHECK(generate_pairs(std::vector<int32_t>{}, 5, 1).empty());
}

TEST_CASE("two tokens with window 1 pair both ways", "[embeddings]") {
    std::vector<int32_t> encoded = {1, 2};
    auto pairs = generate_pairs(encoded, 1, 7);  // b is forced to 1
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0] == std::pair<int32_t, int32_t>{1, 2});
    CHECK(pairs[1] == std::pair<int32_t, int32_t>{2, 1});
}

TEST_CASE("fixed window 2 over four tokens gives the 10 in-bounds pairs", "[embeddings]") {
    std::vector<int32_t> encoded = {1, 2, 3, 4};
    auto pairs = generate_pairs_fixed(encoded, 2);
    const std::vector<std::pair<int32_t, int32_t>> expected = {
        {1, 2}, {1, 3}, {2, 1}, {2, 3}, {2, 4}, {3, 1}, {3, 2}, {3, 4}, {4, 2}, {4, 3}};
    CHECK(pairs == expected);
}

TEST_CASE("pair positions stay within the window bound", "[embeddings]") {
    // Token value == position, so the window bound is checkable on values.
    std::vector<int32_t> encoded(50);
    for (int i = 0; i < 50; ++i) encoded[static_cast<size_t>(i)] = i;
    for (int window : {1, 3, 5}) {
        auto pairs = generate_pairs(encoded, window, 123);
        REQUIRE(!pairs.empty());
        for (auto [a, b] : pairs) {
            const int dist = std::abs(a - b);
            CHECK(dist >= 1);
            CHECK(dist <= window);
        }
    }
}

namespace {

EmbeddingTable small_table(int32_t vocab, int32_t dim, uint64_t seed) {
    EmbeddingTable t;
    t.dim = dim;
    t.vectors.resize(static_cast<size_t>(vocab) * dim);
    t.context_vectors.resize(static_cast<size_t>(vocab) * dim);
    Rng rng(seed);
    for (auto& v : t.vectors) v = rng.uniform(-0.3, 0.3);
    for (auto& v : t.context_vectors) v = rng.uniform(-0.3, 0.3);
    return t;
}

}  // namespace

TEST_CASE("one SGD step lowers the pair loss", "[embeddings]") {
    auto table = small_table(10, 8, 5);
    const std::vector<int32_t> negatives = {4, 7, 2};
    const double before = sgns_pair_loss(table, 0, 1, negatives);
    std::vector<double> scratch;
    sgns_update(table, 0, 1, negatives, 0.05, scratch);
    const double after = sgns_pair_loss(table, 0, 1, negatives);
    CHECK(after < before);
}

TEST_CASE("training with an empty pair stream leaves vectors at init", "[embeddings]") {
    // All sequences are singletons, so no pairs exist at any window size.
    std::vector<std::vector<int32_t>> corpus = {{0}, {1}, {2}};
    SkipgramConfig cfg;
    cfg.dim = 6;
    cfg.window = 5;
    cfg.epochs = 5;
    cfg.seed = 11;
    auto trained = train_skipgram(corpus, cfg, 3);
    cfg.epochs = 0;  // zero epochs trivially performs no updates
    auto init = train_skipgram(corpus, cfg, 3);
    CHECK(trained.vectors == init.vectors);
    for (double v : trained.context_vectors) CHECK(v == 0.0);
}

TEST_CASE("planted co-occurrence clusters order cosines", "[embeddings]") {
    // Words 0,1,2 always co-occur, as do 3,4,5.
    std::vector<std::vector<int32_t>> corpus;
    Rng shuffle_rng(77);
    for (int rep = 0; rep < 500; ++rep) {
        std::vector<int32_t> a = {0, 1, 2};
        std::vector<int32_t> b = {3, 4, 5};
        for (size_t i = 3; i > 1; --i) {
            std::swap(a[i - 1], a[shuffle_rng.below(i)]);
            std::swap(b[i - 1], b[shuffle_rng.below(i)]);
        }
        corpus.push_back(a);
        corpus.push_back(b);
    }
    SkipgramConfig cfg;
    cfg.dim = 16;
    cfg.window = 2;
    cfg.epochs = 5;
    cfg.negatives = 5;
    cfg.seed = 3;
    auto table = train_skipgram(corpus, cfg, 6);
    for (double v : table.vectors) CHECK(std::isfinite(v));
    CHECK(cosine(table, 0, 1) > cosine(table, 0, 3));
}

TEST_CASE("skipgram training is deterministic for a fixed seed", "[embeddings]") {
    std::vector<std::vector<int32_t>> corpus = {{0, 1, 2, 3}, {2, 3, 0}, {1, 1, 2}};
    SkipgramConfig cfg;
    cfg.dim = 4;
    cfg.epochs = 3;
    cfg.seed = 21;
    auto a = train_skipgram(corpus, cfg, 4);
    auto b = train_skipgram(corpus, cfg, 4);
    CHECK(a.vectors == b.vectors);
    CHECK_THROWS_AS(train_skipgram({}, cfg, 4), EmptyCorpus);
}

TEST_CASE("sentence matrix stacks embedding columns", "[embeddings]") {
    auto table = small_table(5, 3, 9);
    std::vector<int32_t> encoded = {2, 0, 4};
    auto m = build_sentence_matrix(encoded, table, 10, 3);
    REQUIRE(m.cols == 3);
    REQUIRE(m.dim == 3);
    for (int32_t c = 0; c < 3; ++c) {
        CHECK(m.pad[static_cast<size_t>(c)] == 0);
        for (int32_t k = 0; k < 3; ++k)
            CHECK(m.column(c)[k] == table.row(encoded[static_cast<size_t>(c)])[k]);
    }
}

TEST_CASE("sentence matrix pads to min_len with zero columns", "[embeddings]") {
    auto table = small_table(5, 4, 13);
    std::vector<int32_t> encoded = {1, 3};
    auto m = build_sentence_matrix(encoded, table, 10, 8);
    REQUIRE(m.cols == 8);
    for (int32_t c = 2; c < 8; ++c) {
        CHECK(m.pad[static_cast<size_t>(c)] == 1);
        for (int32_t k = 0; k < 4; ++k) CHECK(m.column(c)[k] == 0.0);
    }
    CHECK(m.pad[0] == 0);
    CHECK(m.pad[1] == 0);
}

TEST_CASE("sentence matrix truncates to max_len", "[embeddings]") {
    auto table = small_table(7, 2, 17);
    std::vector<int32_t> encoded(300);
    Rng rng(1);
    for (auto& idx : encoded) idx = static_cast<int32_t>(rng.below(7));
    auto m = build_sentence_matrix(encoded, table, 200, 8);
    REQUIRE(m.cols == 200);
    for (int32_t c = 0; c < 200; ++c)
        for (int32_t k = 0; k < 2; ++k)
            CHECK(m.column(c)[k] == table.row(encoded[static_cast<size_t>(c)])[k]);
}

TEST_CASE("sentence matrix rejects empty encodings and respects bounds", "[embeddings]") {
    auto table = small_table(4, 2, 3);
    CHECK_THROWS_AS(build_sentence_matrix(std::vector<int32_t>{}, table, 10, 4), EmptyEncoding);
    Rng rng(5);
    for (int round = 0; round < 30; ++round) {
        std::vector<int32_t> encoded(1 + rng.below(30));
        for (auto& idx : encoded) idx = static_cast<int32_t>(rng.below(4));
        auto m = build_sentence_matrix(encoded, table, 20, 6);
        CHECK(m.cols >= 6);
        CHECK(m.cols <= 20);
    }
}

TEST_CASE("embedding files round-trip through float32", "[embeddings]") {
    auto table = small_table(9, 5, 23);
    TempDir dir;
    save_embeddings(table, dir / "emb.bin");
    auto loaded = load_embeddings(dir / "emb.bin");
    REQUIRE(loaded.dim == table.dim);
    REQUIRE(loaded.vocab_size() == table.vocab_size());
    for (size_t i = 0; i < table.vectors.size(); ++i)
        CHECK(loaded.vectors[i] == static_cast<double>(static_cast<float>(table.vectors[i])));

    text::Vocabulary vocab;
    for (int i = 0; i < 9; ++i) {
        vocab.index.emplace("w" + std::to_string(i), i);
        vocab.words.push_back("w" + std::to_string(i));
        vocab.frequencies.push_back(9 - i);
    }
    export_embeddings_text(table, vocab, dir / "emb.txt");
    auto text_dump = io::read_file(dir / "emb.txt");
    CHECK(text_dump.find("w0 ") == 0);
}
