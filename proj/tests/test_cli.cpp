#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "adrc/io.hpp"
#include "adrc/nn.hpp"
#include "support/subprocess.hpp"
#include "support/synthetic.hpp"
#include "support/tmpdir.hpp"

namespace fs = std::filesystem;
using subprocess::adrc_bin;
using subprocess::run;

namespace {

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Tiny but trainable settings shared by the CLI tests.
std::string tiny_flags() {
    return " --sg-min-count 2 --sg-epochs 2 --dims 8"
           " --cnn-filters 4 --cnn-width 2 --cnn-fc1 8 --cnn-fc2 4"
           " --cnn-iterations 10 --cnn-batch 4 --min-len 4"
           " --forest-trees 5 --logreg-epochs 300";
}

fs::path write_small_corpus(const TempDir& dir, int reviews = 80, uint64_t seed = 5) {
    synth::BinaryParams params;
    params.reviews = reviews;
    params.seed = seed;
    auto path = dir / "corpus.csv";
    synth::write_corpus_csv(synth::binary_corpus(params), path);
    return path;
}

}  // namespace

TEST_CASE("ingest writes split manifests and is idempotent", "[cli]") {
    TempDir dir;
    auto corpus = write_small_corpus(dir);
    const auto work = dir / "work";
    const std::string cmd =
        adrc_bin() + " ingest --corpus " + q(corpus) + " --workdir " + q(work) + " --seed 11";
    auto first = run(cmd);
    INFO(first.output);
    REQUIRE(first.exit_code == 0);
    REQUIRE(fs::exists(work / "splits/train.csv"));
    REQUIRE(fs::exists(work / "splits/test.csv"));
    REQUIRE(fs::exists(work / "splits/split.json"));
    REQUIRE(fs::exists(work / "config_resolved.toml"));

    const auto train_bytes = adrc::io::read_file(work / "splits/train.csv");
    const auto sidecar_bytes = adrc::io::read_file(work / "splits/split.json");
    auto second = run(cmd);
    REQUIRE(second.exit_code == 0);
    CHECK(adrc::io::read_file(work / "splits/train.csv") == train_bytes);
    CHECK(adrc::io::read_file(work / "splits/split.json") == sidecar_bytes);
}

TEST_CASE("missing corpus file exits nonzero with a diagnostic", "[cli]") {
    TempDir dir;
    auto result = run(adrc_bin() + " ingest --corpus " + q(dir / "absent.csv") + " --workdir " +
                      q(dir / "w"));
    CHECK(result.exit_code != 0);
    CHECK(result.output.find("error:") != std::string::npos);
    CHECK(result.output.find("absent.csv") != std::string::npos);
}

TEST_CASE("embed writes one file per requested dimension", "[cli]") {
    TempDir dir;
    auto corpus = write_small_corpus(dir);
    const auto work = dir / "work";
    REQUIRE(run(adrc_bin() + " ingest --corpus " + q(corpus) + " --workdir " + q(work)).exit_code ==
            0);
    auto result = run(adrc_bin() + " embed --workdir " + q(work) +
                      " --sg-min-count 2 --sg-epochs 1 --dims 8 --dims 12");
    INFO(result.output);
    REQUIRE(result.exit_code == 0);
    CHECK(fs::exists(work / "embeddings/vocab.tsv"));
    CHECK(fs::exists(work / "embeddings/emb_8.bin"));
    CHECK(fs::exists(work / "embeddings/emb_12.bin"));
    CHECK(fs::exists(work / "embeddings/emb_8.txt"));

    // deterministic rerun: byte-identical embedding file
    const auto bytes = adrc::io::read_file(work / "embeddings/emb_8.bin");
    REQUIRE(run(adrc_bin() + " embed --workdir " + q(work) +
                " --sg-min-count 2 --sg-epochs 1 --dims 8 --dims 12")
                .exit_code == 0);
    CHECK(adrc::io::read_file(work / "embeddings/emb_8.bin") == bytes);
}

TEST_CASE("single mode with architecture defaults embeds F=300 h=5 d=300", "[cli]") {
    TempDir dir;
    auto corpus = write_small_corpus(dir, 60);
    const auto work = dir / "work";
    auto result = run(adrc_bin() + " pipeline --corpus " + q(corpus) + " --workdir " + q(work) +
                      " --sg-min-count 2 --sg-epochs 1 --cnn-iterations 1 --cnn-batch 2");
    INFO(result.output);
    REQUIRE(result.exit_code == 0);
    auto model = adrc::nn::load_model<double>(work / "models/single.bin");
    CHECK(model.config.filter_count == 300);
    CHECK(model.config.filter_width == 5);
    CHECK(model.config.embedding_dim == 300);
    CHECK(fs::exists(work / "models/single_loss.csv"));
    CHECK(fs::exists(work / "reports/single.json"));
    CHECK(fs::exists(work / "reports/single.txt"));
}

TEST_CASE("ensemble training resumes exactly the missing members", "[cli]") {
    TempDir dir;
    auto corpus = write_small_corpus(dir);
    const auto work = dir / "work";
    const std::string base = adrc_bin() + " --corpus " + q(corpus) + " --workdir " + q(work) +
                             tiny_flags() + " --mode ensemble --members 5" +
                             " --filters-min 3 --filters-max 5 --width-min 2 --width-max 3";
    REQUIRE(run(base + " ingest").exit_code == 0);
    REQUIRE(run(base + " embed").exit_code == 0);
    auto first = run(base + " train");
    INFO(first.output);
    REQUIRE(first.exit_code == 0);
    for (int i = 0; i < 5; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "member_%03d.bin", i);
        REQUIRE(fs::exists(work / "models" / name));
    }

    // interrupt simulation: members 3 and 4 vanish
    fs::remove(work / "models/member_003.bin");
    fs::remove(work / "models/member_004.bin");
    auto resumed = run(base + " train");
    INFO(resumed.output);
    REQUIRE(resumed.exit_code == 0);
    CHECK(resumed.output.find("resuming committee") != std::string::npos);
    for (int i : {0, 1, 2})
        CHECK(resumed.output.find("member " + std::to_string(i) + " already complete") !=
              std::string::npos);
    CHECK(resumed.output.find("trained member 3") != std::string::npos);
    CHECK(resumed.output.find("trained member 4") != std::string::npos);
    CHECK(resumed.output.find("trained member 0") == std::string::npos);
}

TEST_CASE("eval on a committee writes report and curve; stale manifests fail", "[cli]") {
    TempDir dir;
    auto corpus = write_small_corpus(dir);
    const auto work = dir / "work";
    const std::string base = adrc_bin() + " --corpus " + q(corpus) + " --workdir " + q(work) +
                             tiny_flags() + " --mode ensemble --members 3" +
                             " --filters-min 3 --filters-max 5 --width-min 2 --width-max 3";
    REQUIRE(run(base + " pipeline").exit_code == 0);
    REQUIRE(fs::exists(work / "reports/committee.json"));
    REQUIRE(fs::exists(work / "reports/committee.txt"));
    REQUIRE(fs::exists(work / "reports/curve_committee.csv"));
    auto curve = adrc::io::read_file(work / "reports/curve_committee.csv");
    CHECK(curve.rfind("k,accuracy_mean,accuracy_std\n", 0) == 0);

    fs::remove(work / "models/member_001.bin");
    auto stale = run(base + " eval " + q(work / "models/committee.json"));
    CHECK(stale.exit_code != 0);
    CHECK(stale.output.find("member_001.bin") != std::string::npos);
}

TEST_CASE("two eval targets produce two reports", "[cli]") {
    TempDir dir;
    auto corpus = write_small_corpus(dir);
    const auto work = dir / "work";
    const std::string base =
        adrc_bin() + " --corpus " + q(corpus) + " --workdir " + q(work) + tiny_flags();
    REQUIRE(run(base + " ingest").exit_code == 0);
    REQUIRE(run(base + " embed").exit_code == 0);
    REQUIRE(run(base + " train --mode single").exit_code == 0);
    REQUIRE(run(base + " train --mode baselines").exit_code == 0);
    auto result = run(base + " eval " + q(work / "models/single.bin") + " " +
                      q(work / "models/baseline_bow_logreg.json"));
    INFO(result.output);
    REQUIRE(result.exit_code == 0);
    CHECK(fs::exists(work / "reports/single.json"));
    CHECK(fs::exists(work / "reports/baseline_bow_logreg.json"));
}

TEST_CASE("baselines mode produces four model files", "[cli]") {
    TempDir dir;
    auto corpus = write_small_corpus(dir);
    const auto work = dir / "work";
    const std::string base = adrc_bin() + " --corpus " + q(corpus) + " --workdir " + q(work) +
                             tiny_flags() + " --mode baselines";
    auto result = run(base + " pipeline");
    INFO(result.output);
    REQUIRE(result.exit_code == 0);
    for (const char* name : {"baseline_bow_logreg.json", "baseline_bow_forest.json",
                             "baseline_avg_logreg.json", "baseline_avg_forest.json"}) {
        CHECK(fs::exists(work / "models" / name));
        CHECK(fs::exists(work / "reports" /
                         (std::string(name).substr(0, std::string(name).size() - 5) + ".json")));
    }
}

TEST_CASE("ADRC_WORKDIR environment variable sets the workdir", "[cli]") {
    TempDir dir;
    auto corpus = write_small_corpus(dir, 60);
    const auto work = dir / "env_work";
    auto result = run("ADRC_WORKDIR=" + q(work) + " " + adrc_bin() + " ingest --corpus " + q(corpus));
    INFO(result.output);
    REQUIRE(result.exit_code == 0);
    CHECK(fs::exists(work / "splits/train.csv"));
}

TEST_CASE("TOML config files work and flags override them", "[cli]") {
    TempDir dir;
    auto corpus = write_small_corpus(dir, 60);
    const auto work = dir / "work";
    adrc::io::write_file(dir / "run.toml", "task=\"multi\"\nseed=77\n");

    auto from_file = run(adrc_bin() + " ingest --config " + q(dir / "run.toml") + " --corpus " +
                         q(corpus) + " --workdir " + q(work));
    INFO(from_file.output);
    REQUIRE(from_file.exit_code == 0);
    auto sidecar = nlohmann::json::parse(adrc::io::read_file(work / "splits/split.json"));
    CHECK(sidecar.at("task") == "multi");
    CHECK(sidecar.at("seed") == 77);

    auto overridden = run(adrc_bin() + " ingest --config " + q(dir / "run.toml") + " --corpus " +
                          q(corpus) + " --workdir " + q(work) + " --task binary");
    REQUIRE(overridden.exit_code == 0);
    sidecar = nlohmann::json::parse(adrc::io::read_file(work / "splits/split.json"));
    CHECK(sidecar.at("task") == "binary");
    CHECK(sidecar.at("seed") == 77);
}

TEST_CASE("f32 flag trains and evaluates", "[cli]") {
    TempDir dir;
    auto corpus = write_small_corpus(dir, 60);
    const auto work = dir / "work";
    auto result = run(adrc_bin() + " pipeline --corpus " + q(corpus) + " --workdir " + q(work) +
                      tiny_flags() + " --f32");
    INFO(result.output);
    REQUIRE(result.exit_code == 0);
    CHECK(fs::exists(work / "reports/single.json"));
}
