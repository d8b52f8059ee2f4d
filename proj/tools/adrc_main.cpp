// adrc: drug-review safety classification from the command line.
//
//   adrc ingest   parse a review CSV, label it and write train/test splits
//   adrc embed    train skipgram embeddings over the training split
//   adrc train    train a single CNN, a CNN committee or the baselines
//   adrc eval     evaluate trained artifacts on the test split
//   adrc pipeline run all of the above in order
//
// Options can come from a TOML config file (--config) with command-line
// flags taking precedence; the fully resolved configuration is echoed to
// <workdir>/config_resolved.toml for provenance.

#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adrc/pipeline.hpp"

int main(int argc, char** argv) {
    adrc::pipeline::RunConfig cfg;
    std::vector<std::string> eval_targets;

    CLI::App app{"drug-review safety classification: embeddings, CNN committees, baselines"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "TOML config file; flags override file values");

    app.add_option("--corpus", cfg.corpus_path, "input review CSV");
    app.add_option("--workdir", cfg.workdir, "artifact directory")->envname("ADRC_WORKDIR");
    app.add_option("--task", cfg.task, "classification task")
        ->check(CLI::IsMember({"binary", "multi"}));
    app.add_option("--seed", cfg.seed, "master seed; all randomness derives from it");
    app.add_option("--train-fraction", cfg.train_fraction, "per-class training share");

    app.add_option("--sg-window", cfg.sg_window, "skipgram window size");
    app.add_option("--sg-min-count", cfg.sg_min_count, "vocabulary frequency cutoff");
    app.add_option("--sg-negatives", cfg.sg_negatives, "negative samples per pair");
    app.add_option("--sg-epochs", cfg.sg_epochs, "skipgram epochs");
    app.add_option("--sg-lr", cfg.sg_lr, "skipgram initial learning rate");
    app.add_option("--sg-noise-power", cfg.sg_noise_power, "unigram noise distribution power");
    app.add_option("--dims", cfg.embedding_dims, "embedding dimensions to train/use");
    app.add_flag("--embed-all-text", cfg.embed_all_text,
                 "train embeddings on train+test text instead of train only");

    app.add_option("--cnn-filters", cfg.cnn_filters, "convolution filter count");
    app.add_option("--cnn-width", cfg.cnn_width, "convolution filter width (words)");
    app.add_option("--cnn-fc1", cfg.cnn_fc1, "first dense layer units");
    app.add_option("--cnn-fc2", cfg.cnn_fc2, "second dense layer units");
    app.add_option("--cnn-iterations", cfg.cnn_iterations, "minibatch steps");
    app.add_option("--cnn-batch", cfg.cnn_batch, "minibatch size");
    app.add_option("--cnn-dropout", cfg.cnn_dropout, "dropout rate on dense layers");
    app.add_option("--cnn-l2", cfg.cnn_l2, "l2 coefficient on weight matrices");
    app.add_option("--cnn-lr", cfg.cnn_lr, "Adam learning rate");
    app.add_option("--max-len", cfg.max_len, "truncate reviews to this many tokens");
    app.add_option("--min-len", cfg.min_len, "zero-pad reviews up to this many tokens");

    app.add_option("--members", cfg.members, "committee size");
    app.add_option("--filters-min", cfg.filters_min, "sampled filter count lower bound");
    app.add_option("--filters-max", cfg.filters_max, "sampled filter count upper bound");
    app.add_option("--width-min", cfg.width_min, "sampled filter width lower bound");
    app.add_option("--width-max", cfg.width_max, "sampled filter width upper bound");

    app.add_option("--logreg-c", cfg.logreg_c, "logistic regression data-term weight C");
    app.add_option("--logreg-epochs", cfg.logreg_epochs, "logistic regression iteration cap");
    app.add_option("--forest-trees", cfg.forest_trees, "random forest tree count");

    app.add_option("--mode", cfg.mode, "what `train` builds")
        ->check(CLI::IsMember({"single", "ensemble", "baselines"}));
    app.add_option("--workers", cfg.workers, "worker threads for committee training");
    app.add_flag("--f32,!--f64", cfg.f32,
                 "train/infer in float32 (faster, voids bit-determinism); --f64 is the default");
    app.add_option("--curve-trials", cfg.curve_trials, "random subsets per committee-curve size");
    app.add_option("--curve-sizes", cfg.curve_sizes, "committee sizes for the accuracy curve");

    auto* ingest = app.add_subcommand("ingest", "parse, label and split the corpus");
    auto* embed = app.add_subcommand("embed", "train word embeddings");
    auto* train = app.add_subcommand("train", "train models per --mode");
    auto* eval = app.add_subcommand("eval", "evaluate artifacts on the test split");
    eval->add_option("targets", eval_targets, "model files / committee manifests to evaluate");
    auto* pipe = app.add_subcommand("pipeline", "ingest + embed + train + eval");

    CLI11_PARSE(app, argc, argv);

    try {
        std::filesystem::create_directories(cfg.workdir);
        adrc::io::write_file(std::filesystem::path(cfg.workdir) / "config_resolved.toml",
                             app.config_to_str(true, true));

        if (*ingest) adrc::pipeline::cmd_ingest(cfg);
        if (*embed) adrc::pipeline::cmd_embed(cfg);
        if (*train) adrc::pipeline::cmd_train(cfg);
        if (*eval) adrc::pipeline::cmd_eval(cfg, eval_targets);
        if (*pipe) adrc::pipeline::cmd_pipeline(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
