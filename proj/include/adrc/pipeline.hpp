#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "adrc/baselines.hpp"
#include "adrc/corpus.hpp"
#include "adrc/embeddings.hpp"
#include "adrc/ensemble.hpp"
#include "adrc/eval.hpp"
#include "adrc/nn.hpp"
#include "adrc/parallel.hpp"
#include "adrc/text.hpp"

// Orchestration of the full run: ingest -> embed -> train -> eval, with a
// fixed workdir layout so that resume and eval can locate artifacts:
//   <workdir>/splits/      train.csv test.csv split.json
//   <workdir>/embeddings/  vocab.tsv emb_<d>.bin emb_<d>.txt
//   <workdir>/models/      single.bin committee.json member_###.bin baseline_*.json
//   <workdir>/reports/     <target>.json <target>.txt curve_<target>.csv

namespace adrc::pipeline {

namespace fs = std::filesystem;

struct RunConfig {
    std::string corpus_path;
    std::string workdir = "work";
    std::string task = "binary";  // binary | multi
    double train_fraction = 0.8;
    uint64_t seed = 1;

    // skipgram
    int sg_window = 5;
    int sg_min_count = 5;
    int sg_negatives = 5;
    int sg_epochs = 5;
    double sg_lr = 0.025;
    double sg_noise_power = 0.75;
    std::vector<int> embedding_dims = {300};
    bool embed_all_text = false;  // default: embeddings see the training split only

    // CNN template
    int cnn_filters = 300;
    int cnn_width = 5;
    int cnn_fc1 = 1024;
    int cnn_fc2 = 256;
    int cnn_iterations = 20000;
    int cnn_batch = 50;
    double cnn_dropout = 0.2;
    double cnn_l2 = 1e-2;
    double cnn_lr = 5e-4;
    int max_len = 200;
    int min_len = 8;

    // ensemble
    int members = 20;
    int filters_min = 200;
    int filters_max = 400;
    int width_min = 4;
    int width_max = 8;

    // baselines
    double logreg_c = 0.01;
    int logreg_epochs = 100000;
    int forest_trees = 500;

    // execution
    std::string mode = "single";  // single | ensemble | baselines
    int workers = 1;
    bool f32 = false;
    int curve_trials = 5;
    std::vector<int> curve_sizes;  // empty: every size 1..members
};

inline fs::path splits_dir(const RunConfig& cfg) { return fs::path(cfg.workdir) / "splits"; }
inline fs::path embeddings_dir(const RunConfig& cfg) { return fs::path(cfg.workdir) / "embeddings"; }
inline fs::path models_dir(const RunConfig& cfg) { return fs::path(cfg.workdir) / "models"; }
inline fs::path reports_dir(const RunConfig& cfg) { return fs::path(cfg.workdir) / "reports"; }

inline fs::path embedding_file(const RunConfig& cfg, int dim) {
    return embeddings_dir(cfg) / ("emb_" + std::to_string(dim) + ".bin");
}

// --- ingest --------------------------------------------------------------------

struct IngestResult {
    size_t parsed = 0;
    size_t malformed = 0;
    corpus::BuildStats stats;
    size_t train_size = 0;
    size_t test_size = 0;
};

inline IngestResult cmd_ingest(const RunConfig& cfg, std::ostream& log = std::cout) {
    const auto task = corpus::task_from_name(cfg.task);
    auto parse = corpus::parse_corpus(cfg.corpus_path);
    for (const auto& bad : parse.rejected)
        std::cerr << "malformed row " << bad.row_index << ": " << bad.reason << "\n";

    corpus::BuildStats stats;
    auto examples = corpus::build_examples(parse.records, task,
                                           [](std::string_view s) { return text::tokenize(s); },
                                           &stats);
    auto split = corpus::split_stratified(examples, cfg.train_fraction, cfg.seed);

    corpus::SplitManifestInfo info;
    info.task = task;
    info.train_fraction = cfg.train_fraction;
    info.seed = cfg.seed;
    info.stats = stats;
    info.malformed_rows = parse.rejected.size();
    info.parsed_rows = parse.records.size();
    corpus::save_split(split, info, splits_dir(cfg));

    log << "ingest: " << parse.records.size() << " records, " << parse.rejected.size()
        << " malformed rows rejected, " << stats.dropped_unlabeled
        << " dropped by label mapping, " << stats.dropped_empty
        << " dropped for empty comments\n";
    log << "ingest: train " << split.train.size() << " / test " << split.test.size() << " -> "
        << splits_dir(cfg).string() << "\n";

    IngestResult result;
    result.parsed = parse.records.size();
    result.malformed = parse.rejected.size();
    result.stats = stats;
    result.train_size = split.train.size();
    result.test_size = split.test.size();
    return result;
}

// --- embed ---------------------------------------------------------------------

inline void cmd_embed(const RunConfig& cfg, std::ostream& log = std::cout) {
    corpus::Task task;
    auto split = corpus::load_split(splits_dir(cfg), &task);

    std::vector<text::TokenSequence> sequences;
    sequences.reserve(split.train.size() + (cfg.embed_all_text ? split.test.size() : 0));
    for (const auto& ex : split.train) sequences.push_back(ex.tokens);
    if (cfg.embed_all_text)
        for (const auto& ex : split.test) sequences.push_back(ex.tokens);

    auto vocab = text::build_vocabulary(sequences, cfg.sg_min_count);
    fs::create_directories(embeddings_dir(cfg));
    text::save_vocabulary(vocab, embeddings_dir(cfg) / "vocab.tsv");

    std::vector<std::vector<int32_t>> encoded;
    encoded.reserve(sequences.size());
    for (const auto& seq : sequences) encoded.push_back(text::encode(seq, vocab));

    for (int dim : cfg.embedding_dims) {
        emb::SkipgramConfig sg;
        sg.window = cfg.sg_window;
        sg.min_count = cfg.sg_min_count;
        sg.dim = dim;
        sg.negatives = cfg.sg_negatives;
        sg.epochs = cfg.sg_epochs;
        sg.initial_lr = cfg.sg_lr;
        sg.noise_power = cfg.sg_noise_power;
        sg.seed = mix_seed(cfg.seed, static_cast<uint64_t>(dim));
        auto table = emb::train_skipgram(encoded, sg, vocab.size());
        emb::save_embeddings(table, embedding_file(cfg, dim));
        emb::export_embeddings_text(table, vocab,
                                    embeddings_dir(cfg) / ("emb_" + std::to_string(dim) + ".txt"));
        log << "embed: d=" << dim << " over " << vocab.size() << " words -> "
            << embedding_file(cfg, dim).string() << "\n";
    }
}

// --- shared data loading ----------------------------------------------------------

struct EncodedSet {
    std::vector<std::vector<int32_t>> encoded;
    std::vector<int> labels;
    std::vector<corpus::LabeledExample> kept;  // examples whose encoding is non-empty
    size_t dropped_empty = 0;
};

inline EncodedSet encode_set(const std::vector<corpus::LabeledExample>& examples,
                             const text::Vocabulary& vocab) {
    EncodedSet out;
    for (const auto& ex : examples) {
        auto enc = text::encode(ex.tokens, vocab);
        if (enc.empty()) {
            ++out.dropped_empty;
            continue;
        }
        out.encoded.push_back(std::move(enc));
        out.labels.push_back(ex.label);
        out.kept.push_back(ex);
    }
    return out;
}

struct LoadedData {
    corpus::Task task;
    corpus::SplitDataset split;
    text::Vocabulary vocab;
    EncodedSet train;
    EncodedSet test;
    std::map<int, emb::EmbeddingTable> tables;
};

inline LoadedData load_data(const RunConfig& cfg, const std::vector<int>& dims) {
    LoadedData data;
    data.split = corpus::load_split(splits_dir(cfg), &data.task);
    data.vocab = text::load_vocabulary(embeddings_dir(cfg) / "vocab.tsv");
    data.train = encode_set(data.split.train, data.vocab);
    data.test = encode_set(data.split.test, data.vocab);
    for (int dim : dims) data.tables.emplace(dim, emb::load_embeddings(embedding_file(cfg, dim)));
    return data;
}

inline nn::CnnConfig base_cnn_config(const RunConfig& cfg, const corpus::Task& task, int dim) {
    nn::CnnConfig c;
    c.filter_count = cfg.cnn_filters;
    c.filter_width = cfg.cnn_width;
    c.embedding_dim = dim;
    c.fc1_units = cfg.cnn_fc1;
    c.fc2_units = cfg.cnn_fc2;
    c.class_count = task.class_count;
    c.dropout_rate = cfg.cnn_dropout;
    c.l2 = cfg.cnn_l2;
    c.learning_rate = cfg.cnn_lr;
    c.iterations = cfg.cnn_iterations;
    c.batch_size = cfg.cnn_batch;
    c.seed = mix_seed(cfg.seed, 0x51);
    return c;
}

// --- train ---------------------------------------------------------------------

struct TrainResult {
    std::vector<int> trained_members;  // ensemble mode: indices trained this run
    std::vector<int> skipped_members;  // ensemble mode: indices found complete
};

inline std::string member_file_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "member_%03d.bin", index);
    return buf;
}

template <class Scalar>
TrainResult cmd_train_typed(const RunConfig& cfg, std::ostream& log = std::cout) {
    TrainResult result;
    const auto models = models_dir(cfg);
    fs::create_directories(models);

    if (cfg.mode == "single") {
        const int dim = cfg.embedding_dims.front();
        auto data = load_data(cfg, {dim});
        if (data.train.encoded.empty()) throw std::runtime_error("train: no usable training examples");
        if (data.train.dropped_empty)
            log << "train: dropped " << data.train.dropped_empty
                << " training examples with no in-vocabulary tokens\n";
        auto config = base_cnn_config(cfg, data.task, dim);
        std::vector<nn::TrainLogEntry> trace;
        auto model = nn::train_cnn<Scalar>(config, data.train.encoded, data.train.labels,
                                           data.tables.at(dim), cfg.max_len, cfg.min_len, &trace);
        nn::save_model(model, models / "single.bin");
        io::write_file(models / "single_loss.csv", nn::loss_trace_csv(trace));
        log << "train: single CNN (F=" << config.filter_count << ", h=" << config.filter_width
            << ", d=" << config.embedding_dim << ") -> " << (models / "single.bin").string() << "\n";
        return result;
    }

    if (cfg.mode == "ensemble") {
        auto data = load_data(cfg, cfg.embedding_dims);
        if (data.train.encoded.empty()) throw std::runtime_error("train: no usable training examples");

        const auto manifest_path = models / "committee.json";
        ensemble::EnsembleSpec spec;
        std::vector<nn::CnnConfig> configs;
        if (fs::exists(manifest_path)) {
            auto manifest = nlohmann::json::parse(io::read_file(manifest_path));
            spec = ensemble::spec_from_json(manifest.at("spec"));
            for (const auto& mj : manifest.at("members"))
                configs.push_back(ensemble::config_from_json(mj.at("config")));
            log << "train: resuming committee from " << manifest_path.string() << "\n";
        } else {
            spec.member_count = cfg.members;
            spec.filter_count_range = {cfg.filters_min, cfg.filters_max};
            spec.filter_width_range = {cfg.width_min, cfg.width_max};
            spec.embedding_dims = cfg.embedding_dims;
            spec.base_config = base_cnn_config(cfg, data.task, cfg.embedding_dims.front());
            spec.seed = mix_seed(cfg.seed, 0xe5);
            configs = ensemble::sample_configs(spec);
            nlohmann::json manifest;
            manifest["spec"] = ensemble::spec_to_json(spec);
            manifest["members"] = nlohmann::json::array();
            for (size_t i = 0; i < configs.size(); ++i) {
                manifest["members"].push_back({{"index", i},
                                               {"path", member_file_name(static_cast<int>(i))},
                                               {"seed", configs[i].seed},
                                               {"config", ensemble::config_to_json(configs[i])}});
            }
            io::write_file(manifest_path, manifest.dump(2) + "\n");
        }

        // A member is complete when its file exists and its embedded config
        // matches the manifest; anything else is (re)trained.
        std::vector<int> pending;
        for (size_t i = 0; i < configs.size(); ++i) {
            const auto path = models / member_file_name(static_cast<int>(i));
            bool done = false;
            if (fs::exists(path)) {
                try {
                    done = nn::load_model<Scalar>(path).config == configs[i];
                } catch (const io::FileUnreadable&) {
                    done = false;
                }
            }
            if (done) {
                result.skipped_members.push_back(static_cast<int>(i));
                log << "train: member " << i << " already complete, skipping\n";
            } else {
                pending.push_back(static_cast<int>(i));
            }
        }

        parallel_jobs(static_cast<int>(pending.size()), cfg.workers, [&](int job) {
            const int i = pending[static_cast<size_t>(job)];
            const auto& config = configs[static_cast<size_t>(i)];
            std::vector<nn::TrainLogEntry> trace;
            auto model =
                nn::train_cnn<Scalar>(config, data.train.encoded, data.train.labels,
                                      data.tables.at(config.embedding_dim), cfg.max_len,
                                      cfg.min_len, &trace);
            nn::save_model(model, models / member_file_name(i));
            char name[40];
            std::snprintf(name, sizeof name, "member_%03d_loss.csv", i);
            io::write_file(models / name, nn::loss_trace_csv(trace));
        });
        for (int i : pending) {
            result.trained_members.push_back(i);
            log << "train: trained member " << i << "\n";
        }
        log << "train: committee of " << configs.size() << " members -> " << manifest_path.string()
            << "\n";
        return result;
    }

    if (cfg.mode == "baselines") {
        const int dim = cfg.embedding_dims.front();
        auto data = load_data(cfg, {dim});
        if (data.train.encoded.empty()) throw std::runtime_error("train: no usable training examples");

        std::vector<baselines::FeatureVector> bow, avg;
        bow.reserve(data.train.encoded.size());
        avg.reserve(data.train.encoded.size());
        for (const auto& enc : data.train.encoded) {
            bow.push_back(baselines::bow_features(enc, data.vocab.size()));
            avg.push_back(baselines::avg_embedding_features(enc, data.tables.at(dim)));
        }

        auto save_wrapped = [&](const std::string& name, const std::string& features,
                                nlohmann::json model_json) {
            nlohmann::json j;
            j["features"] = features;
            j["embedding_dim"] = features == "avg" ? dim : 0;
            j["task"] = corpus::task_name(data.task);
            j["model"] = std::move(model_json);
            io::write_file(models / name, j.dump() + "\n");
            log << "train: baseline -> " << (models / name).string() << "\n";
        };

        for (const auto& [features, feats] :
             std::vector<std::pair<std::string, const std::vector<baselines::FeatureVector>*>>{
                 {"bow", &bow}, {"avg", &avg}}) {
            auto lr = baselines::train_logreg(*feats, data.train.labels, cfg.logreg_c,
                                              cfg.logreg_epochs, mix_seed(cfg.seed, 0x17));
            if (!lr.converged)
                std::cerr << "warning: logistic regression on " << features
                          << " features stopped at gradient norm " << lr.gradient_norm << "\n";
            save_wrapped("baseline_" + features + "_logreg.json", features,
                         baselines::logreg_to_json(lr.model));
            auto forest = baselines::train_forest(*feats, data.train.labels, cfg.forest_trees,
                                                  mix_seed(cfg.seed, 0xf0));
            save_wrapped("baseline_" + features + "_forest.json", features,
                         baselines::forest_to_json(forest));
        }
        return result;
    }

    throw std::invalid_argument("unknown train mode: " + cfg.mode +
                                " (want single|ensemble|baselines)");
}

inline TrainResult cmd_train(const RunConfig& cfg, std::ostream& log = std::cout) {
    return cfg.f32 ? cmd_train_typed<float>(cfg, log) : cmd_train_typed<double>(cfg, log);
}

// --- eval ----------------------------------------------------------------------

namespace detail {

template <class Scalar>
ensemble::Committee<Scalar> load_committee(const fs::path& manifest_path) {
    auto manifest = nlohmann::json::parse(io::read_file(manifest_path));
    ensemble::Committee<Scalar> committee;
    committee.spec = ensemble::spec_from_json(manifest.at("spec"));
    for (const auto& mj : manifest.at("members")) {
        const auto member_path = manifest_path.parent_path() / mj.at("path").get<std::string>();
        if (!fs::exists(member_path))
            throw io::FileUnreadable("committee manifest " + manifest_path.string() +
                                     " references missing member file " + member_path.string());
        committee.members.push_back(nn::load_model<Scalar>(member_path));
    }
    return committee;
}

inline bool is_model_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io::FileUnreadable("cannot open eval target: " + path.string());
    char magic[8] = {};
    in.read(magic, 8);
    return in.gcount() == 8 && std::equal(magic, magic + 8, nn::kModelMagic);
}

}  // namespace detail

template <class Scalar>
void cmd_eval_typed(const RunConfig& cfg, const std::vector<std::string>& targets,
                    std::ostream& log = std::cout) {
    if (targets.empty()) throw std::invalid_argument("eval: no targets given");
    auto data = load_data(cfg, cfg.embedding_dims);
    if (data.test.encoded.empty()) throw eval::EmptyTestSet("eval: no usable test examples");
    fs::create_directories(reports_dir(cfg));

    for (const auto& target : targets) {
        const fs::path path(target);
        const std::string stem = path.stem().string();
        eval::EvalReport report;
        std::vector<eval::CurvePoint> curve;

        if (detail::is_model_file(path)) {
            auto model = nn::load_model<Scalar>(path);
            if (!data.tables.count(model.config.embedding_dim))
                throw ensemble::MissingDimension(
                    "eval: no embedding table with d=" + std::to_string(model.config.embedding_dim) +
                    " (add it to embedding_dims)");
            const auto& table = data.tables.at(model.config.embedding_dim);
            std::vector<int> predictions;
            emb::SentenceMatrix<Scalar> scratch;
            for (const auto& enc : data.test.encoded) {
                emb::build_sentence_matrix_into<Scalar>(enc, table, cfg.max_len, cfg.min_len, scratch);
                predictions.push_back(nn::predict_class(model, scratch));
            }
            report = eval::evaluate_pairs(predictions, data.test.labels, data.task);
        } else {
            auto j = nlohmann::json::parse(io::read_file(path));
            if (j.contains("members")) {
                auto committee = detail::load_committee<Scalar>(path);
                std::vector<std::map<int, emb::SentenceMatrix<Scalar>>> prepared(
                    data.test.encoded.size());
                std::set<int> dims;
                for (const auto& member : committee.members) dims.insert(member.config.embedding_dim);
                for (int dim : dims)
                    if (!data.tables.count(dim))
                        throw ensemble::MissingDimension("eval: no embedding table with d=" +
                                                         std::to_string(dim));
                for (size_t i = 0; i < data.test.encoded.size(); ++i)
                    for (int dim : dims)
                        emb::build_sentence_matrix_into<Scalar>(data.test.encoded[i],
                                                                data.tables.at(dim), cfg.max_len,
                                                                cfg.min_len, prepared[i][dim]);
                auto votes = eval::member_votes(
                    committee,
                    std::span<const std::map<int, emb::SentenceMatrix<Scalar>>>(prepared),
                    data.test.labels);
                std::vector<int> predictions;
                for (size_t i = 0; i < data.test.encoded.size(); ++i) {
                    std::vector<int> vs(committee.members.size());
                    std::vector<std::vector<double>> ps(committee.members.size());
                    for (size_t m = 0; m < committee.members.size(); ++m) {
                        vs[m] = votes.votes[m][i];
                        ps[m] = votes.probs[m][i];
                    }
                    predictions.push_back(ensemble::majority_vote<double>(vs, ps));
                }
                report = eval::evaluate_pairs(predictions, data.test.labels, data.task);

                std::vector<int> sizes = cfg.curve_sizes;
                if (sizes.empty())
                    for (int k = 1; k <= static_cast<int>(committee.members.size()); ++k)
                        sizes.push_back(k);
                curve = eval::committee_curve_from_votes(votes, sizes, cfg.curve_trials,
                                                         mix_seed(cfg.seed, 0xc42e));
                io::write_file(reports_dir(cfg) / ("curve_" + stem + ".csv"), eval::curve_csv(curve));
                log << "eval: curve -> " << (reports_dir(cfg) / ("curve_" + stem + ".csv")).string()
                    << "\n";
            } else if (j.contains("features")) {
                const std::string features = j.at("features").get<std::string>();
                const auto& model_json = j.at("model");
                const std::string type = model_json.at("type").get<std::string>();
                const int dim = j.at("embedding_dim").get<int>();
                std::vector<int> predictions;
                auto featurize = [&](const std::vector<int32_t>& enc) {
                    if (features == "bow") return baselines::bow_features(enc, data.vocab.size());
                    return baselines::avg_embedding_features(enc, data.tables.at(dim));
                };
                if (type == "logreg") {
                    auto model = baselines::logreg_from_json(model_json);
                    for (const auto& enc : data.test.encoded)
                        predictions.push_back(baselines::predict_baseline(model, featurize(enc)));
                } else {
                    auto model = baselines::forest_from_json(model_json);
                    for (const auto& enc : data.test.encoded)
                        predictions.push_back(baselines::predict_baseline(model, featurize(enc)));
                }
                report = eval::evaluate_pairs(predictions, data.test.labels, data.task);
            } else {
                throw io::FileUnreadable("eval target " + target +
                                         " is neither a model, committee manifest nor baseline");
            }
        }

        auto rj = eval::report_to_json(report, stem);
        rj["target"] = path.filename().string();
        rj["skipped_empty_test_examples"] = data.test.dropped_empty;
        io::write_file(reports_dir(cfg) / (stem + ".json"), rj.dump(2) + "\n");
        std::vector<std::pair<std::string, eval::EvalReport>> rows{{stem, report}};
        io::write_file(reports_dir(cfg) / (stem + ".txt"), eval::report_table(rows));
        log << "eval: " << stem << " overall accuracy "
            << 100.0 * report.overall_accuracy << "% -> "
            << (reports_dir(cfg) / (stem + ".json")).string() << "\n";
    }
}

inline void cmd_eval(const RunConfig& cfg, const std::vector<std::string>& targets,
                     std::ostream& log = std::cout) {
    if (cfg.f32)
        cmd_eval_typed<float>(cfg, targets, log);
    else
        cmd_eval_typed<double>(cfg, targets, log);
}

// --- pipeline ---------------------------------------------------------------------

inline void cmd_pipeline(const RunConfig& cfg, std::ostream& log = std::cout) {
    cmd_ingest(cfg, log);
    cmd_embed(cfg, log);
    cmd_train(cfg, log);
    std::vector<std::string> targets;
    if (cfg.mode == "single") {
        targets.push_back((models_dir(cfg) / "single.bin").string());
    } else if (cfg.mode == "ensemble") {
        targets.push_back((models_dir(cfg) / "committee.json").string());
    } else {
        for (const char* name : {"baseline_bow_logreg.json", "baseline_bow_forest.json",
                                 "baseline_avg_logreg.json", "baseline_avg_forest.json"})
            targets.push_back((models_dir(cfg) / name).string());
    }
    cmd_eval(cfg, targets, log);
}

}  // namespace adrc::pipeline
