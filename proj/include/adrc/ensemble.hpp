#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "adrc/nn.hpp"
#include "adrc/parallel.hpp"
#include "adrc/random.hpp"

// Committees of CNNs with sampled structural parameters, combined by
// majority vote.

namespace adrc::ensemble {

struct MissingDimension : std::runtime_error {
    explicit MissingDimension(const std::string& what) : std::runtime_error(what) {}
};

struct IntRange {
    int lo = 0;
    int hi = 0;

    bool contains(int v) const { return v >= lo && v <= hi; }
    bool operator==(const IntRange&) const = default;
};

struct EnsembleSpec {
    int member_count = 20;
    IntRange filter_count_range{200, 400};
    IntRange filter_width_range{4, 8};
    std::vector<int> embedding_dims{200, 300};  // sampled uniformly
    nn::CnnConfig base_config;                  // everything the sampler does not touch
    uint64_t seed = 1;
};

// Draws member configs: filter count and width uniform over their ranges,
// embedding dimension uniform over the allowed set. Each member gets its
// own derived training seed so duplicate shapes still train differently.
inline std::vector<nn::CnnConfig> sample_configs(const EnsembleSpec& spec) {
    if (spec.member_count < 1) throw std::invalid_argument("member_count must be >= 1");
    if (spec.embedding_dims.empty()) throw std::invalid_argument("embedding_dims must be non-empty");
    Rng rng(mix_seed(spec.seed, 0xc0a7));
    std::vector<nn::CnnConfig> configs;
    configs.reserve(static_cast<size_t>(spec.member_count));
    for (int i = 0; i < spec.member_count; ++i) {
        nn::CnnConfig cfg = spec.base_config;
        cfg.filter_count =
            static_cast<int>(rng.uniform_int(spec.filter_count_range.lo, spec.filter_count_range.hi));
        cfg.filter_width =
            static_cast<int>(rng.uniform_int(spec.filter_width_range.lo, spec.filter_width_range.hi));
        cfg.embedding_dim = spec.embedding_dims[rng.below(spec.embedding_dims.size())];
        cfg.seed = mix_seed(spec.seed, static_cast<uint64_t>(i) + 0x1000);
        configs.push_back(cfg);
    }
    return configs;
}

template <class Scalar>
struct Committee {
    EnsembleSpec spec;
    std::vector<nn::CnnModel<Scalar>> members;
};

// Majority vote with a deterministic tie-break: among tied classes, the
// largest softmax mass summed across all members wins; any remaining tie
// goes to the lowest class index.
template <class Prob>
int majority_vote(std::span<const int> votes, std::span<const std::vector<Prob>> confidences) {
    if (votes.empty()) throw std::invalid_argument("majority_vote: no votes");
    size_t class_count = confidences.empty() ? 0 : confidences.front().size();
    for (int v : votes) class_count = std::max(class_count, static_cast<size_t>(v) + 1);

    std::vector<int> counts(class_count, 0);
    for (int v : votes) ++counts[static_cast<size_t>(v)];
    const int best_count = *std::max_element(counts.begin(), counts.end());

    int winner = -1;
    double winner_mass = 0;
    for (size_t c = 0; c < class_count; ++c) {
        if (counts[c] != best_count) continue;
        double mass = 0;
        for (const auto& probs : confidences)
            if (c < probs.size()) mass += static_cast<double>(probs[c]);
        if (winner < 0 || mass > winner_mass) {
            winner = static_cast<int>(c);
            winner_mass = mass;
        }
    }
    return winner;
}

template <class Scalar>
struct CommitteePrediction {
    int predicted_class = 0;
    int tally = 0;  // votes received by the winning class
    std::vector<int> votes;
    std::vector<std::vector<Scalar>> member_probs;
};

// Every member infers on the sentence matrix matching its embedding
// dimension; the result is the majority vote over member argmaxes.
template <class Scalar>
CommitteePrediction<Scalar> predict(const Committee<Scalar>& committee,
                                    const std::map<int, emb::SentenceMatrix<Scalar>>& matrix_by_dim) {
    CommitteePrediction<Scalar> result;
    result.votes.reserve(committee.members.size());
    result.member_probs.reserve(committee.members.size());
    for (const auto& member : committee.members) {
        auto it = matrix_by_dim.find(member.config.embedding_dim);
        if (it == matrix_by_dim.end())
            throw MissingDimension("no sentence matrix for embedding dimension " +
                                   std::to_string(member.config.embedding_dim));
        std::vector<Scalar> probs;
        result.votes.push_back(nn::predict_class(member, it->second, &probs));
        result.member_probs.push_back(std::move(probs));
    }
    result.predicted_class = majority_vote<Scalar>(result.votes, result.member_probs);
    result.tally = static_cast<int>(
        std::count(result.votes.begin(), result.votes.end(), result.predicted_class));
    return result;
}

// Trains all members on the same training split. Members are independent,
// so they may train in parallel; each one is still single-worker inside,
// which keeps the per-member determinism contract. A failed member aborts
// the whole committee.
template <class Scalar>
Committee<Scalar> train_committee(const EnsembleSpec& spec,
                                  std::span<const std::vector<int32_t>> encoded,
                                  std::span<const int> labels,
                                  const std::map<int, const emb::EmbeddingTable*>& tables,
                                  int32_t max_len, int32_t min_len, int workers = 1,
                                  std::vector<std::vector<nn::TrainLogEntry>>* logs = nullptr) {
    auto configs = sample_configs(spec);
    for (const auto& cfg : configs)
        if (!tables.count(cfg.embedding_dim))
            throw MissingDimension("no embedding table for dimension " +
                                   std::to_string(cfg.embedding_dim));

    Committee<Scalar> committee;
    committee.spec = spec;
    committee.members.resize(configs.size());
    if (logs) logs->assign(configs.size(), {});
    parallel_jobs(static_cast<int>(configs.size()), workers, [&](int i) {
        const auto ui = static_cast<size_t>(i);
        auto* log = logs ? &(*logs)[ui] : nullptr;
        committee.members[ui] =
            nn::train_cnn<Scalar>(configs[ui], encoded, labels,
                                  *tables.at(configs[ui].embedding_dim), max_len, min_len, log);
    });
    return committee;
}

// --- config/spec JSON (committee manifest building blocks) ---------------------

inline nlohmann::json config_to_json(const nn::CnnConfig& c) {
    return {{"filter_count", c.filter_count},
            {"filter_width", c.filter_width},
            {"embedding_dim", c.embedding_dim},
            {"fc1_units", c.fc1_units},
            {"fc2_units", c.fc2_units},
            {"class_count", c.class_count},
            {"dropout_rate", c.dropout_rate},
            {"l2", c.l2},
            {"learning_rate", c.learning_rate},
            {"iterations", c.iterations},
            {"batch_size", c.batch_size},
            {"seed", c.seed}};
}

inline nn::CnnConfig config_from_json(const nlohmann::json& j) {
    nn::CnnConfig c;
    c.filter_count = j.at("filter_count").get<int>();
    c.filter_width = j.at("filter_width").get<int>();
    c.embedding_dim = j.at("embedding_dim").get<int>();
    c.fc1_units = j.at("fc1_units").get<int>();
    c.fc2_units = j.at("fc2_units").get<int>();
    c.class_count = j.at("class_count").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.l2 = j.at("l2").get<double>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.iterations = j.at("iterations").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

inline nlohmann::json spec_to_json(const EnsembleSpec& spec) {
    return {{"member_count", spec.member_count},
            {"filter_count_range", {spec.filter_count_range.lo, spec.filter_count_range.hi}},
            {"filter_width_range", {spec.filter_width_range.lo, spec.filter_width_range.hi}},
            {"embedding_dims", spec.embedding_dims},
            {"base_config", config_to_json(spec.base_config)},
            {"seed", spec.seed}};
}

inline EnsembleSpec spec_from_json(const nlohmann::json& j) {
    EnsembleSpec spec;
    spec.member_count = j.at("member_count").get<int>();
    spec.filter_count_range = {j.at("filter_count_range")[0].get<int>(),
                               j.at("filter_count_range")[1].get<int>()};
    spec.filter_width_range = {j.at("filter_width_range")[0].get<int>(),
                               j.at("filter_width_range")[1].get<int>()};
    spec.embedding_dims = j.at("embedding_dims").get<std::vector<int>>();
    spec.base_config = config_from_json(j.at("base_config"));
    spec.seed = j.at("seed").get<uint64_t>();
    return spec;
}

}  // namespace adrc::ensemble
