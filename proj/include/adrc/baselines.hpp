#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "adrc/embeddings.hpp"
#include "adrc/ensemble.hpp"
#include "adrc/random.hpp"

// Reference methods: bag-of-words / averaged-embedding features classified
// by multinomial logistic regression and a random forest.

namespace adrc::baselines {

struct EmptySequence : std::runtime_error {
    explicit EmptySequence(const std::string& what) : std::runtime_error(what) {}
};
struct DimensionMismatch : std::runtime_error {
    explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

enum class FeatureKind { BagOfWords, AvgEmbedding };

struct FeatureVector {
    std::vector<double> values;
    FeatureKind kind = FeatureKind::BagOfWords;
};

// Occurrence counts per vocabulary index; word order is irrelevant.
inline FeatureVector bow_features(std::span<const int32_t> encoded, int32_t vocab_size) {
    FeatureVector fv;
    fv.kind = FeatureKind::BagOfWords;
    fv.values.assign(static_cast<size_t>(vocab_size), 0.0);
    for (int32_t idx : encoded) {
        if (idx < 0 || idx >= vocab_size)
            throw DimensionMismatch("token index " + std::to_string(idx) + " >= vocab size " +
                                    std::to_string(vocab_size));
        fv.values[static_cast<size_t>(idx)] += 1.0;
    }
    return fv;
}

// Arithmetic mean of the word vectors.
inline FeatureVector avg_embedding_features(std::span<const int32_t> encoded,
                                            const emb::EmbeddingTable& table) {
    if (encoded.empty()) throw EmptySequence("cannot average embeddings of an empty sequence");
    FeatureVector fv;
    fv.kind = FeatureKind::AvgEmbedding;
    fv.values.assign(static_cast<size_t>(table.dim), 0.0);
    for (int32_t idx : encoded) {
        const double* row = table.row(idx);
        for (int32_t k = 0; k < table.dim; ++k) fv.values[static_cast<size_t>(k)] += row[k];
    }
    const double inv = 1.0 / static_cast<double>(encoded.size());
    for (auto& v : fv.values) v *= inv;
    return fv;
}

// --- multinomial logistic regression --------------------------------------------
//
// Objective (inverse-regularization convention):
//   f(W, b) = 0.5 ||W||^2 + C * sum_i CE(softmax(W x_i + b), y_i)
// The bias is not regularized. Minimized by full-batch gradient descent
// with Armijo backtracking until ||grad|| < 1e-6 or the epoch cap.

struct LogRegModel {
    int class_count = 0;
    int feature_dim = 0;
    std::vector<double> weights;  // class-major: weights[c*feature_dim + j]
    std::vector<double> biases;   // class_count
    double C = 0.01;
};

namespace detail {

inline void logreg_scores(const LogRegModel& model, std::span<const double> x,
                          std::vector<double>& scores) {
    scores.assign(model.biases.begin(), model.biases.end());
    for (int c = 0; c < model.class_count; ++c) {
        const double* w = model.weights.data() + static_cast<size_t>(c) * model.feature_dim;
        double acc = 0;
        for (int j = 0; j < model.feature_dim; ++j) acc += w[j] * x[static_cast<size_t>(j)];
        scores[static_cast<size_t>(c)] += acc;
    }
}

inline void softmax_inplace(std::vector<double>& scores) {
    const double mx = *std::max_element(scores.begin(), scores.end());
    double total = 0;
    for (auto& s : scores) {
        s = std::exp(s - mx);
        total += s;
    }
    for (auto& s : scores) s /= total;
}

}  // namespace detail

inline double logreg_objective(const LogRegModel& model, std::span<const FeatureVector> features,
                               std::span<const int> labels) {
    double reg = 0;
    for (double w : model.weights) reg += w * w;
    double data = 0;
    std::vector<double> scores;
    for (size_t i = 0; i < features.size(); ++i) {
        detail::logreg_scores(model, features[i].values, scores);
        detail::softmax_inplace(scores);
        data += -std::log(std::max(scores[static_cast<size_t>(labels[i])], 1e-12));
    }
    return 0.5 * reg + model.C * data;
}

// Gradient of the objective above; class-major layout matching the model,
// biases appended after the weights.
inline std::vector<double> logreg_gradient(const LogRegModel& model,
                                           std::span<const FeatureVector> features,
                                           std::span<const int> labels) {
    const size_t wsize = model.weights.size();
    std::vector<double> grad(wsize + model.biases.size(), 0.0);
    std::vector<double> scores;
    for (size_t i = 0; i < features.size(); ++i) {
        detail::logreg_scores(model, features[i].values, scores);
        detail::softmax_inplace(scores);
        scores[static_cast<size_t>(labels[i])] -= 1.0;
        const auto& x = features[i].values;
        for (int c = 0; c < model.class_count; ++c) {
            const double g = model.C * scores[static_cast<size_t>(c)];
            if (g == 0) continue;
            double* gw = grad.data() + static_cast<size_t>(c) * model.feature_dim;
            for (int j = 0; j < model.feature_dim; ++j) gw[j] += g * x[static_cast<size_t>(j)];
            grad[wsize + static_cast<size_t>(c)] += g;
        }
    }
    for (size_t k = 0; k < wsize; ++k) grad[k] += model.weights[k];
    return grad;
}

struct LogRegResult {
    LogRegModel model;
    bool converged = false;
    double gradient_norm = 0;
    int iterations = 0;
};

inline LogRegResult train_logreg(std::span<const FeatureVector> features,
                                 std::span<const int> labels, double C, int epochs,
                                 uint64_t /*seed*/ = 0) {
    if (features.empty()) throw std::invalid_argument("train_logreg: no data");
    int class_count = 0;
    for (int y : labels) class_count = std::max(class_count, y + 1);
    if (class_count < 2) throw std::invalid_argument("train_logreg: need at least 2 classes");

    LogRegResult result;
    LogRegModel& model = result.model;
    model.class_count = class_count;
    model.feature_dim = static_cast<int>(features.front().values.size());
    model.weights.assign(static_cast<size_t>(class_count) * model.feature_dim, 0.0);
    model.biases.assign(static_cast<size_t>(class_count), 0.0);
    model.C = C;

    double objective = logreg_objective(model, features, labels);
    double step = 1.0;
    for (int it = 0; it < epochs; ++it) {
        auto grad = logreg_gradient(model, features, labels);
        double norm_sq = 0;
        for (double g : grad) norm_sq += g * g;
        result.gradient_norm = std::sqrt(norm_sq);
        result.iterations = it;
        if (result.gradient_norm < 1e-6) {
            result.converged = true;
            return result;
        }

        // Armijo backtracking along the steepest descent direction.
        LogRegModel trial = model;
        step = std::min(step * 2.0, 1e6);
        bool accepted = false;
        while (step > 1e-20) {
            for (size_t k = 0; k < model.weights.size(); ++k)
                trial.weights[k] = model.weights[k] - step * grad[k];
            for (size_t k = 0; k < model.biases.size(); ++k)
                trial.biases[k] = model.biases[k] - step * grad[model.weights.size() + k];
            const double trial_objective = logreg_objective(trial, features, labels);
            if (trial_objective <= objective - 1e-4 * step * norm_sq) {
                model.weights.swap(trial.weights);
                model.biases.swap(trial.biases);
                objective = trial_objective;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // no descent step representable; stop here
    }
    auto grad = logreg_gradient(model, features, labels);
    double norm_sq = 0;
    for (double g : grad) norm_sq += g * g;
    result.gradient_norm = std::sqrt(norm_sq);
    result.converged = result.gradient_norm < 1e-6;
    return result;
}

// --- random forest ------------------------------------------------------------------
//
// Per tree: bootstrap sample, recursive Gini-minimizing splits over
// sqrt(feature_dim) random candidate features per node, stopping at purity,
// depth 32 or fewer than 2 samples. If every candidate is constant the
// search extends over the remaining features before giving up, so a tree
// can always separate distinguishable samples.

struct TreeNode {
    bool leaf = true;
    int feature = -1;
    double threshold = 0;
    int left = -1;   // x[feature] <= threshold
    int right = -1;  // x[feature] >  threshold
    std::vector<int> votes;  // class counts at a leaf
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    int predict(std::span<const double> x) const {
        int at = 0;
        while (!nodes[static_cast<size_t>(at)].leaf) {
            const TreeNode& node = nodes[static_cast<size_t>(at)];
            at = x[static_cast<size_t>(node.feature)] <= node.threshold ? node.left : node.right;
        }
        const auto& votes = nodes[static_cast<size_t>(at)].votes;
        return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
};

struct ForestModel {
    int class_count = 0;
    int feature_dim = 0;
    std::vector<DecisionTree> trees;
};

struct ForestParams {
    int tree_count = 500;
    int max_depth = 32;
    int min_samples = 2;
    int candidates = 0;  // 0 = floor(sqrt(feature_dim)), at least 1
    uint64_t seed = 0;
};

namespace detail {

inline double gini(std::span<const int> counts, int total) {
    if (total == 0) return 0;
    double sum_sq = 0;
    for (int c : counts) {
        const double p = static_cast<double>(c) / total;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0;
    double impurity = std::numeric_limits<double>::infinity();
};

class TreeBuilder {
  public:
    TreeBuilder(std::span<const FeatureVector> features, std::span<const int> labels,
                int class_count, const ForestParams& params, Rng& rng)
        : features_(features),
          labels_(labels),
          class_count_(class_count),
          params_(params),
          rng_(rng),
          feature_order_(features.front().values.size()) {
        std::iota(feature_order_.begin(), feature_order_.end(), 0);
    }

    DecisionTree build(std::vector<size_t> sample) {
        tree_.nodes.clear();
        grow(std::move(sample), 0);
        return std::move(tree_);
    }

  private:
    int leaf(const std::vector<size_t>& sample) {
        TreeNode node;
        node.leaf = true;
        node.votes.assign(static_cast<size_t>(class_count_), 0);
        for (size_t i : sample) ++node.votes[static_cast<size_t>(labels_[i])];
        tree_.nodes.push_back(std::move(node));
        return static_cast<int>(tree_.nodes.size() - 1);
    }

    bool pure(const std::vector<size_t>& sample) const {
        const int first = labels_[sample.front()];
        for (size_t i : sample)
            if (labels_[i] != first) return false;
        return true;
    }

    // Best Gini split on one feature; sorted scan over midpoints.
    SplitChoice best_split_on(int feature, const std::vector<size_t>& sample) {
        sorted_ = sample;
        std::sort(sorted_.begin(), sorted_.end(), [&](size_t a, size_t b) {
            return features_[a].values[static_cast<size_t>(feature)] <
                   features_[b].values[static_cast<size_t>(feature)];
        });
        SplitChoice choice;
        const int n = static_cast<int>(sorted_.size());
        left_counts_.assign(static_cast<size_t>(class_count_), 0);
        right_counts_.assign(static_cast<size_t>(class_count_), 0);
        for (size_t i : sorted_) ++right_counts_[static_cast<size_t>(labels_[i])];
        for (int i = 0; i + 1 < n; ++i) {
            const int label = labels_[sorted_[static_cast<size_t>(i)]];
            ++left_counts_[static_cast<size_t>(label)];
            --right_counts_[static_cast<size_t>(label)];
            const double v = features_[sorted_[static_cast<size_t>(i)]].values[static_cast<size_t>(feature)];
            const double next = features_[sorted_[static_cast<size_t>(i + 1)]].values[static_cast<size_t>(feature)];
            if (v == next) continue;
            const int nl = i + 1, nr = n - nl;
            const double impurity =
                (nl * gini(left_counts_, nl) + nr * gini(right_counts_, nr)) / n;
            if (impurity < choice.impurity) {
                choice.found = true;
                choice.feature = feature;
                choice.threshold = v + 0.5 * (next - v);
                choice.impurity = impurity;
            }
        }
        return choice;
    }

    int grow(std::vector<size_t> sample, int depth) {
        if (static_cast<int>(sample.size()) < params_.min_samples || depth >= params_.max_depth ||
            pure(sample))
            return leaf(sample);

        const auto dim = static_cast<int>(feature_order_.size());
        int wanted = params_.candidates > 0
                         ? params_.candidates
                         : std::max(1, static_cast<int>(std::sqrt(static_cast<double>(dim))));
        // Fresh shuffled feature order per node.
        for (size_t i = feature_order_.size(); i > 1; --i)
            std::swap(feature_order_[i - 1], feature_order_[rng_.below(i)]);

        SplitChoice best;
        int considered = 0;
        for (int fi = 0; fi < dim; ++fi) {
            if (considered >= wanted && best.found) break;
            auto choice = best_split_on(feature_order_[static_cast<size_t>(fi)], sample);
            if (choice.found) {
                ++considered;
                if (choice.impurity < best.impurity) best = choice;
            }
        }
        if (!best.found) return leaf(sample);

        std::vector<size_t> left, right;
        left.reserve(sample.size());
        right.reserve(sample.size());
        for (size_t i : sample) {
            if (features_[i].values[static_cast<size_t>(best.feature)] <= best.threshold)
                left.push_back(i);
            else
                right.push_back(i);
        }
        sample.clear();
        sample.shrink_to_fit();

        TreeNode node;
        node.leaf = false;
        node.feature = best.feature;
        node.threshold = best.threshold;
        tree_.nodes.push_back(std::move(node));
        const int at = static_cast<int>(tree_.nodes.size() - 1);
        const int l = grow(std::move(left), depth + 1);
        const int r = grow(std::move(right), depth + 1);
        tree_.nodes[static_cast<size_t>(at)].left = l;
        tree_.nodes[static_cast<size_t>(at)].right = r;
        return at;
    }

    std::span<const FeatureVector> features_;
    std::span<const int> labels_;
    int class_count_;
    const ForestParams& params_;
    Rng& rng_;
    DecisionTree tree_;
    std::vector<int> feature_order_;
    std::vector<size_t> sorted_;
    std::vector<int> left_counts_, right_counts_;
};

}  // namespace detail

inline ForestModel train_forest_with(std::span<const FeatureVector> features,
                                     std::span<const int> labels, const ForestParams& params,
                                     std::vector<std::vector<size_t>>* bootstrap_out = nullptr) {
    if (features.empty()) throw std::invalid_argument("train_forest: no data");
    ForestModel forest;
    forest.feature_dim = static_cast<int>(features.front().values.size());
    for (int y : labels) forest.class_count = std::max(forest.class_count, y + 1);
    forest.trees.resize(static_cast<size_t>(params.tree_count));
    if (bootstrap_out) bootstrap_out->assign(static_cast<size_t>(params.tree_count), {});
    const size_t n = features.size();
    for (int t = 0; t < params.tree_count; ++t) {
        Rng rng(mix_seed(params.seed, static_cast<uint64_t>(t) + 0x7e57));
        std::vector<size_t> bootstrap(n);
        for (auto& idx : bootstrap) idx = static_cast<size_t>(rng.below(n));
        if (bootstrap_out) (*bootstrap_out)[static_cast<size_t>(t)] = bootstrap;
        detail::TreeBuilder builder(features, labels, forest.class_count, params, rng);
        forest.trees[static_cast<size_t>(t)] = builder.build(std::move(bootstrap));
    }
    return forest;
}

inline ForestModel train_forest(std::span<const FeatureVector> features, std::span<const int> labels,
                                int tree_count, uint64_t seed) {
    ForestParams params;
    params.tree_count = tree_count;
    params.seed = seed;
    return train_forest_with(features, labels, params);
}

// --- prediction -----------------------------------------------------------------

inline int predict_baseline(const LogRegModel& model, const FeatureVector& fv) {
    if (static_cast<int>(fv.values.size()) != model.feature_dim)
        throw DimensionMismatch("feature dim " + std::to_string(fv.values.size()) +
                                " != model dim " + std::to_string(model.feature_dim));
    std::vector<double> scores;
    detail::logreg_scores(model, fv.values, scores);
    return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

inline int predict_baseline(const ForestModel& model, const FeatureVector& fv) {
    if (static_cast<int>(fv.values.size()) != model.feature_dim)
        throw DimensionMismatch("feature dim " + std::to_string(fv.values.size()) +
                                " != model dim " + std::to_string(model.feature_dim));
    std::vector<int> votes;
    votes.reserve(model.trees.size());
    for (const auto& tree : model.trees) votes.push_back(tree.predict(fv.values));
    // Uniform confidences: ties fall through to the lowest class index.
    std::vector<std::vector<double>> uniform(
        votes.size(), std::vector<double>(static_cast<size_t>(model.class_count),
                                          1.0 / std::max(1, model.class_count)));
    return ensemble::majority_vote<double>(votes, uniform);
}

// --- persistence -------------------------------------------------------------------

inline nlohmann::json logreg_to_json(const LogRegModel& model) {
    nlohmann::json rows = nlohmann::json::array();
    for (int c = 0; c < model.class_count; ++c) {
        rows.push_back(std::vector<double>(
            model.weights.begin() + static_cast<size_t>(c) * model.feature_dim,
            model.weights.begin() + static_cast<size_t>(c + 1) * model.feature_dim));
    }
    return {{"type", "logreg"},
            {"class_count", model.class_count},
            {"feature_dim", model.feature_dim},
            {"weights", rows},
            {"biases", model.biases},
            {"C", model.C}};
}

inline LogRegModel logreg_from_json(const nlohmann::json& j) {
    LogRegModel model;
    model.class_count = j.at("class_count").get<int>();
    model.feature_dim = j.at("feature_dim").get<int>();
    model.C = j.at("C").get<double>();
    model.biases = j.at("biases").get<std::vector<double>>();
    model.weights.reserve(static_cast<size_t>(model.class_count) * model.feature_dim);
    for (const auto& row : j.at("weights"))
        for (const auto& v : row) model.weights.push_back(v.get<double>());
    if (model.weights.size() != static_cast<size_t>(model.class_count) * model.feature_dim)
        throw DimensionMismatch("logreg weight matrix does not match header dims");
    return model;
}

namespace detail {

inline nlohmann::json node_to_json(const DecisionTree& tree, int at) {
    const TreeNode& node = tree.nodes[static_cast<size_t>(at)];
    if (node.leaf) return {{"votes", node.votes}};
    return {{"feature", node.feature},
            {"threshold", node.threshold},
            {"left", node_to_json(tree, node.left)},
            {"right", node_to_json(tree, node.right)}};
}

inline int node_from_json(const nlohmann::json& j, DecisionTree& tree) {
    TreeNode node;
    if (j.contains("votes")) {
        node.votes = j.at("votes").get<std::vector<int>>();
        tree.nodes.push_back(std::move(node));
        return static_cast<int>(tree.nodes.size() - 1);
    }
    node.leaf = false;
    node.feature = j.at("feature").get<int>();
    node.threshold = j.at("threshold").get<double>();
    tree.nodes.push_back(std::move(node));
    const int at = static_cast<int>(tree.nodes.size() - 1);
    const int l = node_from_json(j.at("left"), tree);
    const int r = node_from_json(j.at("right"), tree);
    tree.nodes[static_cast<size_t>(at)].left = l;
    tree.nodes[static_cast<size_t>(at)].right = r;
    return at;
}

}  // namespace detail

inline nlohmann::json forest_to_json(const ForestModel& model) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : model.trees) trees.push_back(detail::node_to_json(tree, 0));
    return {{"type", "forest"},
            {"class_count", model.class_count},
            {"feature_dim", model.feature_dim},
            {"trees", trees}};
}

inline ForestModel forest_from_json(const nlohmann::json& j) {
    ForestModel model;
    model.class_count = j.at("class_count").get<int>();
    model.feature_dim = j.at("feature_dim").get<int>();
    for (const auto& tj : j.at("trees")) {
        DecisionTree tree;
        detail::node_from_json(tj, tree);
        model.trees.push_back(std::move(tree));
    }
    return model;
}

}  // namespace adrc::baselines
