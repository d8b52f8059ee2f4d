#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "adrc/corpus.hpp"
#include "adrc/ensemble.hpp"

// Accuracy reports (per class and overall), confusion matrices and the
// accuracy-vs-committee-size curve.

namespace adrc::eval {

struct EmptyTestSet : std::runtime_error {
    explicit EmptyTestSet(const std::string& what) : std::runtime_error(what) {}
};
struct SizeExceedsCommittee : std::runtime_error {
    explicit SizeExceedsCommittee(const std::string& what) : std::runtime_error(what) {}
};

struct EvalReport {
    corpus::Task task;
    std::vector<std::vector<int64_t>> confusion;  // [true label][predicted]
    std::vector<double> per_class_accuracy;       // recall per class
    double overall_accuracy = 0;                  // micro: correct / total
    int64_t n_test = 0;
};

namespace detail {

inline EvalReport report_from_confusion(std::vector<std::vector<int64_t>> confusion,
                                        const corpus::Task& task) {
    EvalReport report;
    report.task = task;
    report.confusion = std::move(confusion);
    const auto k = report.confusion.size();
    report.per_class_accuracy.resize(k, 0.0);
    int64_t correct = 0;
    for (size_t c = 0; c < k; ++c) {
        int64_t row_total = 0;
        for (int64_t v : report.confusion[c]) row_total += v;
        report.per_class_accuracy[c] =
            row_total == 0 ? 0.0
                           : static_cast<double>(report.confusion[c][c]) / static_cast<double>(row_total);
        correct += report.confusion[c][c];
        report.n_test += row_total;
    }
    report.overall_accuracy =
        report.n_test == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(report.n_test);
    return report;
}

}  // namespace detail

using PredictFn = std::function<int(const corpus::LabeledExample&)>;

inline EvalReport evaluate(const PredictFn& predict, std::span<const corpus::LabeledExample> test,
                           const corpus::Task& task) {
    if (test.empty()) throw EmptyTestSet("evaluate: empty test set");
    std::vector<std::vector<int64_t>> confusion(
        static_cast<size_t>(task.class_count),
        std::vector<int64_t>(static_cast<size_t>(task.class_count), 0));
    for (const auto& example : test) {
        const int predicted = predict(example);
        ++confusion[static_cast<size_t>(example.label)][static_cast<size_t>(predicted)];
    }
    return detail::report_from_confusion(std::move(confusion), task);
}

// Evaluates (prediction, label) pairs directly; used when predictions were
// computed elsewhere, e.g. from cached member votes.
inline EvalReport evaluate_pairs(std::span<const int> predictions, std::span<const int> labels,
                                 const corpus::Task& task) {
    if (labels.empty()) throw EmptyTestSet("evaluate: empty test set");
    std::vector<std::vector<int64_t>> confusion(
        static_cast<size_t>(task.class_count),
        std::vector<int64_t>(static_cast<size_t>(task.class_count), 0));
    for (size_t i = 0; i < labels.size(); ++i)
        ++confusion[static_cast<size_t>(labels[i])][static_cast<size_t>(predictions[i])];
    return detail::report_from_confusion(std::move(confusion), task);
}

// --- committee size curve ---------------------------------------------------

struct CurvePoint {
    int committee_size = 0;
    double accuracy_mean = 0;
    double accuracy_std = 0;
};

// Cached per-member test predictions, the input to the curve computation.
struct MemberVotes {
    std::vector<std::vector<int>> votes;                        // [member][example]
    std::vector<std::vector<std::vector<double>>> probs;        // [member][example][class]
    std::vector<int> labels;                                    // [example]
};

template <class Scalar>
MemberVotes member_votes(const ensemble::Committee<Scalar>& committee,
                         std::span<const std::map<int, emb::SentenceMatrix<Scalar>>> prepared,
                         std::span<const int> labels) {
    MemberVotes mv;
    mv.labels.assign(labels.begin(), labels.end());
    const size_t members = committee.members.size();
    mv.votes.assign(members, std::vector<int>(prepared.size(), 0));
    mv.probs.assign(members, {});
    for (size_t m = 0; m < members; ++m) {
        const auto& member = committee.members[m];
        mv.probs[m].resize(prepared.size());
        for (size_t i = 0; i < prepared.size(); ++i) {
            auto it = prepared[i].find(member.config.embedding_dim);
            if (it == prepared[i].end())
                throw ensemble::MissingDimension("no sentence matrix for embedding dimension " +
                                                 std::to_string(member.config.embedding_dim));
            std::vector<Scalar> probs;
            mv.votes[m][i] = nn::predict_class(member, it->second, &probs);
            mv.probs[m][i].assign(probs.begin(), probs.end());
        }
    }
    return mv;
}

inline double subset_accuracy(const MemberVotes& mv, std::span<const size_t> subset) {
    const size_t n = mv.labels.size();
    size_t correct = 0;
    std::vector<int> votes(subset.size());
    std::vector<std::vector<double>> probs(subset.size());
    for (size_t i = 0; i < n; ++i) {
        for (size_t s = 0; s < subset.size(); ++s) {
            votes[s] = mv.votes[subset[s]][i];
            probs[s] = mv.probs[subset[s]][i];
        }
        if (ensemble::majority_vote<double>(votes, probs) == mv.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

// For each requested size k the overall accuracy is averaged over
// trials_per_size seeded random k-subsets. The full committee is evaluated
// exactly once, and k=1 with trials equal to the member count enumerates
// the members exhaustively.
inline std::vector<CurvePoint> committee_curve_from_votes(const MemberVotes& mv,
                                                          std::span<const int> sizes,
                                                          int trials_per_size, uint64_t seed) {
    const auto member_count = mv.votes.size();
    if (mv.labels.empty()) throw EmptyTestSet("committee_curve: empty test set");
    std::vector<CurvePoint> curve;
    std::vector<size_t> pool(member_count);
    for (int k : sizes) {
        if (k < 1 || static_cast<size_t>(k) > member_count)
            throw SizeExceedsCommittee("committee size " + std::to_string(k) + " not in [1, " +
                                       std::to_string(member_count) + "]");
        std::vector<double> accuracies;
        if (static_cast<size_t>(k) == member_count) {
            for (size_t i = 0; i < member_count; ++i) pool[i] = i;
            accuracies.push_back(subset_accuracy(mv, pool));
        } else if (k == 1 && static_cast<size_t>(trials_per_size) == member_count) {
            for (size_t m = 0; m < member_count; ++m) {
                size_t single[1] = {m};
                accuracies.push_back(subset_accuracy(mv, single));
            }
        } else {
            Rng rng(mix_seed(seed, static_cast<uint64_t>(k)));
            for (int trial = 0; trial < trials_per_size; ++trial) {
                for (size_t i = 0; i < member_count; ++i) pool[i] = i;
                for (int s = 0; s < k; ++s) {
                    const size_t j = static_cast<size_t>(s) + rng.below(member_count - static_cast<size_t>(s));
                    std::swap(pool[static_cast<size_t>(s)], pool[j]);
                }
                accuracies.push_back(
                    subset_accuracy(mv, std::span<const size_t>(pool.data(), static_cast<size_t>(k))));
            }
        }
        CurvePoint point;
        point.committee_size = k;
        double mean = 0;
        for (double a : accuracies) mean += a;
        mean /= static_cast<double>(accuracies.size());
        double var = 0;
        for (double a : accuracies) var += (a - mean) * (a - mean);
        var /= static_cast<double>(accuracies.size());
        point.accuracy_mean = mean;
        point.accuracy_std = std::sqrt(var);
        curve.push_back(point);
    }
    return curve;
}

template <class Scalar>
std::vector<CurvePoint> committee_curve(
    const ensemble::Committee<Scalar>& committee,
    std::span<const std::map<int, emb::SentenceMatrix<Scalar>>> prepared,
    std::span<const int> labels, std::span<const int> sizes, int trials_per_size, uint64_t seed) {
    return committee_curve_from_votes(member_votes(committee, prepared, labels), sizes,
                                      trials_per_size, seed);
}

// --- output formats -----------------------------------------------------------

inline nlohmann::json report_to_json(const EvalReport& report, const std::string& method) {
    nlohmann::json j;
    j["method"] = method;
    j["task"] = corpus::task_name(report.task);
    j["n_test"] = report.n_test;
    j["overall_accuracy"] = report.overall_accuracy;
    j["per_class_accuracy"] = report.per_class_accuracy;
    j["confusion"] = report.confusion;
    return j;
}

// Aligned text table with one row per method, mirroring the per-class +
// overall column layout of the result tables.
inline std::string report_table(std::span<const std::pair<std::string, EvalReport>> rows) {
    if (rows.empty()) return "";
    const auto& task = rows.front().second.task;
    std::ostringstream out;
    size_t method_width = 6;
    for (const auto& [name, _] : rows) method_width = std::max(method_width, name.size());
    char buf[64];
    out << std::string(method_width, ' ').replace(0, 6, "Method");
    if (task.kind == corpus::TaskKind::Binary) {
        out << "  ADR accuracy, %  Non-ADR accuracy, %";
    } else {
        for (int c = 1; c <= task.class_count; ++c) {
            std::snprintf(buf, sizeof buf, "  Class %d", c);
            out << buf;
        }
    }
    out << "  Overall, %\n";
    for (const auto& [name, report] : rows) {
        out << name << std::string(method_width - name.size(), ' ');
        if (task.kind == corpus::TaskKind::Binary) {
            std::snprintf(buf, sizeof buf, "  %15.2f  %19.2f", 100.0 * report.per_class_accuracy[0],
                          100.0 * report.per_class_accuracy[1]);
            out << buf;
        } else {
            for (double acc : report.per_class_accuracy) {
                std::snprintf(buf, sizeof buf, "  %7.2f", 100.0 * acc);
                out << buf;
            }
        }
        std::snprintf(buf, sizeof buf, "  %10.2f\n", 100.0 * report.overall_accuracy);
        out << buf;
    }
    return out.str();
}

inline std::string curve_csv(std::span<const CurvePoint> curve) {
    std::ostringstream out;
    out << "k,accuracy_mean,accuracy_std\n";
    char buf[96];
    for (const auto& point : curve) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", point.committee_size,
                      point.accuracy_mean, point.accuracy_std);
        out << buf;
    }
    return out.str();
}

}  // namespace adrc::eval
