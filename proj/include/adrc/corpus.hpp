#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "adrc/csv.hpp"
#include "adrc/io.hpp"
#include "adrc/random.hpp"
#include "adrc/text.hpp"

// Review ingestion: corpus files -> labeled examples -> stratified splits.

namespace adrc::corpus {

using io::FileUnreadable;

struct CorpusRejected : std::runtime_error {
    explicit CorpusRejected(const std::string& what) : std::runtime_error(what) {}
};
struct ClassTooSmall : std::runtime_error {
    explicit ClassTooSmall(const std::string& what) : std::runtime_error(what) {}
};

// One forum review. Only `comments` feeds the classifiers; the remaining
// fields are carried through for provenance.
struct ReviewRecord {
    std::string drug_name;
    int rating = 0;  // 1..5
    std::string reason;
    std::string side_effects;
    std::string comments;
    std::string sex;
    std::string age;
    std::string duration_dosage;
    std::string date_added;

    bool operator==(const ReviewRecord&) const = default;
};

enum class TaskKind { Binary, MultiClass };

struct Task {
    TaskKind kind = TaskKind::Binary;
    int class_count = 2;

    static Task binary() { return {TaskKind::Binary, 2}; }
    static Task multi_class() { return {TaskKind::MultiClass, 5}; }

    bool operator==(const Task&) const = default;
};

inline Task task_from_name(std::string_view name) {
    if (name == "binary") return Task::binary();
    if (name == "multi") return Task::multi_class();
    throw std::invalid_argument("unknown task: " + std::string(name) + " (want binary|multi)");
}

inline const char* task_name(const Task& task) {
    return task.kind == TaskKind::Binary ? "binary" : "multi";
}

struct LabeledExample {
    text::TokenSequence tokens;
    int label = 0;  // 0-based class index
    int source_rating = 0;

    bool operator==(const LabeledExample&) const = default;
};

struct SplitDataset {
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> test;
    uint64_t seed = 0;
};

struct MalformedRow {
    size_t row_index;  // 0-based over data rows (header excluded)
    std::string reason;
};

struct ParseResult {
    std::vector<ReviewRecord> records;
    std::vector<MalformedRow> rejected;
};

inline const std::vector<std::string>& corpus_header() {
    static const std::vector<std::string> header = {
        "drug_name", "rating",        "reason", "side_effects", "comments",
        "sex",       "age",           "duration_dosage", "date_added"};
    return header;
}

namespace detail {

inline std::optional<int> parse_rating(const std::string& s) {
    if (s.empty()) return std::nullopt;
    size_t pos = 0;
    int value = 0;
    try {
        value = std::stoi(s, &pos);
    } catch (const std::exception&) {
        return std::nullopt;
    }
    if (pos != s.size()) return std::nullopt;
    return value;
}

}  // namespace detail

// Parses a corpus CSV. Structurally bad rows and out-of-range ratings are
// collected as MalformedRow; more than 10% rejections aborts the run.
inline ParseResult parse_corpus(const std::filesystem::path& path) {
    std::string content;
    try {
        content = io::read_file(path);
    } catch (const FileUnreadable&) {
        throw;
    }
    std::vector<std::vector<std::string>> rows;
    try {
        rows = parse_csv(content);
    } catch (const CsvError& e) {
        throw FileUnreadable("corpus file " + path.string() + " is not well-formed CSV: " + e.what());
    }
    if (rows.empty()) throw FileUnreadable("corpus file " + path.string() + " is empty");
    if (rows.front() != corpus_header())
        throw FileUnreadable("corpus file " + path.string() + " has an unexpected header row");

    ParseResult result;
    const size_t data_rows = rows.size() - 1;
    result.records.reserve(data_rows);
    for (size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const size_t data_index = r - 1;
        if (row.size() != corpus_header().size()) {
            result.rejected.push_back({data_index, "expected 9 fields, got " + std::to_string(row.size())});
            continue;
        }
        auto rating = detail::parse_rating(row[1]);
        if (!rating || *rating < 1 || *rating > 5) {
            result.rejected.push_back({data_index, "rating '" + row[1] + "' not an integer in 1..5"});
            continue;
        }
        ReviewRecord rec;
        rec.drug_name = row[0];
        rec.rating = *rating;
        rec.reason = row[2];
        rec.side_effects = row[3];
        rec.comments = row[4];
        rec.sex = row[5];
        rec.age = row[6];
        rec.duration_dosage = row[7];
        rec.date_added = row[8];
        result.records.push_back(std::move(rec));
    }
    if (data_rows > 0 && result.rejected.size() * 10 > data_rows) {
        throw CorpusRejected("rejected " + std::to_string(result.rejected.size()) + " of " +
                             std::to_string(data_rows) + " rows (>10%), wrong file format?");
    }
    return result;
}

inline std::string serialize_corpus(const std::vector<ReviewRecord>& records) {
    std::ostringstream out;
    write_csv_row(out, corpus_header());
    for (const auto& rec : records) {
        std::vector<std::string> row = {rec.drug_name,
                                        std::to_string(rec.rating),
                                        rec.reason,
                                        rec.side_effects,
                                        rec.comments,
                                        rec.sex,
                                        rec.age,
                                        rec.duration_dosage,
                                        rec.date_added};
        write_csv_row(out, row);
    }
    return out.str();
}

// Binary: ratings {1,2} -> 0 (ADR), {4,5} -> 1, rating 3 ignored.
// MultiClass: rating r -> r-1.
inline std::optional<int> map_label(const ReviewRecord& record, const Task& task) {
    if (task.kind == TaskKind::MultiClass) return record.rating - 1;
    switch (record.rating) {
        case 1:
        case 2: return 0;
        case 4:
        case 5: return 1;
        default: return std::nullopt;  // rating 3
    }
}

using Tokenizer = std::function<text::TokenSequence(std::string_view)>;

struct BuildStats {
    size_t dropped_unlabeled = 0;   // rating 3 under the binary task
    size_t dropped_empty = 0;       // comments tokenized to nothing
};

// One example per record with a defined label and non-empty tokenized
// comments. Only the comments field is consumed.
inline std::vector<LabeledExample> build_examples(const std::vector<ReviewRecord>& records,
                                                  const Task& task, const Tokenizer& tokenizer,
                                                  BuildStats* stats = nullptr) {
    std::vector<LabeledExample> examples;
    examples.reserve(records.size());
    BuildStats local;
    for (const auto& rec : records) {
        auto label = map_label(rec, task);
        if (!label) {
            ++local.dropped_unlabeled;
            continue;
        }
        auto tokens = tokenizer(rec.comments);
        if (tokens.empty()) {
            ++local.dropped_empty;
            continue;
        }
        examples.push_back({std::move(tokens), *label, rec.rating});
    }
    if (stats) *stats = local;
    return examples;
}

// Per class c, train takes round(train_fraction * |c|) examples (half-up)
// and the remainder goes to test. Shuffling is seed-driven per class.
inline SplitDataset split_stratified(const std::vector<LabeledExample>& examples,
                                     double train_fraction, uint64_t seed) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw std::invalid_argument("train_fraction must be in (0,1)");

    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < examples.size(); ++i) by_class[examples[i].label].push_back(i);
    for (const auto& [label, idxs] : by_class)
        if (idxs.size() < 2)
            throw ClassTooSmall("class " + std::to_string(label) + " has only " +
                                std::to_string(idxs.size()) + " example(s)");

    SplitDataset split;
    split.seed = seed;
    for (auto& [label, idxs] : by_class) {
        Rng rng(mix_seed(seed, static_cast<uint64_t>(label)));
        // Fisher-Yates
        for (size_t i = idxs.size(); i > 1; --i) {
            size_t j = rng.below(i);
            std::swap(idxs[i - 1], idxs[j]);
        }
        auto train_count =
            static_cast<size_t>(std::floor(train_fraction * static_cast<double>(idxs.size()) + 0.5));
        for (size_t i = 0; i < idxs.size(); ++i)
            (i < train_count ? split.train : split.test).push_back(examples[idxs[i]]);
    }
    return split;
}

// --- split manifest persistence -------------------------------------------
//
// Two CSVs (train/test) with columns label,source_rating,tokens where tokens
// are space-joined (tokens never contain whitespace), plus a JSON sidecar
// with the seed, fraction and counts.

inline std::string serialize_examples(const std::vector<LabeledExample>& examples) {
    std::ostringstream out;
    static const std::vector<std::string> header = {"label", "source_rating", "tokens"};
    write_csv_row(out, header);
    std::string joined;
    for (const auto& ex : examples) {
        joined.clear();
        for (size_t i = 0; i < ex.tokens.size(); ++i) {
            if (i) joined.push_back(' ');
            joined += ex.tokens[i];
        }
        std::vector<std::string> row = {std::to_string(ex.label), std::to_string(ex.source_rating),
                                        joined};
        write_csv_row(out, row);
    }
    return out.str();
}

inline std::vector<LabeledExample> parse_examples(const std::string& content) {
    auto rows = parse_csv(content);
    if (rows.empty()) throw FileUnreadable("split file is empty");
    std::vector<LabeledExample> examples;
    examples.reserve(rows.size() - 1);
    for (size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != 3) throw FileUnreadable("split row " + std::to_string(r) + " malformed");
        LabeledExample ex;
        ex.label = std::stoi(row[0]);
        ex.source_rating = std::stoi(row[1]);
        std::istringstream toks(row[2]);
        std::string tok;
        while (toks >> tok) ex.tokens.push_back(tok);
        examples.push_back(std::move(ex));
    }
    return examples;
}

inline std::map<int, size_t> class_counts(const std::vector<LabeledExample>& examples) {
    std::map<int, size_t> counts;
    for (const auto& ex : examples) ++counts[ex.label];
    return counts;
}

struct SplitManifestInfo {
    Task task;
    double train_fraction = 0.8;
    uint64_t seed = 0;
    BuildStats stats;
    size_t malformed_rows = 0;
    size_t parsed_rows = 0;
};

inline void save_split(const SplitDataset& split, const SplitManifestInfo& info,
                       const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    io::write_file(dir / "train.csv", serialize_examples(split.train));
    io::write_file(dir / "test.csv", serialize_examples(split.test));

    nlohmann::json sidecar;
    sidecar["task"] = task_name(info.task);
    sidecar["class_count"] = info.task.class_count;
    sidecar["train_fraction"] = info.train_fraction;
    sidecar["seed"] = info.seed;
    auto counts_json = [](const std::map<int, size_t>& counts) {
        nlohmann::json j;
        for (const auto& [label, count] : counts) j[std::to_string(label)] = count;
        return j;
    };
    sidecar["train_class_counts"] = counts_json(class_counts(split.train));
    sidecar["test_class_counts"] = counts_json(class_counts(split.test));
    sidecar["dropped_unlabeled"] = info.stats.dropped_unlabeled;
    sidecar["dropped_empty_comments"] = info.stats.dropped_empty;
    sidecar["malformed_rows"] = info.malformed_rows;
    sidecar["parsed_rows"] = info.parsed_rows;
    io::write_file(dir / "split.json", sidecar.dump(2) + "\n");
}

inline SplitDataset load_split(const std::filesystem::path& dir, Task* task_out = nullptr) {
    SplitDataset split;
    split.train = parse_examples(io::read_file(dir / "train.csv"));
    split.test = parse_examples(io::read_file(dir / "test.csv"));
    auto sidecar = nlohmann::json::parse(io::read_file(dir / "split.json"));
    split.seed = sidecar.at("seed").get<uint64_t>();
    if (task_out) *task_out = task_from_name(sidecar.at("task").get<std::string>());
    return split;
}

}  // namespace adrc::corpus
