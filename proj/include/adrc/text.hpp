#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adrc/io.hpp"

// Tokenization and the frequency-filtered vocabulary shared by the
// embedding trainer and the bag-of-words features.

namespace adrc::text {

struct EmptyVocabulary : std::runtime_error {
    explicit EmptyVocabulary(const std::string& what) : std::runtime_error(what) {}
};

using TokenSequence = std::vector<std::string>;

namespace detail {

// Decodes one UTF-8 code point at `i`; returns (code point, byte length).
// Malformed bytes decode as themselves with length 1 so tokenization never fails.
inline std::pair<uint32_t, size_t> decode_utf8(std::string_view s, size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) return {b0, 1};
    auto cont = [&](size_t k) {
        return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xc0) == 0x80;
    };
    auto cb = [&](size_t k) { return static_cast<uint32_t>(static_cast<unsigned char>(s[i + k]) & 0x3f); };
    if ((b0 & 0xe0) == 0xc0 && cont(1)) return {(uint32_t(b0 & 0x1f) << 6) | cb(1), 2};
    if ((b0 & 0xf0) == 0xe0 && cont(1) && cont(2))
        return {(uint32_t(b0 & 0x0f) << 12) | (cb(1) << 6) | cb(2), 3};
    if ((b0 & 0xf8) == 0xf0 && cont(1) && cont(2) && cont(3))
        return {(uint32_t(b0 & 0x07) << 18) | (cb(1) << 12) | (cb(2) << 6) | cb(3), 4};
    return {b0, 1};
}

inline bool is_space_cp(uint32_t cp) {
    switch (cp) {
        case ' ': case '\t': case '\n': case '\r': case '\f': case '\v':
        case 0x0085: case 0x00a0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202f: case 0x205f: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200a;
    }
}

inline bool is_ascii_punct(char c) {
    auto u = static_cast<unsigned char>(c);
    return (u >= '!' && u <= '/') || (u >= ':' && u <= '@') || (u >= '[' && u <= '`') ||
           (u >= '{' && u <= '~');
}

}  // namespace detail

// Lowercases (ASCII), splits on Unicode whitespace, strips leading/trailing
// ASCII punctuation per token, and drops tokens that were punctuation only.
// Numerals are kept. Empty text yields an empty sequence.
inline TokenSequence tokenize(std::string_view input) {
    TokenSequence tokens;
    std::string word;
    auto flush = [&] {
        size_t begin = 0, end = word.size();
        while (begin < end && detail::is_ascii_punct(word[begin])) ++begin;
        while (end > begin && detail::is_ascii_punct(word[end - 1])) --end;
        if (end > begin) tokens.emplace_back(word.substr(begin, end - begin));
        word.clear();
    };
    size_t i = 0;
    while (i < input.size()) {
        auto [cp, len] = detail::decode_utf8(input, i);
        if (detail::is_space_cp(cp)) {
            flush();
        } else {
            for (size_t k = 0; k < len; ++k) {
                char c = input[i + k];
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
                word.push_back(c);
            }
        }
        i += len;
    }
    flush();
    return tokens;
}

// Dense word<->index maps plus corpus frequencies. Indices are assigned by
// descending frequency, ties broken lexicographically.
struct Vocabulary {
    std::vector<std::string> words;    // index -> word
    std::vector<int64_t> frequencies;  // index -> corpus frequency
    std::unordered_map<std::string, int32_t> index;
    int64_t min_count = 1;

    int32_t size() const { return static_cast<int32_t>(words.size()); }

    std::optional<int32_t> lookup(std::string_view word) const {
        auto it = index.find(std::string(word));
        if (it == index.end()) return std::nullopt;
        return it->second;
    }
};

inline Vocabulary build_vocabulary(const std::vector<TokenSequence>& corpus, int64_t min_count) {
    std::unordered_map<std::string, int64_t> counts;
    for (const auto& seq : corpus)
        for (const auto& token : seq) ++counts[token];

    std::vector<std::pair<std::string, int64_t>> kept;
    kept.reserve(counts.size());
    for (auto& [word, freq] : counts)
        if (freq >= min_count) kept.emplace_back(word, freq);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (kept.empty())
        throw EmptyVocabulary("no word reaches min_count=" + std::to_string(min_count));

    Vocabulary vocab;
    vocab.min_count = min_count;
    vocab.words.reserve(kept.size());
    vocab.frequencies.reserve(kept.size());
    for (auto& [word, freq] : kept) {
        vocab.index.emplace(word, static_cast<int32_t>(vocab.words.size()));
        vocab.words.push_back(std::move(word));
        vocab.frequencies.push_back(freq);
    }
    return vocab;
}

// Out-of-vocabulary tokens are dropped, order preserved.
inline std::vector<int32_t> encode(const TokenSequence& seq, const Vocabulary& vocab) {
    std::vector<int32_t> out;
    out.reserve(seq.size());
    for (const auto& token : seq) {
        auto it = vocab.index.find(token);
        if (it != vocab.index.end()) out.push_back(it->second);
    }
    return out;
}

// TSV persistence: word<TAB>index<TAB>frequency, sorted by index.
inline void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
    std::ostringstream out;
    for (int32_t i = 0; i < vocab.size(); ++i)
        out << vocab.words[i] << '\t' << i << '\t' << vocab.frequencies[i] << '\n';
    io::write_file(path, out.str());
}

inline Vocabulary load_vocabulary(const std::filesystem::path& path) {
    std::istringstream in(io::read_file(path));
    Vocabulary vocab;
    std::string line;
    int64_t min_freq = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        size_t t1 = line.find('\t');
        size_t t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw io::FileUnreadable("malformed vocabulary line: " + line);
        std::string word = line.substr(0, t1);
        int32_t idx = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
        int64_t freq = std::stoll(line.substr(t2 + 1));
        if (idx != vocab.size())
            throw io::FileUnreadable("vocabulary indices out of order at " + word);
        vocab.index.emplace(word, idx);
        vocab.words.push_back(std::move(word));
        vocab.frequencies.push_back(freq);
        min_freq = min_freq < 0 ? freq : std::min(min_freq, freq);
    }
    if (vocab.words.empty()) throw EmptyVocabulary("vocabulary file is empty: " + path.string());
    vocab.min_count = 1;  // actual filter threshold is not stored; frequencies are
    return vocab;
}

}  // namespace adrc::text
