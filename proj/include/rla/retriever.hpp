#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rla/chunker.hpp"
#include "rla/errors.hpp"
#include "rla/text.hpp"

namespace rla {

inline constexpr std::string_view kIndexMagic = "RLAIDX1";

struct Posting {
    std::uint32_t chunk = 0;  // position in InvertedIndex::chunks
    std::uint32_t tf = 0;
};

/// Okapi BM25 index over a chunk collection. Terms are the chunking
/// tokenizer's tokens, lowercased (ASCII); no stemming or stopword removal.
/// Immutable after build; retrieval is read-only and thread-safe.
struct InvertedIndex {
    std::vector<Chunk> chunks;
    std::map<std::string, std::vector<Posting>> postings;
    std::map<std::string, std::uint32_t> doc_freq;
    std::vector<std::uint32_t> chunk_lengths;
    double avg_chunk_length = 0.0;
    std::size_t n_chunks = 0;
    double k1 = 1.2;
    double b = 0.75;
    std::string tokenizer_id = "whitespace";

    /// Non-negative variant: ln(1 + (N - df + 0.5) / (df + 0.5)).
    double idf(const std::string& term) const {
        auto it = doc_freq.find(term);
        if (it == doc_freq.end()) return 0.0;
        const double df = it->second;
        const double n = static_cast<double>(n_chunks);
        return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    }
};

struct RetrievalEntry {
    Chunk chunk;
    double score = 0.0;
};

/// Top-k chunks, scores non-increasing, ties broken by ascending chunk_id.
struct RetrievalResult {
    std::vector<RetrievalEntry> entries;
    std::string query;
    std::size_t k_requested = 0;

    bool empty() const { return entries.empty(); }
};

inline std::vector<std::string> index_terms(std::string_view text,
                                            const std::string& tokenizer_id) {
    std::vector<std::string> terms;
    for (const auto& span : tokenize(text, tokenizer_id))
        terms.push_back(ascii_lower(text.substr(span.begin, span.end - span.begin)));
    return terms;
}

inline InvertedIndex build_index(std::vector<Chunk> chunks, double k1 = 1.2, double b = 0.75,
                                 const std::string& tokenizer_id = "whitespace") {
    if (chunks.empty()) throw ConfigError("cannot build an index over zero chunks");
    if (b < 0.0 || b > 1.0) throw ConfigError("bm25 b must be within [0, 1]");
    if (k1 < 0.0) throw ConfigError("bm25 k1 must be >= 0");

    InvertedIndex idx;
    idx.k1 = k1;
    idx.b = b;
    idx.tokenizer_id = tokenizer_id;
    idx.chunks = std::move(chunks);
    idx.n_chunks = idx.chunks.size();
    idx.chunk_lengths.reserve(idx.n_chunks);

    std::size_t total_len = 0;
    for (std::size_t c = 0; c < idx.chunks.size(); ++c) {
        const auto& chunk = idx.chunks[c];
        idx.chunk_lengths.push_back(static_cast<std::uint32_t>(chunk.token_count));
        total_len += chunk.token_count;
        std::map<std::string, std::uint32_t> tf;
        for (auto& term : index_terms(chunk.text, tokenizer_id)) ++tf[std::move(term)];
        for (auto& [term, count] : tf) {
            idx.postings[term].push_back({static_cast<std::uint32_t>(c), count});
            ++idx.doc_freq[term];
        }
    }
    idx.avg_chunk_length = static_cast<double>(total_len) / static_cast<double>(idx.n_chunks);
    return idx;
}

/// score(q, c) = sum over query tokens t of
///   idf(t) * tf(t,c) * (k1+1) / (tf(t,c) + k1 * (1 - b + b * |c| / avg)).
/// Chunks with zero score are excluded; an unmatched query yields an empty
/// result.
inline RetrievalResult retrieve(const InvertedIndex& idx, std::string_view query, std::size_t k) {
    if (k < 1) throw ConfigError("retrieval k must be >= 1");
    RetrievalResult result;
    result.query = std::string(query);
    result.k_requested = k;

    std::map<std::string, std::size_t> query_tf;
    for (auto& term : index_terms(query, idx.tokenizer_id)) ++query_tf[std::move(term)];

    std::vector<double> scores(idx.n_chunks, 0.0);
    std::vector<bool> touched(idx.n_chunks, false);
    for (const auto& [term, qtf] : query_tf) {
        auto it = idx.postings.find(term);
        if (it == idx.postings.end()) continue;
        const double idf = idx.idf(term);
        for (const auto& posting : it->second) {
            const double tf = posting.tf;
            const double norm =
                1.0 - idx.b + idx.b * idx.chunk_lengths[posting.chunk] / idx.avg_chunk_length;
            scores[posting.chunk] +=
                static_cast<double>(qtf) * idf * tf * (idx.k1 + 1.0) / (tf + idx.k1 * norm);
            touched[posting.chunk] = true;
        }
    }

    std::vector<std::size_t> hits;
    for (std::size_t c = 0; c < scores.size(); ++c) {
        if (touched[c] && scores[c] > 0.0) hits.push_back(c);
    }
    std::sort(hits.begin(), hits.end(), [&](std::size_t x, std::size_t y) {
        if (scores[x] != scores[y]) return scores[x] > scores[y];
        return idx.chunks[x].chunk_id < idx.chunks[y].chunk_id;
    });
    if (hits.size() > k) hits.resize(k);
    for (std::size_t c : hits) result.entries.push_back({idx.chunks[c], scores[c]});
    return result;
}

/// Single-file persistence: magic line, meta line, then one chunk per line.
/// Postings are rebuilt on load, which is deterministic for a fixed
/// tokenizer.
inline void save_index(const InvertedIndex& idx, std::ostream& out) {
    out << kIndexMagic << '\n';
    nlohmann::json meta{{"k1", idx.k1},
                        {"b", idx.b},
                        {"n_chunks", idx.n_chunks},
                        {"tokenizer_id", idx.tokenizer_id}};
    out << meta.dump() << '\n';
    for (const auto& chunk : idx.chunks) out << nlohmann::json(chunk).dump() << '\n';
}

inline InvertedIndex load_index(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || trim(line) != kIndexMagic)
        throw ConfigError("not an index file: missing RLAIDX1 header");
    if (!std::getline(in, line)) throw ConfigError("index file truncated: missing meta line");
    nlohmann::json meta = nlohmann::json::parse(line, nullptr, false);
    if (meta.is_discarded()) throw ConfigError("index file corrupt: bad meta line");

    std::vector<Chunk> chunks;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded()) throw ConfigError("index file corrupt: bad chunk line");
        chunks.push_back(rec.get<Chunk>());
    }
    auto idx = build_index(std::move(chunks), meta.value("k1", 1.2), meta.value("b", 0.75),
                           meta.value("tokenizer_id", std::string("whitespace")));
    if (meta.contains("n_chunks") && meta["n_chunks"].get<std::size_t>() != idx.n_chunks)
        throw ConfigError("index file corrupt: chunk count mismatch");
    return idx;
}

}  // namespace rla
