#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rla/corpus.hpp"
#include "rla/errors.hpp"
#include "rla/text.hpp"

namespace rla {

/// A retrievable unit. text is the verbatim source substring
/// [char_start, char_end) of its document.
struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::size_t ordinal = 0;
    std::size_t char_start = 0;
    std::size_t char_end = 0;
    std::string text;
    std::size_t token_count = 0;
};

enum class ChunkStrategy { Fixed, Semantic };

struct ChunkingConfig {
    ChunkStrategy strategy = ChunkStrategy::Fixed;
    std::size_t max_tokens_per_chunk = 256;
    std::size_t stride = 128;  // fixed strategy; overlap = max_tokens - stride
    std::string tokenizer_id = "whitespace";
};

inline void validate(const ChunkingConfig& cfg) {
    if (cfg.max_tokens_per_chunk < 1) throw ConfigError("max_tokens_per_chunk must be >= 1");
    if (cfg.stride < 1) throw ConfigError("stride must be >= 1");
    if (cfg.stride > cfg.max_tokens_per_chunk)
        throw ConfigError("stride must not exceed max_tokens_per_chunk");
}

using TokenizerFn = std::function<std::vector<TokenSpan>(std::string_view)>;

namespace detail {

/// One span per code point; malformed bytes become single-byte tokens.
inline std::vector<TokenSpan> codepoint_spans(std::string_view text) {
    std::vector<TokenSpan> spans;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t begin = pos;
        if (!utf8_next(text, pos)) ++pos;
        spans.push_back({begin, pos});
    }
    return spans;
}

inline std::map<std::string, TokenizerFn>& tokenizer_registry() {
    static std::map<std::string, TokenizerFn> registry{
        {"whitespace", [](std::string_view t) { return word_spans(t); }},
        {"byte", [](std::string_view t) { return codepoint_spans(t); }},
    };
    return registry;
}

inline std::mutex& tokenizer_registry_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace detail

inline void register_tokenizer(const std::string& id, TokenizerFn fn) {
    std::lock_guard lock(detail::tokenizer_registry_mutex());
    detail::tokenizer_registry()[id] = std::move(fn);
}

/// Splits text into ordered, non-overlapping token spans.
inline std::vector<TokenSpan> tokenize(std::string_view text, const std::string& tokenizer_id) {
    TokenizerFn fn;
    {
        std::lock_guard lock(detail::tokenizer_registry_mutex());
        auto& registry = detail::tokenizer_registry();
        auto it = registry.find(tokenizer_id);
        if (it == registry.end()) throw ConfigError("unknown tokenizer id '" + tokenizer_id + "'");
        fn = it->second;
    }
    return fn(text);
}

namespace detail {

inline std::string chunk_id_for(const std::string& doc_id, std::size_t ordinal) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06zu", ordinal);
    return doc_id + "#" + buf;
}

inline Chunk make_chunk(const Document& doc, std::size_t ordinal, std::string_view doc_text,
                        const std::vector<TokenSpan>& tokens, std::size_t tok_begin,
                        std::size_t tok_end) {
    Chunk c;
    c.doc_id = doc.id;
    c.ordinal = ordinal;
    c.chunk_id = chunk_id_for(doc.id, ordinal);
    c.char_start = tokens[tok_begin].begin;
    c.char_end = tokens[tok_end - 1].end;
    c.text = std::string(doc_text.substr(c.char_start, c.char_end - c.char_start));
    c.token_count = tok_end - tok_begin;
    return c;
}

/// Closing punctuation that may trail a sentence terminator.
inline bool is_closing_mark(std::string_view text, std::size_t pos, std::size_t& width) {
    if (pos >= text.size()) return false;
    char c = text[pos];
    if (c == '"' || c == '\'' || c == ')' || c == ']' || c == '}') {
        width = 1;
        return true;
    }
    // U+2019, U+201D, U+00BB
    if (text.compare(pos, 3, "’") == 0 || text.compare(pos, 3, "”") == 0) {
        width = 3;
        return true;
    }
    if (text.compare(pos, 2, "»") == 0) {
        width = 2;
        return true;
    }
    return false;
}

inline bool is_terminator(char c) { return c == '.' || c == '?' || c == '!'; }

}  // namespace detail

/// Byte offsets immediately after each sentence end: a '.', '?' or '!'
/// (plus trailing closing quotes/brackets) followed by whitespace or
/// end-of-text.
inline std::vector<std::size_t> sentence_boundaries(std::string_view text) {
    std::vector<std::size_t> ends;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (!detail::is_terminator(text[i])) continue;
        std::size_t j = i + 1;
        std::size_t width = 0;
        while (detail::is_closing_mark(text, j, width)) j += width;
        bool at_end = j >= text.size();
        bool before_space = false;
        if (!at_end) {
            std::size_t pos = j;
            if (auto cp = utf8_next(text, pos)) before_space = is_unicode_space(*cp);
        }
        if (at_end || before_space) {
            ends.push_back(j);
            i = j - 1;
        }
    }
    return ends;
}

/// Checks that text ends with a sentence terminator, permitting trailing
/// closing quotes/brackets.
inline bool ends_sentence(std::string_view text) {
    std::size_t end = text.size();
    while (end > 0) {
        bool stripped = false;
        for (std::size_t w : {std::size_t{3}, std::size_t{2}, std::size_t{1}}) {
            if (end >= w) {
                std::size_t width = 0;
                if (detail::is_closing_mark(text, end - w, width) && width == w) {
                    end -= w;
                    stripped = true;
                    break;
                }
            }
        }
        if (!stripped) break;
    }
    return end > 0 && detail::is_terminator(text[end - 1]);
}

/// Sliding token windows of max_tokens at multiples of stride. Generation
/// stops after the first window clipped by the document end: any later
/// window would be a pure suffix of it.
inline std::vector<Chunk> chunk_fixed(const Document& doc, const ChunkingConfig& cfg) {
    validate(cfg);
    auto tokens = tokenize(doc.text, cfg.tokenizer_id);
    if (tokens.empty()) throw ConfigError("cannot chunk empty document '" + doc.id + "'");

    std::vector<Chunk> chunks;
    const std::size_t n = tokens.size();
    for (std::size_t i = 0;; ++i) {
        const std::size_t start = i * cfg.stride;
        if (start >= n) break;
        const std::size_t want_end = start + cfg.max_tokens_per_chunk;
        const std::size_t end = std::min(want_end, n);
        chunks.push_back(detail::make_chunk(doc, chunks.size(), doc.text, tokens, start, end));
        if (want_end > n) break;
    }
    return chunks;
}

/// Greedy packing of whole sentences into chunks of at most max_tokens.
/// A single sentence longer than max_tokens is hard-split at token
/// boundaries.
inline std::vector<Chunk> chunk_semantic(const Document& doc, const ChunkingConfig& cfg) {
    validate(cfg);
    auto tokens = tokenize(doc.text, cfg.tokenizer_id);
    if (tokens.empty()) throw ConfigError("cannot chunk empty document '" + doc.id + "'");

    // Sentence k owns tokens (prev_end, boundary_token]; a trailing piece
    // with no terminator forms a final sentence.
    auto boundaries = sentence_boundaries(doc.text);
    std::vector<std::size_t> sentence_end_tokens;  // exclusive token indices
    {
        std::size_t b = 0;
        for (std::size_t t = 0; t < tokens.size() && b < boundaries.size(); ++t) {
            if (tokens[t].end >= boundaries[b]) {
                sentence_end_tokens.push_back(t + 1);
                while (b < boundaries.size() && boundaries[b] <= tokens[t].end) ++b;
            }
        }
        if (sentence_end_tokens.empty() || sentence_end_tokens.back() != tokens.size())
            sentence_end_tokens.push_back(tokens.size());
    }

    const std::size_t max_tokens = cfg.max_tokens_per_chunk;
    std::vector<Chunk> chunks;
    std::size_t pack_begin = 0;  // token index of the open pack
    std::size_t cursor = 0;

    auto flush = [&](std::size_t end_token) {
        if (end_token > pack_begin) {
            chunks.push_back(
                detail::make_chunk(doc, chunks.size(), doc.text, tokens, pack_begin, end_token));
            pack_begin = end_token;
        }
    };

    for (std::size_t s = 0; s < sentence_end_tokens.size(); ++s) {
        const std::size_t sent_end = sentence_end_tokens[s];
        const std::size_t sent_len = sent_end - cursor;
        if (sent_len > max_tokens) {
            flush(cursor);
            // Hard split the oversized sentence; the remainder keeps packing.
            while (sent_end - pack_begin > max_tokens) flush(pack_begin + max_tokens);
        } else if (sent_end - pack_begin > max_tokens) {
            flush(cursor);
        }
        cursor = sent_end;
    }
    flush(cursor);
    return chunks;
}

inline std::vector<Chunk> chunk_document(const Document& doc, const ChunkingConfig& cfg) {
    return cfg.strategy == ChunkStrategy::Fixed ? chunk_fixed(doc, cfg) : chunk_semantic(doc, cfg);
}

inline std::vector<Chunk> chunk_datastore(const Datastore& ds, const ChunkingConfig& cfg) {
    std::vector<Chunk> all;
    for (const auto& doc : ds.documents) {
        auto chunks = chunk_document(doc, cfg);
        all.insert(all.end(), std::make_move_iterator(chunks.begin()),
                   std::make_move_iterator(chunks.end()));
    }
    return all;
}

inline void to_json(nlohmann::json& j, const Chunk& c) {
    j = nlohmann::json{{"chunk_id", c.chunk_id},     {"doc_id", c.doc_id},
                       {"ordinal", c.ordinal},       {"char_start", c.char_start},
                       {"char_end", c.char_end},     {"token_count", c.token_count},
                       {"text", c.text}};
}

inline void from_json(const nlohmann::json& j, Chunk& c) {
    j.at("chunk_id").get_to(c.chunk_id);
    j.at("doc_id").get_to(c.doc_id);
    j.at("ordinal").get_to(c.ordinal);
    j.at("char_start").get_to(c.char_start);
    j.at("char_end").get_to(c.char_end);
    j.at("token_count").get_to(c.token_count);
    j.at("text").get_to(c.text);
}

inline void write_chunks_jsonl(const std::vector<Chunk>& chunks, std::ostream& out) {
    for (const auto& c : chunks) out << nlohmann::json(c).dump() << '\n';
}

}  // namespace rla
