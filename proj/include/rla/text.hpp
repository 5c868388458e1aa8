#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rla {

/// Half-open [begin, end) byte range into some text.
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    bool operator==(const TokenSpan&) const = default;
};

namespace detail {
inline bool utf8_cont(unsigned char c) { return (c & 0xC0) == 0x80; }
}  // namespace detail

/// Decodes the code point starting at byte `pos` and advances `pos` past it.
/// Strict: overlong encodings, surrogates, and values above U+10FFFF are
/// rejected. Returns nullopt (pos untouched) on malformed input.
inline std::optional<char32_t> utf8_next(std::string_view s, std::size_t& pos) {
    if (pos >= s.size()) return std::nullopt;
    const auto* p = reinterpret_cast<const unsigned char*>(s.data()) + pos;
    const std::size_t left = s.size() - pos;
    unsigned char b0 = p[0];
    if (b0 < 0x80) {
        ++pos;
        return static_cast<char32_t>(b0);
    }
    if ((b0 & 0xE0) == 0xC0) {
        if (left < 2 || !detail::utf8_cont(p[1])) return std::nullopt;
        char32_t cp = ((b0 & 0x1Fu) << 6) | (p[1] & 0x3Fu);
        if (cp < 0x80) return std::nullopt;
        pos += 2;
        return cp;
    }
    if ((b0 & 0xF0) == 0xE0) {
        if (left < 3 || !detail::utf8_cont(p[1]) || !detail::utf8_cont(p[2])) return std::nullopt;
        char32_t cp = ((b0 & 0x0Fu) << 12) | ((p[1] & 0x3Fu) << 6) | (p[2] & 0x3Fu);
        if (cp < 0x800 || (cp >= 0xD800 && cp <= 0xDFFF)) return std::nullopt;
        pos += 3;
        return cp;
    }
    if ((b0 & 0xF8) == 0xF0) {
        if (left < 4 || !detail::utf8_cont(p[1]) || !detail::utf8_cont(p[2]) ||
            !detail::utf8_cont(p[3]))
            return std::nullopt;
        char32_t cp = ((b0 & 0x07u) << 18) | ((p[1] & 0x3Fu) << 12) | ((p[2] & 0x3Fu) << 6) |
                      (p[3] & 0x3Fu);
        if (cp < 0x10000 || cp > 0x10FFFF) return std::nullopt;
        pos += 4;
        return cp;
    }
    return std::nullopt;
}

inline bool utf8_valid(std::string_view s) {
    std::size_t pos = 0;
    while (pos < s.size()) {
        if (!utf8_next(s, pos)) return false;
    }
    return true;
}

/// Unicode White_Space property (the full set as of Unicode 15).
inline bool is_unicode_space(char32_t cp) {
    switch (cp) {
        case 0x0009:
        case 0x000A:
        case 0x000B:
        case 0x000C:
        case 0x000D:
        case 0x0020:
        case 0x0085:
        case 0x00A0:
        case 0x1680:
        case 0x2028:
        case 0x2029:
        case 0x202F:
        case 0x205F:
        case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

/// Byte spans of maximal runs of non-whitespace code points. Malformed bytes
/// are treated as opaque word characters so tokenization never throws.
inline std::vector<TokenSpan> word_spans(std::string_view text) {
    std::vector<TokenSpan> spans;
    std::size_t pos = 0;
    std::size_t word_begin = std::string_view::npos;
    while (pos < text.size()) {
        std::size_t cp_begin = pos;
        auto cp = utf8_next(text, pos);
        bool space;
        if (cp) {
            space = is_unicode_space(*cp);
        } else {
            space = false;
            ++pos;  // opaque byte
        }
        if (space) {
            if (word_begin != std::string_view::npos) {
                spans.push_back({word_begin, cp_begin});
                word_begin = std::string_view::npos;
            }
        } else if (word_begin == std::string_view::npos) {
            word_begin = cp_begin;
        }
    }
    if (word_begin != std::string_view::npos) spans.push_back({word_begin, text.size()});
    return spans;
}

inline std::size_t count_words(std::string_view text) { return word_spans(text).size(); }

inline std::vector<std::string_view> split_words(std::string_view text) {
    std::vector<std::string_view> out;
    for (const auto& s : word_spans(text)) out.push_back(text.substr(s.begin, s.end - s.begin));
    return out;
}

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    std::size_t b = 0;
    while (b < s.size() && (static_cast<unsigned char>(s[b]) <= ' ')) ++b;
    std::size_t e = s.size();
    while (e > b && (static_cast<unsigned char>(s[e - 1]) <= ' ')) --e;
    return s.substr(b, e - b);
}

/// Normalizes CRLF / lone CR line endings to LF.
inline std::string normalize_newlines(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\r') {
            out.push_back('\n');
            if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Maps a 64-bit hash to [0, 1).
inline double unit_real(std::uint64_t x) {
    return static_cast<double>(x >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace rla
