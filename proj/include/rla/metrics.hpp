#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rla/errors.hpp"
#include "rla/text.hpp"

namespace rla {

/// Lexical similarity on a 0..100 scale. The semantic slot is a pluggable
/// hook for embedding-based scorers and stays empty by default.
struct SimilarityScores {
    double rouge_l = 0.0;
    double bleu = 0.0;
    double token_f1 = 0.0;
    std::optional<double> semantic;
};

using SemanticScorer = std::function<double(std::string_view, std::string_view)>;

struct MatchBlock {
    std::size_t a_start = 0;
    std::size_t b_start = 0;
    std::size_t length = 0;

    bool operator==(const MatchBlock&) const = default;
};

/// Contiguous common substrings found by recursive longest-match
/// decomposition; non-overlapping and ordered in both inputs.
struct MatchBlocks {
    std::vector<MatchBlock> blocks;
    std::size_t total_matched = 0;
    std::size_t longest = 0;
};

namespace detail {

inline std::size_t lcs_length(const std::vector<std::string_view>& a,
                              const std::vector<std::string_view>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline double f_measure(double precision, double recall) {
    if (precision + recall <= 0.0) return 0.0;
    return 100.0 * 2.0 * precision * recall / (precision + recall);
}

/// Longest common contiguous substring of a[alo,ahi) and b[blo,bhi).
/// Ties break to the earliest a_start, then the earliest b_start.
inline MatchBlock longest_match(std::string_view a, std::size_t alo, std::size_t ahi,
                                std::string_view b, std::size_t blo, std::size_t bhi) {
    MatchBlock best{alo, blo, 0};
    const std::size_t bn = bhi - blo;
    if (alo >= ahi || blo >= bhi) return best;
    std::vector<std::size_t> prev(bn + 1, 0), cur(bn + 1, 0);
    for (std::size_t i = alo; i < ahi; ++i) {
        for (std::size_t j = blo; j < bhi; ++j) {
            std::size_t len = a[i] == b[j] ? prev[j - blo] + 1 : 0;
            cur[j - blo + 1] = len;
            if (len > best.length) {
                best = {i + 1 - len, j + 1 - len, len};
            }
        }
        std::swap(prev, cur);
    }
    return best;
}

}  // namespace detail

/// LCS-based F-measure over word tokens, scaled to 0..100.
inline double rouge_l(std::string_view candidate, std::string_view reference) {
    auto cand = split_words(candidate);
    auto ref = split_words(reference);
    if (cand.empty() || ref.empty()) return 0.0;
    const auto lcs = detail::lcs_length(cand, ref);
    if (lcs == 0) return 0.0;
    return detail::f_measure(static_cast<double>(lcs) / cand.size(),
                             static_cast<double>(lcs) / ref.size());
}

/// Sentence BLEU with n=1..4 modified precisions, epsilon smoothing
/// (zero precision becomes 1/(2*denominator)) and the standard brevity
/// penalty, scaled to 0..100.
inline double bleu(std::string_view candidate, std::string_view reference) {
    auto cand = split_words(candidate);
    auto ref = split_words(reference);
    if (cand.empty() || ref.empty()) return 0.0;

    auto ngram_counts = [](const std::vector<std::string_view>& toks, std::size_t n) {
        std::unordered_map<std::string, std::size_t> counts;
        if (toks.size() < n) return counts;
        for (std::size_t i = 0; i + n <= toks.size(); ++i) {
            std::string key;
            for (std::size_t k = 0; k < n; ++k) {
                key.append(toks[i + k]);
                key.push_back('\x1f');
            }
            ++counts[key];
        }
        return counts;
    };

    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        auto cand_counts = ngram_counts(cand, n);
        auto ref_counts = ngram_counts(ref, n);
        std::size_t matched = 0;
        std::size_t denom = cand.size() >= n ? cand.size() - n + 1 : 0;
        for (const auto& [gram, count] : cand_counts) {
            auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) matched += std::min(count, it->second);
        }
        double p;
        if (denom == 0) {
            p = 0.5;  // 1/(2*1): no n-grams of this order exist
        } else if (matched == 0) {
            p = 1.0 / (2.0 * static_cast<double>(denom));
        } else {
            p = static_cast<double>(matched) / static_cast<double>(denom);
        }
        log_sum += std::log(p);
    }
    const double bp = cand.size() < ref.size()
                          ? std::exp(1.0 - static_cast<double>(ref.size()) /
                                               static_cast<double>(cand.size()))
                          : 1.0;
    return 100.0 * bp * std::exp(log_sum / 4.0);
}

/// Clipped multiset-intersection F1 over word tokens, scaled to 0..100.
inline double token_f1(std::string_view candidate, std::string_view reference) {
    auto cand = split_words(candidate);
    auto ref = split_words(reference);
    if (cand.empty() || ref.empty()) return 0.0;
    std::unordered_map<std::string_view, std::size_t> ref_counts;
    for (auto t : ref) ++ref_counts[t];
    std::size_t common = 0;
    for (auto t : cand) {
        auto it = ref_counts.find(t);
        if (it != ref_counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    return detail::f_measure(static_cast<double>(common) / cand.size(),
                             static_cast<double>(common) / ref.size());
}

/// Recursive longest-match decomposition over characters: finds the longest
/// common contiguous block, recurses on both flanks, and keeps blocks of at
/// least min_block characters.
inline MatchBlocks matching_blocks(std::string_view a, std::string_view b,
                                   std::size_t min_block = 1) {
    if (min_block < 1) throw ConfigError("min_block must be >= 1");
    MatchBlocks result;
    struct Region {
        std::size_t alo, ahi, blo, bhi;
    };
    std::vector<Region> stack;
    stack.push_back({0, a.size(), 0, b.size()});
    while (!stack.empty()) {
        Region r = stack.back();
        stack.pop_back();
        auto block = detail::longest_match(a, r.alo, r.ahi, b, r.blo, r.bhi);
        if (block.length < min_block) continue;
        result.blocks.push_back(block);
        stack.push_back({r.alo, block.a_start, r.blo, block.b_start});
        stack.push_back({block.a_start + block.length, r.ahi, block.b_start + block.length, r.bhi});
    }
    std::sort(result.blocks.begin(), result.blocks.end(),
              [](const MatchBlock& x, const MatchBlock& y) { return x.a_start < y.a_start; });
    for (const auto& blk : result.blocks) {
        result.total_matched += blk.length;
        result.longest = std::max(result.longest, blk.length);
    }
    return result;
}

/// Total contiguous overlapped characters between a generation and the
/// context it was conditioned on.
inline std::size_t reconstruction_length(std::string_view output, std::string_view context,
                                         std::size_t min_block = 1) {
    return matching_blocks(output, context, min_block).total_matched;
}

struct MeanStderr {
    double mean = 0.0;
    double se = 0.0;  // sample-std-dev / sqrt(n); 0 when n == 1
};

inline MeanStderr mean_stderr(std::span<const double> values) {
    if (values.empty()) throw ConfigError("mean_stderr needs at least one value");
    MeanStderr out;
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    if (values.size() == 1) return out;
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    out.se = sd / std::sqrt(static_cast<double>(values.size()));
    return out;
}

}  // namespace rla
