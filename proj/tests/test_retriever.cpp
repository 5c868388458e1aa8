#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "rla/retriever.hpp"

#include "helpers.hpp"
#include "oracles.hpp"

using namespace rla;

namespace {

Chunk text_chunk(std::string id, std::string text) {
    Chunk c;
    c.chunk_id = std::move(id);
    c.doc_id = "doc";
    c.text = std::move(text);
    c.char_end = c.text.size();
    c.token_count = count_words(c.text);
    return c;
}

std::vector<Chunk> text_chunks(const std::vector<std::string>& texts) {
    std::vector<Chunk> chunks;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "c%03zu", i);
        chunks.push_back(text_chunk(id, texts[i]));
    }
    return chunks;
}

}  // namespace

TEST_CASE("index construction counts terms and frequencies", "[retriever]") {
    auto idx = build_index(text_chunks({"cat sat", "dog ran"}));
    CHECK(idx.postings.size() == 4);
    for (const auto& [term, postings] : idx.postings) {
        CHECK(postings.size() == 1);
        CHECK(idx.doc_freq.at(term) == 1);
    }
    CHECK(idx.avg_chunk_length == 2.0);
    CHECK(idx.n_chunks == 2);

    auto rep = build_index(text_chunks({"cat cat cat"}));
    REQUIRE(rep.postings.at("cat").size() == 1);
    CHECK(rep.postings.at("cat")[0].tf == 3);
}

TEST_CASE("empty chunk lists and bad parameters are rejected", "[retriever]") {
    CHECK_THROWS_AS(build_index({}), ConfigError);
    CHECK_THROWS_AS(build_index(text_chunks({"a"}), 1.2, 1.5), ConfigError);
    CHECK_THROWS_AS(build_index(text_chunks({"a"}), -1.0, 0.5), ConfigError);
}

TEST_CASE("doc_freq equals a brute-force recount", "[retriever]") {
    std::mt19937_64 rng(3);
    std::vector<std::string> texts;
    for (int i = 0; i < 50; ++i) texts.push_back(test::random_words(rng, 30, 40));
    auto idx = build_index(text_chunks(texts));
    for (const auto& [term, df] : idx.doc_freq) {
        std::size_t recount = 0;
        for (const auto& text : texts) {
            auto words = oracle::words_of(ascii_lower(text));
            recount += std::count(words.begin(), words.end(), term) > 0 ? 1 : 0;
        }
        REQUIRE(df == recount);
        REQUIRE(df == idx.postings.at(term).size());
        REQUIRE(idx.idf(term) >= 0.0);
    }
}

TEST_CASE("unmatched queries yield empty results", "[retriever]") {
    auto idx = build_index(text_chunks({"cat sat", "dog ran"}));
    CHECK(retrieve(idx, "zebra", 2).empty());
    CHECK_THROWS_AS(retrieve(idx, "cat", 0), ConfigError);
}

TEST_CASE("the three-chunk example matches hand evaluation", "[retriever]") {
    auto idx = build_index(text_chunks({"cat", "cat cat", "dog"}));
    auto result = retrieve(idx, "cat", 2);
    REQUIRE(result.entries.size() == 2);

    // By hand: N=3, df(cat)=2, idf=ln(1.6), avg=4/3.
    const double idf = std::log(1.0 + (3.0 - 2.0 + 0.5) / (2.0 + 0.5));
    const double avg = 4.0 / 3.0;
    const double s_single = idf * 1.0 * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * (1.0 / avg)));
    const double s_double = idf * 2.0 * 2.2 / (2.0 + 1.2 * (0.25 + 0.75 * (2.0 / avg)));
    REQUIRE(s_double > s_single);

    CHECK(result.entries[0].chunk.text == "cat cat");
    CHECK_THAT(result.entries[0].score, Catch::Matchers::WithinAbs(s_double, 1e-9));
    CHECK(result.entries[1].chunk.text == "cat");
    CHECK_THAT(result.entries[1].score, Catch::Matchers::WithinAbs(s_single, 1e-9));

    auto top1 = retrieve(idx, "cat", 1);
    REQUIRE(top1.entries.size() == 1);
    CHECK(top1.entries[0].chunk.text == "cat cat");
}

TEST_CASE("ranking equals the brute-force scorer", "[retriever]") {
    std::mt19937_64 rng(17);
    std::vector<std::string> texts;
    for (int i = 0; i < 120; ++i)
        texts.push_back(test::random_words(rng, 5 + static_cast<std::size_t>(i % 40), 60));
    auto idx = build_index(text_chunks(texts));

    for (int q = 0; q < 50; ++q) {
        std::string query = test::random_words(rng, 1 + static_cast<std::size_t>(q % 4), 60);
        auto result = retrieve(idx, query, 10);
        auto oracle_scores = oracle::bm25_scores(texts, query, 1.2, 0.75);

        std::vector<std::size_t> expected;
        for (std::size_t c = 0; c < texts.size(); ++c)
            if (oracle_scores[c] > 0.0) expected.push_back(c);
        std::sort(expected.begin(), expected.end(), [&](std::size_t x, std::size_t y) {
            if (oracle_scores[x] != oracle_scores[y]) return oracle_scores[x] > oracle_scores[y];
            return idx.chunks[x].chunk_id < idx.chunks[y].chunk_id;
        });
        if (expected.size() > 10) expected.resize(10);

        REQUIRE(result.entries.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            REQUIRE(result.entries[i].chunk.chunk_id == idx.chunks[expected[i]].chunk_id);
            REQUIRE_THAT(result.entries[i].score,
                         Catch::Matchers::WithinAbs(oracle_scores[expected[i]], 1e-9));
        }
    }
}

TEST_CASE("retrieval is deterministic including tie order", "[retriever]") {
    auto idx = build_index(text_chunks({"same text", "same text", "same text"}));
    auto a = retrieve(idx, "same", 3);
    auto b = retrieve(idx, "same", 3);
    REQUIRE(a.entries.size() == 3);
    CHECK(a.entries[0].chunk.chunk_id == "c000");
    CHECK(a.entries[1].chunk.chunk_id == "c001");
    CHECK(a.entries[2].chunk.chunk_id == "c002");
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(a.entries[i].chunk.chunk_id == b.entries[i].chunk.chunk_id);
    CHECK(a.entries[0].score == a.entries[1].score);
}

TEST_CASE("disjoint-vocabulary rank stability when a foreign chunk joins", "[retriever]") {
    // Uniform-length chunks with pairwise disjoint vocabularies.
    std::vector<std::string> texts;
    for (int c = 0; c < 10; ++c) {
        std::string text;
        for (int w = 0; w < 8; ++w) {
            if (w > 0) text.push_back(' ');
            text += "v" + std::to_string(c) + "x" + std::to_string(w % 4);  // repeats inside
        }
        texts.push_back(text);
    }
    const std::string query = "v0x0 v1x0 v1x1 v2x0";
    auto before = retrieve(build_index(text_chunks(texts)), query, 10);

    texts.push_back("z0 z1 z2 z3 z4 z5 z6 z7");  // shares no terms with the query
    auto after = retrieve(build_index(text_chunks(texts)), query, 10);

    REQUIRE(before.entries.size() == after.entries.size());
    for (std::size_t i = 0; i < before.entries.size(); ++i)
        CHECK(before.entries[i].chunk.chunk_id == after.entries[i].chunk.chunk_id);
}

TEST_CASE("index files round-trip behind the magic header", "[retriever]") {
    std::mt19937_64 rng(23);
    std::vector<std::string> texts;
    for (int i = 0; i < 12; ++i) texts.push_back(test::random_words(rng, 12, 30));
    auto idx = build_index(text_chunks(texts), 0.9, 0.4);

    std::stringstream buf;
    save_index(idx, buf);
    std::string first_line;
    std::getline(buf, first_line);
    CHECK(first_line == "RLAIDX1");

    buf.seekg(0);
    auto loaded = load_index(buf);
    CHECK(loaded.k1 == idx.k1);
    CHECK(loaded.b == idx.b);
    CHECK(loaded.n_chunks == idx.n_chunks);

    auto query = texts[3].substr(0, texts[3].find(' '));
    auto a = retrieve(idx, query, 5);
    auto b = retrieve(loaded, query, 5);
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(a.entries[i].chunk.chunk_id == b.entries[i].chunk.chunk_id);
        CHECK(a.entries[i].score == b.entries[i].score);
    }

    std::stringstream bad("NOTANIDX\n{}\n");
    CHECK_THROWS_AS(load_index(bad), ConfigError);
}
