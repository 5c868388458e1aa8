#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "rla/reconstruction.hpp"

#include "helpers.hpp"
#include "oracles.hpp"

using namespace rla;
using Catch::Matchers::WithinAbs;

namespace {

Datastore one_doc_store(const std::string& text) {
    Datastore ds;
    ds.min_words_filter = 1;
    ds.documents.push_back(make_document("doc0", "", text));
    ds.total_words = ds.documents[0].word_count;
    return ds;
}

ExtractionRecord record_with(const std::string& doc_id, std::vector<Interval> ivs,
                             std::string output = "out") {
    ExtractionRecord rec;
    rec.output = std::move(output);
    rec.matched_intervals[doc_id] = std::move(ivs);
    return rec;
}

}  // namespace

TEST_CASE("dedup keeps first occurrences", "[reconstruction]") {
    CHECK(dedup_chunks({"A", "B", "A"}) == std::vector<std::string>{"A", "B"});
    CHECK(dedup_chunks({}).empty());
    CHECK(dedup_chunks({"x\r\ny", "x\ny", "  x\ny  "}) == std::vector<std::string>{"x\ny"});

    std::mt19937_64 rng(61);
    std::vector<std::string> outputs;
    std::set<std::string> distinct;
    for (int i = 0; i < 100; ++i) {
        auto text = "chunk " + std::to_string(i % 40);
        outputs.push_back(text);
        distinct.insert(text);
    }
    CHECK(dedup_chunks(outputs).size() == distinct.size());
}

TEST_CASE("concatenation-mode reconstruction rate", "[reconstruction]") {
    auto ds = one_doc_store("alpha beta gamma delta");
    CHECK(reconstruction_rate({"alpha beta gamma delta"}, ds) == 1.0);
    CHECK(reconstruction_rate({}, ds) == 0.0);
    CHECK_THROWS_AS(reconstruction_rate({"x"}, one_doc_store("")), ConfigError);
}

TEST_CASE("attribution recovers the chunk span in its document", "[reconstruction]") {
    auto ds = one_doc_store(test::unique_word_doc(0, 64).text);
    ds.documents[0].id = "doc0";
    ChunkingConfig cfg;
    cfg.max_tokens_per_chunk = 16;
    cfg.stride = 16;
    Document doc = ds.documents[0];
    auto chunks = chunk_fixed(doc, cfg);

    auto intervals = attribute_output(chunks[1].text, std::vector<Chunk>{chunks[1]}, ds, 20);
    REQUIRE(intervals.count("doc0") == 1);
    REQUIRE(intervals["doc0"].size() == 1);
    CHECK(intervals["doc0"][0] == Interval{chunks[1].char_start, chunks[1].char_end});

    CHECK(attribute_output("", std::vector<Chunk>{chunks[0]}, ds, 20).empty());

    Chunk ghost = chunks[0];
    ghost.doc_id = "missing";
    CHECK_THROWS_AS(attribute_output("text", std::vector<Chunk>{ghost}, ds, 20), ConfigError);
}

TEST_CASE("ledger ingestion is bounded, idempotent, and order independent", "[reconstruction]") {
    auto ds = one_doc_store(std::string(1000, 'a'));
    CoverageLedger ledger(ds);

    auto rec = record_with("doc0", {{0, 600}});
    ledger.ingest_record(rec);
    CHECK(ledger.covered_chars() == 600);
    ledger.ingest_record(rec);
    CHECK(ledger.covered_chars() == 600);

    std::mt19937_64 rng(67);
    std::vector<std::pair<std::size_t, std::size_t>> ivs;
    CoverageLedger scatter(ds);
    for (int i = 0; i < 10; ++i) {
        std::size_t s = rng() % 900;
        std::size_t e = s + 1 + rng() % 100;
        ivs.push_back({s, e});
        scatter.ingest_record(record_with("doc0", {{s, e}}));
    }
    CHECK(scatter.covered_chars() == oracle::interval_union_size(ivs));

    CoverageLedger reversed(ds);
    for (auto it = ivs.rbegin(); it != ivs.rend(); ++it)
        reversed.ingest_record(record_with("doc0", {{it->first, it->second}}));
    CHECK(reversed.covered_chars() == scatter.covered_chars());

    CHECK_THROWS_AS(ledger.ingest_record(record_with("doc0", {{990, 1100}})), ConfigError);
    CHECK_THROWS_AS(ledger.ingest_record(record_with("nope", {{0, 5}})), ConfigError);
    CHECK_THROWS_AS(ledger.ingest_record(record_with("doc0", {{5, 5}})), ConfigError);
}

TEST_CASE("coverage curves are monotone and bounded", "[reconstruction]") {
    auto ds = one_doc_store(std::string(400, 'x'));

    std::vector<ExtractionRecord> refusals(5);
    for (auto& rec : refusals) rec.output = "Sorry, I cannot fulfill that request";
    auto flat = coverage_curve(refusals, ds);
    REQUIRE(flat.size() == 5);
    for (const auto& p : flat) {
        CHECK(p.paper_rate == 0.0);
        CHECK(p.interval_rate == 0.0);
    }

    std::vector<ExtractionRecord> records;
    records.push_back(record_with("doc0", {{0, 100}}, std::string(100, 'x')));
    records.push_back(record_with("doc0", {{50, 150}}, std::string(100, 'x') + "y"));
    records.push_back(record_with("doc0", {{300, 400}}, std::string(100, 'x') + "z"));
    auto curve = coverage_curve(records, ds);
    REQUIRE(curve.size() == 3);
    for (std::size_t i = 1; i < curve.size(); ++i) {
        CHECK(curve[i].paper_rate >= curve[i - 1].paper_rate);
        CHECK(curve[i].interval_rate >= curve[i - 1].interval_rate);
    }
    for (const auto& p : curve) CHECK(p.interval_rate <= 1.0);
    CHECK_THAT(curve.back().interval_rate, WithinAbs((150.0 + 100.0) / 400.0, 1e-12));
}

TEST_CASE("attack success needs one long verbatim block", "[reconstruction]") {
    ExtractionRecord rec;
    rec.longest_block = 4000;
    CHECK(attack_success(rec, 100));

    ExtractionRecord empty;
    CHECK_FALSE(attack_success(empty, 100));

    ExtractionRecord scattered;
    scattered.longest_block = 30;
    scattered.recon_length = 900;  // many short fragments still fail
    CHECK_FALSE(attack_success(scattered, 100));
    CHECK(attack_success(scattered, 30));

    ExtractionRecord failed;
    failed.longest_block = 4000;
    failed.status = RecordStatus::Failed;
    CHECK_FALSE(attack_success(failed, 100));

    CHECK_THROWS_AS(attack_success(rec, 0), ConfigError);
}

TEST_CASE("stitching renders covered spans and annotated gaps", "[reconstruction]") {
    std::string text = "0123456789abcdefghijABCDEFGHIJ";
    auto ds = one_doc_store(text);

    CoverageLedger full(ds);
    full.ingest_record(record_with("doc0", {{0, 30}}));
    CHECK(full.stitch("doc0") == text);

    CoverageLedger empty(ds);
    CHECK(empty.stitch("doc0") == "[...GAP 30 chars...]");
    CHECK_THROWS_AS(empty.stitch("nope"), ConfigError);

    CoverageLedger partial(ds);
    partial.ingest_record(record_with("doc0", {{0, 10}, {20, 30}}));
    CHECK(partial.stitch("doc0") == "0123456789[...GAP 10 chars...]ABCDEFGHIJ");
}

TEST_CASE("ledger csv lists merged intervals", "[reconstruction]") {
    auto ds = one_doc_store(std::string(100, 'q'));
    CoverageLedger ledger(ds);
    ledger.ingest_record(record_with("doc0", {{10, 20}, {15, 30}}));
    CHECK(ledger.to_csv() == "doc_id,start,end\ndoc0,10,30\n");
}

TEST_CASE("records round-trip through line JSON", "[reconstruction]") {
    ExtractionRecord rec;
    rec.query_id = 7;
    rec.anchor = "what is x";
    rec.template_id = "adv1";
    rec.injection = InjectionPosition::middle(3);
    rec.retrieved_chunk_ids = {"doc0#000001", "doc0#000002"};
    rec.output = "leaked";
    rec.scores.rouge_l = 88.5;
    rec.recon_length = 42;
    rec.longest_block = 40;
    rec.matched_intervals["doc0"] = {{5, 45}};
    rec.status = RecordStatus::Ok;

    std::ostringstream out;
    write_records_jsonl(std::vector<ExtractionRecord>{rec}, out);
    std::istringstream in(out.str());
    auto loaded = read_records_jsonl(in);
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0].query_id == 7);
    CHECK(loaded[0].injection == InjectionPosition::middle(3));
    CHECK(loaded[0].matched_intervals["doc0"][0] == Interval{5, 45});
    CHECK(nlohmann::json(loaded[0]) == nlohmann::json(rec));
}
