// rla: datastore-leakage audit CLI for retrieval-in-context RAG pipelines.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rla/rla.hpp"

namespace {

namespace fs = std::filesystem;

struct CampaignCliOpts {
    std::string config_path;
    std::optional<std::string> corpus;
    std::optional<std::size_t> min_words;
    std::optional<std::string> strategy;
    std::optional<std::size_t> max_tokens;
    std::optional<std::size_t> stride;
    std::optional<std::string> tokenizer;
    std::optional<std::size_t> k;
    std::optional<double> k1;
    std::optional<double> b;
    std::optional<std::string> template_id;
    std::optional<std::string> templates_path;
    std::optional<std::string> position;  // end | beginning | middle:N
    std::optional<std::string> generator_kind;
    std::optional<std::string> endpoint;
    std::optional<std::string> model;
    std::optional<std::string> credential_env;
    std::optional<std::string> anchors_file;
    std::optional<std::size_t> generate_anchors;
    std::optional<std::string> domain_hint;
    std::optional<std::size_t> budget;
    std::optional<std::size_t> parallelism;
    std::optional<std::uint64_t> seed;
    bool safety_prompt = false;
    bool pine = false;
    bool live = false;
    bool acknowledge_risk = false;
};

void add_campaign_options(CLI::App* cmd, CampaignCliOpts& opts) {
    cmd->add_option("--config", opts.config_path, "campaign config file (JSON)");
    cmd->add_option("--corpus", opts.corpus, "corpus directory or line-JSON file");
    cmd->add_option("--min-words", opts.min_words, "minimum words per document");
    cmd->add_option("--strategy", opts.strategy, "chunking strategy: fixed | semantic");
    cmd->add_option("--max-tokens", opts.max_tokens, "max tokens per chunk");
    cmd->add_option("--stride", opts.stride, "token stride between fixed chunks");
    cmd->add_option("--tokenizer", opts.tokenizer, "tokenizer id: whitespace | byte");
    cmd->add_option("-k,--k", opts.k, "number of retrieved chunks");
    cmd->add_option("--k1", opts.k1, "BM25 k1");
    cmd->add_option("--b", opts.b, "BM25 b");
    cmd->add_option("--template", opts.template_id, "attack template id");
    cmd->add_option("--templates", opts.templates_path, "extra template file (line JSON)");
    cmd->add_option("--position", opts.position,
                    "injection position: end | beginning | middle:<interval>");
    cmd->add_option("--generator", opts.generator_kind, "generator kind: simulated | http");
    cmd->add_option("--endpoint", opts.endpoint, "chat-completions base URL");
    cmd->add_option("--model", opts.model, "model name for the HTTP generator");
    cmd->add_option("--credential-env", opts.credential_env,
                    "environment variable holding the API key (default RLA_API_KEY)");
    cmd->add_option("--anchors", opts.anchors_file, "anchor query file, one per line");
    cmd->add_option("--generate-anchors", opts.generate_anchors,
                    "ask the generator for this many anchor questions");
    cmd->add_option("--domain-hint", opts.domain_hint, "topic hint for anchor generation");
    cmd->add_option("--budget", opts.budget, "query budget");
    cmd->add_option("--parallelism", opts.parallelism, "parallel in-flight queries");
    cmd->add_option("--seed", opts.seed, "campaign seed");
    cmd->add_flag("--safety-prompt", opts.safety_prompt, "apply the safety system prompt");
    cmd->add_flag("--pine", opts.pine, "apply PINE grouping");
    cmd->add_flag("--live", opts.live, "allow campaigns against a live HTTP endpoint");
    cmd->add_flag("--acknowledge-data-risk", opts.acknowledge_risk,
                  "confirm you are authorized to audit the target endpoint");
}

rla::InjectionPosition parse_position(const std::string& text) {
    if (text == "end") return rla::InjectionPosition::end();
    if (text == "beginning") return rla::InjectionPosition::beginning();
    if (text.rfind("middle:", 0) == 0)
        return rla::InjectionPosition::middle(std::stoul(text.substr(7)));
    throw rla::ConfigError("bad --position '" + text + "' (end | beginning | middle:<i>)");
}

rla::CampaignConfig build_config(const CampaignCliOpts& opts) {
    rla::CampaignConfig cfg;
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) throw rla::ConfigError("cannot read config file '" + opts.config_path + "'");
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded())
            throw rla::ConfigError("config file '" + opts.config_path + "' is not valid JSON");
        cfg = j.get<rla::CampaignConfig>();
    }
    if (opts.corpus) cfg.corpus_path = *opts.corpus;
    if (opts.min_words) cfg.corpus_min_words = *opts.min_words;
    if (opts.strategy) {
        if (*opts.strategy == "fixed") {
            cfg.chunking.strategy = rla::ChunkStrategy::Fixed;
        } else if (*opts.strategy == "semantic") {
            cfg.chunking.strategy = rla::ChunkStrategy::Semantic;
        } else {
            throw rla::ConfigError("bad --strategy '" + *opts.strategy + "'");
        }
    }
    if (opts.max_tokens) cfg.chunking.max_tokens_per_chunk = *opts.max_tokens;
    if (opts.stride) cfg.chunking.stride = *opts.stride;
    if (opts.tokenizer) cfg.chunking.tokenizer_id = *opts.tokenizer;
    if (opts.k) cfg.retrieval.k = *opts.k;
    if (opts.k1) cfg.retrieval.k1 = *opts.k1;
    if (opts.b) cfg.retrieval.b = *opts.b;
    if (opts.template_id) cfg.template_id = *opts.template_id;
    if (opts.templates_path) cfg.templates_path = *opts.templates_path;
    if (opts.position) cfg.injection = parse_position(*opts.position);
    if (opts.generator_kind) {
        if (*opts.generator_kind == "simulated") {
            cfg.generator.kind = rla::GeneratorKind::Simulated;
        } else if (*opts.generator_kind == "http") {
            cfg.generator.kind = rla::GeneratorKind::HttpApi;
        } else {
            throw rla::ConfigError("bad --generator '" + *opts.generator_kind + "'");
        }
    }
    if (opts.endpoint) cfg.generator.http.base_url = *opts.endpoint;
    if (opts.model) cfg.generator.http.model = *opts.model;
    if (opts.credential_env) cfg.generator.http.credential_env = *opts.credential_env;
    if (opts.anchors_file) cfg.anchors.file = *opts.anchors_file;
    if (opts.generate_anchors) cfg.anchors.generate_n = *opts.generate_anchors;
    if (opts.domain_hint) cfg.anchors.domain_hint = *opts.domain_hint;
    if (opts.budget) cfg.query_budget = *opts.budget;
    if (opts.parallelism) cfg.parallelism = *opts.parallelism;
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.safety_prompt) cfg.mitigations.safety_prompt = true;
    if (opts.pine) cfg.mitigations.pine = true;
    return cfg;
}

void guard_live(const rla::CampaignConfig& cfg, const CampaignCliOpts& opts) {
    if (cfg.generator.kind != rla::GeneratorKind::HttpApi) return;
    if (!opts.live || !opts.acknowledge_risk)
        throw rla::ConfigError(
            "campaigns against a live endpoint need both --live and --acknowledge-data-risk");
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw rla::ConfigError("cannot write '" + path + "'");
    out << content;
}

int check_failure_budget(const rla::CampaignConfig& cfg, const rla::CampaignResult& result) {
    if (result.n_failed > cfg.max_generator_failures) {
        std::cerr << "error: " << result.n_failed
                  << " generator failures exceed the configured budget of "
                  << cfg.max_generator_failures << "\n";
        return 3;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rla: prompt-injection datastore-leakage audit for RAG pipelines"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "validate a corpus and print its statistics");
    std::string ingest_corpus, ingest_out;
    std::size_t ingest_min_words = 100;
    ingest->add_option("--corpus", ingest_corpus, "corpus directory or line-JSON file")
        ->required();
    ingest->add_option("--min-words", ingest_min_words, "minimum words per document");
    ingest->add_option("--out", ingest_out, "write the canonical line-JSON corpus here");

    // chunk
    auto* chunk_cmd = app.add_subcommand("chunk", "split a corpus into retrievable chunks");
    CampaignCliOpts chunk_opts;
    add_campaign_options(chunk_cmd, chunk_opts);
    std::string chunk_out;
    chunk_cmd->add_option("--out", chunk_out, "chunk dump file (line JSON); stdout if omitted");

    // index
    auto* index_cmd = app.add_subcommand("index", "build and persist a BM25 index");
    CampaignCliOpts index_opts;
    add_campaign_options(index_cmd, index_opts);
    std::string index_out;
    index_cmd->add_option("--out", index_out, "index file")->required();

    // attack
    auto* attack = app.add_subcommand("attack", "run an extraction campaign");
    CampaignCliOpts attack_opts;
    add_campaign_options(attack, attack_opts);
    std::string attack_out, attack_records, attack_report = "table";
    attack->add_option("--out", attack_out, "write the full campaign result (JSON)");
    attack->add_option("--records", attack_records, "write per-query records (line JSON)");
    attack->add_option("--report", attack_report, "stdout report format: table | csv | json");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "run a parameter sweep of campaigns");
    CampaignCliOpts sweep_opts;
    add_campaign_options(sweep, sweep_opts);
    std::string sweep_grid = "size", sweep_out_dir;
    std::vector<std::size_t> sweep_ks{1, 2, 4, 8};
    std::vector<std::size_t> sweep_lens{128, 256, 512};
    sweep->add_option("--grid", sweep_grid, "grid kind: size | position | strategy");
    sweep->add_option("--ks", sweep_ks, "chunk counts for the size grid");
    sweep->add_option("--lens", sweep_lens, "max-token values for the size grid");
    sweep->add_option("--out-dir", sweep_out_dir, "directory for curve CSV and results");

    // mitigate
    auto* mitigate = app.add_subcommand("mitigate", "compare mitigation strategies");
    CampaignCliOpts mitigate_opts;
    add_campaign_options(mitigate, mitigate_opts);
    std::string mitigate_out_dir;
    mitigate->add_option("--out-dir", mitigate_out_dir, "directory for the four arm results");

    // reconstruct
    auto* reconstruct = app.add_subcommand(
        "reconstruct", "rebuild coverage from persisted records");
    std::string rec_records, rec_corpus, rec_stitch, rec_cov_csv, rec_curve_csv;
    std::size_t rec_min_words = 100;
    reconstruct->add_option("--records", rec_records, "records file (line JSON)")->required();
    reconstruct->add_option("--corpus", rec_corpus, "the audited corpus")->required();
    reconstruct->add_option("--min-words", rec_min_words, "minimum words per document");
    reconstruct->add_option("--stitch", rec_stitch, "print the reconstruction of this doc id");
    reconstruct->add_option("--coverage-csv", rec_cov_csv, "write covered intervals CSV");
    reconstruct->add_option("--curve-csv", rec_curve_csv, "write the coverage curve CSV");

    // report
    auto* report_cmd = app.add_subcommand("report", "render a persisted campaign result");
    std::string report_in, report_format = "table";
    report_cmd->add_option("--result", report_in, "campaign result JSON file")->required();
    report_cmd->add_option("--format", report_format, "table | csv | json");

    try {
        app.parse(argc, argv);

        if (*ingest) {
            auto report = rla::ingest_directory(ingest_corpus, ingest_min_words);
            auto stats = rla::corpus_stats(report.datastore);
            std::cout << "documents: " << stats.documents << "\n"
                      << "total_words: " << stats.total_words << "\n"
                      << "total_chars: " << stats.total_chars << "\n"
                      << "filtered_out: " << report.filtered_out << "\n";
            for (std::size_t i = 0; i < stats.word_histogram.size(); ++i) {
                if (stats.word_histogram[i] > 0)
                    std::cout << "words[" << (1u << i) << ".." << ((1u << (i + 1)) - 1)
                              << "]: " << stats.word_histogram[i] << "\n";
            }
            if (!ingest_out.empty())
                write_file(ingest_out, rla::corpus_to_jsonl(report.datastore));
            return 0;
        }

        if (*chunk_cmd) {
            auto cfg = build_config(chunk_opts);
            if (cfg.corpus_path.empty()) throw rla::ConfigError("--corpus is required");
            auto corpus = rla::ingest_directory(cfg.corpus_path, cfg.corpus_min_words).datastore;
            auto chunks = rla::chunk_datastore(corpus, cfg.chunking);
            if (chunk_out.empty()) {
                rla::write_chunks_jsonl(chunks, std::cout);
            } else {
                std::ostringstream buf;
                rla::write_chunks_jsonl(chunks, buf);
                write_file(chunk_out, buf.str());
            }
            std::cerr << chunks.size() << " chunks\n";
            return 0;
        }

        if (*index_cmd) {
            auto cfg = build_config(index_opts);
            if (cfg.corpus_path.empty()) throw rla::ConfigError("--corpus is required");
            auto corpus = rla::ingest_directory(cfg.corpus_path, cfg.corpus_min_words).datastore;
            auto index = rla::build_index(rla::chunk_datastore(corpus, cfg.chunking),
                                          cfg.retrieval.k1, cfg.retrieval.b,
                                          cfg.chunking.tokenizer_id);
            std::ostringstream buf;
            rla::save_index(index, buf);
            write_file(index_out, buf.str());
            std::cerr << "indexed " << index.n_chunks << " chunks\n";
            return 0;
        }

        if (*attack) {
            auto cfg = build_config(attack_opts);
            guard_live(cfg, attack_opts);
            auto result = rla::run_campaign(cfg);
            if (!attack_out.empty()) write_file(attack_out, nlohmann::json(result).dump(2) + "\n");
            if (!attack_records.empty()) {
                std::ostringstream buf;
                rla::write_records_jsonl(result.records, buf);
                write_file(attack_records, buf.str());
            }
            rla::ReportFormat fmt = attack_report == "csv"
                                        ? rla::ReportFormat::Csv
                                        : (attack_report == "json" ? rla::ReportFormat::Json
                                                                   : rla::ReportFormat::Table);
            std::cout << rla::report(result, fmt);
            return check_failure_budget(cfg, result);
        }

        if (*sweep) {
            auto cfg = build_config(sweep_opts);
            guard_live(cfg, sweep_opts);
            rla::SweepGrid grid;
            if (sweep_grid == "size") {
                grid.kind = rla::SweepGrid::Kind::ContextSize;
                grid.ks = sweep_ks;
                grid.max_tokens = sweep_lens;
            } else if (sweep_grid == "position") {
                grid.kind = rla::SweepGrid::Kind::Position;
            } else if (sweep_grid == "strategy") {
                grid.kind = rla::SweepGrid::Kind::Strategy;
            } else {
                throw rla::ConfigError("bad --grid '" + sweep_grid + "'");
            }
            auto corpus = rla::ingest_directory(cfg.corpus_path, cfg.corpus_min_words).datastore;
            auto cells = rla::run_sweep(cfg, grid, corpus);
            const std::string csv = rla::sweep_curve_csv(cells);
            std::cout << csv;
            if (!sweep_out_dir.empty()) {
                fs::create_directories(sweep_out_dir);
                write_file((fs::path(sweep_out_dir) / "sweep_curve.csv").string(), csv);
                for (std::size_t i = 0; i < cells.size(); ++i) {
                    write_file((fs::path(sweep_out_dir) /
                                ("point_" + std::to_string(i) + ".json"))
                                   .string(),
                               nlohmann::json(cells[i].result).dump(2) + "\n");
                }
            }
            std::size_t failed = 0;
            for (const auto& cell : cells) failed += cell.result.n_failed;
            if (failed > cfg.max_generator_failures) return 3;
            return 0;
        }

        if (*mitigate) {
            auto cfg = build_config(mitigate_opts);
            guard_live(cfg, mitigate_opts);
            auto corpus = rla::ingest_directory(cfg.corpus_path, cfg.corpus_min_words).datastore;
            auto matrix = rla::run_mitigation_matrix(cfg, corpus);
            std::cout << rla::mitigation_table(matrix);
            if (!mitigate_out_dir.empty()) {
                fs::create_directories(mitigate_out_dir);
                auto dump = [&](const char* name, const rla::CampaignResult& r) {
                    write_file((fs::path(mitigate_out_dir) / (std::string(name) + ".json"))
                                   .string(),
                               nlohmann::json(r).dump(2) + "\n");
                };
                dump("baseline", matrix.baseline);
                dump("safety", matrix.safety);
                dump("pine", matrix.pine);
                dump("combined", matrix.combined);
            }
            return 0;
        }

        if (*reconstruct) {
            auto corpus = rla::ingest_directory(rec_corpus, rec_min_words).datastore;
            std::ifstream in(rec_records);
            if (!in) throw rla::ConfigError("cannot read records file '" + rec_records + "'");
            auto records = rla::read_records_jsonl(in);
            rla::CoverageLedger ledger(corpus);
            for (const auto& rec : records) ledger.ingest_record(rec);
            std::cout << "records: " << records.size() << "\n"
                      << "covered_chars: " << ledger.covered_chars() << "\n"
                      << "interval_R: " << ledger.interval_rate() << "\n";
            if (!rec_cov_csv.empty()) write_file(rec_cov_csv, ledger.to_csv());
            if (!rec_curve_csv.empty())
                write_file(rec_curve_csv,
                           rla::coverage_curve_csv(rla::coverage_curve(records, corpus)));
            if (!rec_stitch.empty()) std::cout << ledger.stitch(rec_stitch) << "\n";
            return 0;
        }

        if (*report_cmd) {
            std::ifstream in(report_in);
            if (!in) throw rla::ConfigError("cannot read result file '" + report_in + "'");
            nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
            if (j.is_discarded()) throw rla::ConfigError("result file is not valid JSON");
            auto result = rla::load_result(j);
            rla::ReportFormat fmt = report_format == "csv"
                                        ? rla::ReportFormat::Csv
                                        : (report_format == "json" ? rla::ReportFormat::Json
                                                                   : rla::ReportFormat::Table);
            std::cout << rla::report(result, fmt);
            return 0;
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const rla::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const rla::GenerationError& e) {
        std::cerr << "generation error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
