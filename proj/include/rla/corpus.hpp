#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rla/errors.hpp"
#include "rla/text.hpp"

namespace rla {

/// One datastore entry. Offsets and counts are bytes of validated UTF-8 text;
/// for ASCII corpora they coincide with code points.
struct Document {
    std::string id;
    std::string title;
    std::string text;
    std::size_t word_count = 0;
    std::size_t char_count = 0;
};

inline Document make_document(std::string id, std::string title, std::string text) {
    Document doc;
    doc.id = std::move(id);
    doc.title = std::move(title);
    doc.word_count = count_words(text);
    doc.char_count = text.size();
    doc.text = std::move(text);
    return doc;
}

/// The text corpus under audit. Immutable after construction; safe for
/// concurrent shared reads.
struct Datastore {
    std::vector<Document> documents;
    std::size_t total_words = 0;
    std::size_t min_words_filter = 100;

    std::size_t total_chars() const {
        std::size_t n = 0;
        for (const auto& d : documents) n += d.char_count;
        return n;
    }

    const Document* find(std::string_view doc_id) const {
        for (const auto& d : documents) {
            if (d.id == doc_id) return &d;
        }
        return nullptr;
    }
};

struct IngestReport {
    Datastore datastore;
    std::size_t filtered_out = 0;  // documents dropped by the word filter
    std::size_t files_seen = 0;
};

namespace detail {

inline void append_document(Datastore& ds, std::set<std::string>& seen, Document doc,
                            std::size_t min_words, std::size_t& filtered) {
    if (!utf8_valid(doc.text))
        throw ConfigError("document '" + doc.id + "' is not valid UTF-8");
    if (!seen.insert(doc.id).second)
        throw ConfigError("duplicate document id '" + doc.id + "'");
    if (doc.word_count < min_words) {
        ++filtered;
        return;
    }
    ds.total_words += doc.word_count;
    ds.documents.push_back(std::move(doc));
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

}  // namespace detail

/// Parses the line-JSON interchange format: one {id, title, text} object per
/// line. Blank lines are ignored.
inline IngestReport read_corpus_jsonl(std::istream& in, std::size_t min_words = 100) {
    IngestReport report;
    report.datastore.min_words_filter = min_words;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("id") || !rec.contains("text"))
            throw ConfigError("corpus line " + std::to_string(line_no) +
                              ": expected a JSON object with id and text");
        ++report.files_seen;
        detail::append_document(report.datastore, seen,
                                make_document(rec["id"].get<std::string>(),
                                              rec.value("title", std::string{}),
                                              rec["text"].get<std::string>()),
                                min_words, report.filtered_out);
    }
    if (report.datastore.documents.empty())
        throw ConfigError("no documents survive the " + std::to_string(min_words) +
                          "-word filter; corpus is unusable");
    return report;
}

/// Ingests a datastore from a directory of .txt files (one document per file,
/// ordered by file name) or from a single line-JSON corpus file.
inline IngestReport ingest_directory(const std::filesystem::path& path,
                                     std::size_t min_words = 100) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::exists(path, ec)) throw ConfigError("path does not exist: '" + path.string() + "'");

    if (fs::is_regular_file(path, ec)) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("cannot read '" + path.string() + "'");
        return read_corpus_jsonl(in, min_words);
    }
    if (!fs::is_directory(path, ec))
        throw ConfigError("path is neither a directory nor a file: '" + path.string() + "'");

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.is_regular_file() && entry.path().extension() == ".txt")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

    IngestReport report;
    report.datastore.min_words_filter = min_words;
    std::set<std::string> seen;
    for (const auto& file : files) {
        ++report.files_seen;
        detail::append_document(report.datastore, seen,
                                make_document(file.stem().string(), std::string{},
                                              detail::read_file(file)),
                                min_words, report.filtered_out);
    }
    if (report.datastore.documents.empty())
        throw ConfigError("no documents survive the " + std::to_string(min_words) +
                          "-word filter; corpus is unusable");
    return report;
}

struct CorpusStats {
    std::size_t documents = 0;
    std::size_t total_words = 0;
    std::size_t total_chars = 0;
    /// histogram[i] counts documents with word_count in [2^i, 2^(i+1)).
    std::vector<std::size_t> word_histogram;
};

inline CorpusStats corpus_stats(const Datastore& ds) {
    CorpusStats stats;
    stats.documents = ds.documents.size();
    for (const auto& d : ds.documents) {
        stats.total_words += d.word_count;
        stats.total_chars += d.char_count;
        std::size_t bucket = 0;
        for (std::size_t w = d.word_count; w > 1; w >>= 1) ++bucket;
        if (stats.word_histogram.size() <= bucket) stats.word_histogram.resize(bucket + 1);
        ++stats.word_histogram[bucket];
    }
    return stats;
}

/// Canonical interchange dump; deterministic byte-for-byte for a given store.
inline void write_corpus_jsonl(const Datastore& ds, std::ostream& out) {
    for (const auto& d : ds.documents) {
        nlohmann::json rec{{"id", d.id}, {"title", d.title}, {"text", d.text}};
        out << rec.dump() << '\n';
    }
}

inline std::string corpus_to_jsonl(const Datastore& ds) {
    std::ostringstream out;
    write_corpus_jsonl(ds, out);
    return std::move(out).str();
}

}  // namespace rla
