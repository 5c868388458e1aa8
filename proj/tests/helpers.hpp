#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "rla/corpus.hpp"

namespace rla::test {

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        static std::atomic<unsigned> counter{0};
        path_ = base / ("rla_test_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

    std::filesystem::path write(const std::string& name, const std::string& content) const {
        auto file = path_ / name;
        std::ofstream out(file, std::ios::binary);
        out << content;
        return file;
    }

private:
    std::filesystem::path path_;
};

/// Document of n globally-unique tokens: d<i>w0 d<i>w1 ...
inline Document unique_word_doc(std::size_t doc_index, std::size_t n_tokens) {
    std::string text;
    for (std::size_t t = 0; t < n_tokens; ++t) {
        if (t > 0) text.push_back(' ');
        text += "d" + std::to_string(doc_index) + "w" + std::to_string(t);
    }
    return make_document("doc" + std::to_string(doc_index), "", text);
}

inline Datastore unique_word_corpus(std::size_t n_docs, std::size_t tokens_per_doc,
                                    std::size_t min_words = 1) {
    Datastore ds;
    ds.min_words_filter = min_words;
    for (std::size_t i = 0; i < n_docs; ++i) {
        ds.documents.push_back(unique_word_doc(i, tokens_per_doc));
        ds.total_words += ds.documents.back().word_count;
    }
    return ds;
}

inline std::string random_words(std::mt19937_64& rng, std::size_t n_tokens,
                                std::size_t vocab = 50) {
    std::uniform_int_distribution<std::size_t> pick(0, vocab - 1);
    std::string text;
    for (std::size_t t = 0; t < n_tokens; ++t) {
        if (t > 0) text.push_back(' ');
        text += "w" + std::to_string(pick(rng));
    }
    return text;
}

inline std::string random_chars(std::mt19937_64& rng, std::size_t n, std::string_view alphabet) {
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(alphabet[pick(rng)]);
    return out;
}

}  // namespace rla::test
