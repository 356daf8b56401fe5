#pragma once

#include <cctype>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "nlce/errors.hpp"
#include "nlce/matrix.hpp"

namespace nlce {

// Named embedding vectors of a fixed dimension. Immutable after load; safe
// for unlimited concurrent readers.
class EmbeddingPool {
 public:
    struct Entry {
        std::string name;
        Vec vector;
    };

    EmbeddingPool() = default;
    explicit EmbeddingPool(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }
    const Entry& entry(std::size_t i) const { return entries_[i]; }

    void add(std::string name, Vec vector) {
        if (dim_ == 0) dim_ = vector.size();
        if (vector.size() != dim_)
            throw DataError("pool entry '" + name + "': dimension " +
                            std::to_string(vector.size()) + " != " + std::to_string(dim_));
        for (double v : vector)
            if (!std::isfinite(v)) throw DataError("pool entry '" + name + "': non-finite value");
        if (index_.count(name)) throw DataError("duplicate pool name '" + name + "'");
        index_.emplace(name, entries_.size());
        entries_.push_back(Entry{std::move(name), std::move(vector)});
    }

    std::optional<std::size_t> find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    const Vec& vector(const std::string& name) const {
        auto pos = find(name);
        if (!pos) throw LookupError("unknown pool name '" + name + "'");
        return entries_[*pos].vector;
    }

 private:
    std::size_t dim_ = 0;
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct TokenSequence {
    struct Token {
        std::string surface;
        std::size_t id;  // position in the pool it was tokenized against
    };
    std::vector<Token> tokens;
    std::string source_prompt;
    std::size_t dropped = 0;  // tokens absent from the pool
};

// A target concept: its pool token names plus an optional visual prototype.
struct ConceptSpec {
    std::string name;
    std::vector<std::string> token_names;  // unique, resolve in the token pool
    std::optional<std::string> prototype_name;
};

// Pool file format: JSON Lines, {"name": ..., "vector": [...]}, optional
// leading header {"dim": n} which is enforced when present.
inline EmbeddingPool load_pool(const std::string& path,
                               std::optional<std::size_t> expected_dim = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open pool file: " + path);
    EmbeddingPool pool;
    std::optional<std::size_t> dim = expected_dim;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (lineno == 1 && j.is_object() && j.contains("dim") && !j.contains("name")) {
            const std::size_t header_dim = j.at("dim").get<std::size_t>();
            if (dim && *dim != header_dim)
                throw DataError(path + ": header dim " + std::to_string(header_dim) +
                                " != expected " + std::to_string(*dim));
            dim = header_dim;
            continue;
        }
        if (!j.is_object() || !j.contains("name") || !j.contains("vector"))
            throw ParseError(path + ":" + std::to_string(lineno) +
                             ": expected {\"name\", \"vector\"}");
        std::string name = j.at("name").get<std::string>();
        Vec v = j.at("vector").get<Vec>();
        if (dim && v.size() != *dim)
            throw DataError(path + ":" + std::to_string(lineno) + ": entry '" + name +
                            "' has dimension " + std::to_string(v.size()) + ", expected " +
                            std::to_string(*dim));
        try {
            pool.add(std::move(name), std::move(v));
        } catch (const DataError& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!dim) dim = pool.dim();
    }
    return pool;
}

// Score sidecar: TSV, name<TAB>float, no header.
inline std::unordered_map<std::string, double> load_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open score file: " + path);
    std::unordered_map<std::string, double> scores;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected name<TAB>score");
        const std::string name = line.substr(0, tab);
        try {
            scores[name] = std::stod(line.substr(tab + 1));
        } catch (const std::exception&) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad score value");
        }
    }
    return scores;
}

inline std::string lowercase(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// Lowercase + whitespace split; tokens absent from the pool are dropped and
// counted, never an error.
inline TokenSequence tokenize(const std::string& prompt, const EmbeddingPool& pool) {
    TokenSequence seq;
    seq.source_prompt = prompt;
    std::istringstream words(lowercase(prompt));
    std::string word;
    while (words >> word) {
        if (auto id = pool.find(word)) {
            seq.tokens.push_back({word, *id});
        } else {
            ++seq.dropped;
        }
    }
    return seq;
}

// Tokenization with a pre-pass for multi-word pool names: at each position
// the longest space-joined window that resolves in the pool wins.
inline TokenSequence tokenize_multiword(const std::string& prompt, const EmbeddingPool& pool,
                                        std::size_t max_window = 6) {
    TokenSequence seq;
    seq.source_prompt = prompt;
    std::vector<std::string> words;
    std::istringstream stream(lowercase(prompt));
    std::string word;
    while (stream >> word) words.push_back(word);

    std::size_t i = 0;
    while (i < words.size()) {
        bool matched = false;
        const std::size_t limit = std::min(max_window, words.size() - i);
        for (std::size_t len = limit; len >= 1 && !matched; --len) {
            std::string joined = words[i];
            for (std::size_t k = 1; k < len; ++k) joined += " " + words[i + k];
            if (auto id = pool.find(joined)) {
                seq.tokens.push_back({joined, *id});
                i += len;
                matched = true;
            }
        }
        if (!matched) {
            ++seq.dropped;
            ++i;
        }
    }
    return seq;
}

// Columns are the referenced vectors in request order: X[:, k] = pool[names[k]].
inline Matrix gather(const std::vector<std::string>& names, const EmbeddingPool& pool) {
    Matrix X(pool.dim(), names.size());
    for (std::size_t k = 0; k < names.size(); ++k) {
        const Vec& v = pool.vector(names[k]);
        for (std::size_t i = 0; i < pool.dim(); ++i) X(i, k) = v[i];
    }
    return X;
}

inline Matrix gather(const TokenSequence& seq, const EmbeddingPool& pool) {
    Matrix X(pool.dim(), seq.tokens.size());
    for (std::size_t k = 0; k < seq.tokens.size(); ++k) {
        const Vec& v = pool.entry(seq.tokens[k].id).vector;
        for (std::size_t i = 0; i < pool.dim(); ++i) X(i, k) = v[i];
    }
    return X;
}

inline double cosine(const Vec& u, const Vec& v) {
    const double nu = norm2(u);
    const double nv = norm2(v);
    if (nu == 0.0 || nv == 0.0) throw DegenerateInputError("cosine of a zero vector");
    const double c = dot(u, v) / (nu * nv);
    return std::min(1.0, std::max(-1.0, c));
}

}  // namespace nlce
