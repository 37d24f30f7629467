#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace bionorm {

// Error raised by bad user input (files, config, data). The CLI maps this
// to exit code 1; anything else is an internal error (exit 2).
class UserError : public std::runtime_error {
public:
    explicit UserError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// Opaque concept identifier (a CUI, MedDRA code, ...). Compared by exact
// byte equality.
struct ConceptId {
    std::string value;

    ConceptId() = default;
    explicit ConceptId(std::string v) : value(std::move(v)) {}

    bool operator==(const ConceptId& o) const { return value == o.value; }
    bool operator!=(const ConceptId& o) const { return value != o.value; }
    bool operator<(const ConceptId& o) const { return value < o.value; }

    static bool is_valid(const std::string& v) {
        if (v.empty()) return false;
        for (char c : v)
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') return false;
        return true;
    }
};

struct Concept {
    ConceptId id;
    std::vector<std::string> names;  // preferred name first

    const std::string& preferred_name() const { return names.front(); }
};

class KnowledgeBase {
public:
    void add(Concept c) {
        if (by_id_.count(c.id.value)) throw UserError("duplicate concept id: " + c.id.value);
        by_id_.emplace(c.id.value, concepts_.size());
        concepts_.push_back(std::move(c));
    }

    std::size_t size() const { return concepts_.size(); }
    bool empty() const { return concepts_.empty(); }
    const std::vector<Concept>& concepts() const { return concepts_; }

    const Concept* find(const ConceptId& id) const {
        auto it = by_id_.find(id.value);
        return it == by_id_.end() ? nullptr : &concepts_[it->second];
    }

    bool contains(const ConceptId& id) const { return by_id_.count(id.value) != 0; }

private:
    std::vector<Concept> concepts_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

// Gold annotation of a mention: a concept id, NIL (annotated unlinkable),
// or Unknown (prediction-only input with no annotation at all).
struct GoldLabel {
    enum class Kind { Concept, Nil, Unknown };
    Kind kind = Kind::Unknown;
    ConceptId id;  // meaningful only when kind == Concept

    static GoldLabel linked(ConceptId c) { return {Kind::Concept, std::move(c)}; }
    static GoldLabel nil() { return {Kind::Nil, {}}; }
    static GoldLabel unknown() { return {Kind::Unknown, {}}; }

    bool is_concept() const { return kind == Kind::Concept; }
    bool is_nil() const { return kind == Kind::Nil; }
    bool is_unknown() const { return kind == Kind::Unknown; }

    bool operator==(const GoldLabel& o) const {
        return kind == o.kind && (kind != Kind::Concept || id == o.id);
    }
};

struct Mention {
    std::string doc_id;
    std::string text;                    // surface form
    std::optional<std::string> context;  // containing sentence; stored, not consumed by the model
    GoldLabel gold;
};

struct Document {
    std::string id;
    std::string text;
};

enum class SplitTag { Train, Dev, Test, Unspecified };

struct Dataset {
    std::vector<Mention> mentions;
    SplitTag split_tag = SplitTag::Unspecified;

    std::size_t size() const { return mentions.size(); }

    std::size_t linkable_count() const {
        return static_cast<std::size_t>(
            std::count_if(mentions.begin(), mentions.end(),
                          [](const Mention& m) { return m.gold.is_concept(); }));
    }
    std::size_t unlinkable_count() const {
        return static_cast<std::size_t>(
            std::count_if(mentions.begin(), mentions.end(),
                          [](const Mention& m) { return m.gold.is_nil(); }));
    }
    std::size_t unknown_count() const {
        return static_cast<std::size_t>(
            std::count_if(mentions.begin(), mentions.end(),
                          [](const Mention& m) { return m.gold.is_unknown(); }));
    }

    // Training and evaluation inputs must be fully annotated.
    void require_no_unknown(const std::string& what) const {
        if (unknown_count() > 0)
            throw UserError(what + ": dataset contains mentions without gold annotation");
    }
};

// ---------------------------------------------------------------------------
// Line-delimited JSON ingestion
// ---------------------------------------------------------------------------

namespace detail {

using nlohmann::json;

// Calls fn(line_number, parsed_object) for every non-blank line.
inline void for_each_jsonl(const std::string& path,
                           const std::function<void(std::size_t, const json&)>& fn) {
    std::ifstream in(path);
    if (!in) throw UserError("cannot open file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw UserError(path + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
        }
        if (!obj.is_object())
            throw UserError(path + ":" + std::to_string(lineno) + ": expected a JSON object");
        fn(lineno, obj);
    }
}

// Unknown extra fields are ignored; warn once per field name per file.
class UnknownFieldWarner {
public:
    UnknownFieldWarner(std::string path, std::set<std::string> known)
        : path_(std::move(path)), known_(std::move(known)) {}

    void check(std::size_t lineno, const json& obj) {
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            if (known_.count(it.key())) continue;
            if (warned_.insert(it.key()).second)
                std::cerr << "warning: " << path_ << ":" << lineno << ": ignoring unknown field \""
                          << it.key() << "\"\n";
        }
    }

private:
    std::string path_;
    std::set<std::string> known_;
    std::set<std::string> warned_;
};

inline std::string require_string(const json& obj, const char* field, const std::string& path,
                                  std::size_t lineno) {
    if (!obj.contains(field) || !obj[field].is_string())
        throw UserError(path + ":" + std::to_string(lineno) + ": missing or non-string field \"" +
                        field + "\"");
    return obj[field].get<std::string>();
}

}  // namespace detail

// kb.jsonl: {"id": string, "names": [string, ...]}
inline KnowledgeBase load_kb(const std::string& path) {
    KnowledgeBase kb;
    detail::UnknownFieldWarner warner(path, {"id", "names"});
    detail::for_each_jsonl(path, [&](std::size_t lineno, const detail::json& obj) {
        warner.check(lineno, obj);
        Concept c;
        c.id = ConceptId(detail::require_string(obj, "id", path, lineno));
        if (!ConceptId::is_valid(c.id.value))
            throw UserError(path + ":" + std::to_string(lineno) + ": invalid concept id");
        if (!obj.contains("names") || !obj["names"].is_array() || obj["names"].empty())
            throw UserError(path + ":" + std::to_string(lineno) + ": concept " + c.id.value +
                            " has an empty or missing names array");
        for (const auto& n : obj["names"]) {
            if (!n.is_string() || n.get<std::string>().empty())
                throw UserError(path + ":" + std::to_string(lineno) +
                                ": concept names must be non-empty strings");
            c.names.push_back(n.get<std::string>());
        }
        for (std::size_t i = 0; i < c.names.size(); ++i)
            for (std::size_t j = i + 1; j < c.names.size(); ++j)
                if (c.names[i] == c.names[j])
                    throw UserError(path + ":" + std::to_string(lineno) + ": concept " + c.id.value +
                                    " has duplicate name \"" + c.names[i] + "\"");
        try {
            kb.add(std::move(c));
        } catch (const UserError& e) {
            throw UserError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    });
    if (kb.empty()) {
        // An empty KB is permitted at load time; consumers that need
        // concepts (index building) reject it with context.
    }
    return kb;
}

inline void save_kb(const KnowledgeBase& kb, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UserError("cannot open output file: " + path);
    for (const auto& c : kb.concepts()) {
        detail::json obj;
        obj["id"] = c.id.value;
        obj["names"] = c.names;
        out << obj.dump() << "\n";
    }
}

// dataset.jsonl: {"doc_id": string, "mention": string, "context": string|null,
//                 "gold": string|"NIL" (optional)}
inline Dataset load_dataset(const std::string& path, SplitTag tag = SplitTag::Unspecified) {
    Dataset ds;
    ds.split_tag = tag;
    detail::UnknownFieldWarner warner(path, {"doc_id", "mention", "context", "gold"});
    detail::for_each_jsonl(path, [&](std::size_t lineno, const detail::json& obj) {
        warner.check(lineno, obj);
        Mention m;
        m.doc_id = detail::require_string(obj, "doc_id", path, lineno);
        m.text = detail::require_string(obj, "mention", path, lineno);
        if (m.text.empty())
            throw UserError(path + ":" + std::to_string(lineno) + ": empty mention text");
        if (obj.contains("context") && !obj["context"].is_null()) {
            if (!obj["context"].is_string())
                throw UserError(path + ":" + std::to_string(lineno) + ": context must be string or null");
            m.context = obj["context"].get<std::string>();
        }
        if (!obj.contains("gold")) {
            m.gold = GoldLabel::unknown();
        } else {
            const std::string g = detail::require_string(obj, "gold", path, lineno);
            if (g == "NIL") {
                m.gold = GoldLabel::nil();
            } else {
                if (!ConceptId::is_valid(g))
                    throw UserError(path + ":" + std::to_string(lineno) + ": invalid gold concept id");
                m.gold = GoldLabel::linked(ConceptId(g));
            }
        }
        ds.mentions.push_back(std::move(m));
    });
    return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UserError("cannot open output file: " + path);
    for (const auto& m : ds.mentions) {
        detail::json obj;
        obj["doc_id"] = m.doc_id;
        obj["mention"] = m.text;
        obj["context"] = m.context ? detail::json(*m.context) : detail::json(nullptr);
        if (m.gold.is_concept())
            obj["gold"] = m.gold.id.value;
        else if (m.gold.is_nil())
            obj["gold"] = "NIL";
        out << obj.dump() << "\n";
    }
}

// docs.jsonl: {"doc_id": string, "text": string}
inline std::vector<Document> load_documents(const std::string& path) {
    std::vector<Document> docs;
    std::set<std::string> seen;
    detail::UnknownFieldWarner warner(path, {"doc_id", "text"});
    detail::for_each_jsonl(path, [&](std::size_t lineno, const detail::json& obj) {
        warner.check(lineno, obj);
        Document d;
        d.id = detail::require_string(obj, "doc_id", path, lineno);
        d.text = detail::require_string(obj, "text", path, lineno);
        if (!seen.insert(d.id).second)
            throw UserError(path + ":" + std::to_string(lineno) + ": duplicate doc_id \"" + d.id + "\"");
        docs.push_back(std::move(d));
    });
    return docs;
}

inline void save_documents(const std::vector<Document>& docs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UserError("cannot open output file: " + path);
    for (const auto& d : docs) {
        detail::json obj;
        obj["doc_id"] = d.id;
        obj["text"] = d.text;
        out << obj.dump() << "\n";
    }
}

}  // namespace bionorm
