#include "surge/kg.hpp"

#include "surge/error.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <set>
#include <unordered_set>

namespace surge::kg {

std::vector<TokenId> tokenize_symbol(std::string_view surface, const Vocabulary& vocab) {
    std::vector<TokenId> ids = vocab.encode(surface);
    if (ids.empty()) {
        ids.push_back(kUnk);
    }
    return ids;
}

EntityId KnowledgeGraph::intern_entity(const std::string& surface, const Vocabulary& vocab) {
    if (auto it = entity_by_surface_.find(surface); it != entity_by_surface_.end()) {
        return it->second;
    }
    const auto id = static_cast<EntityId>(entities_.size());
    Entity e{id, surface, tokenize_symbol(surface, vocab)};
    // Surfaces containing unknown words cannot be matched reliably.
    const bool linkable = std::find(e.tokens.begin(), e.tokens.end(), kUnk) == e.tokens.end();
    if (linkable && !surface_index_.contains(e.tokens)) {
        surface_index_.emplace(e.tokens, id);
        max_surface_len_ = std::max(max_surface_len_, e.tokens.size());
    }
    entity_by_surface_.emplace(surface, id);
    entities_.push_back(std::move(e));
    out_index_.emplace_back();
    in_index_.emplace_back();
    return id;
}

RelationId KnowledgeGraph::intern_relation(const std::string& surface, const Vocabulary& vocab) {
    if (auto it = relation_by_surface_.find(surface); it != relation_by_surface_.end()) {
        return it->second;
    }
    const auto id = static_cast<RelationId>(relations_.size());
    const std::string inverse_surface = kInversePrefix + surface;
    relations_.push_back(Relation{id, surface, id + 1, tokenize_symbol(surface, vocab), false});
    relations_.push_back(Relation{id + 1, inverse_surface, id, tokenize_symbol(inverse_surface, vocab), true});
    relation_by_surface_.emplace(surface, id);
    relation_by_surface_.emplace(inverse_surface, id + 1);
    return id;
}

KnowledgeGraph KnowledgeGraph::load(std::istream& in, const Vocabulary& vocab) {
    KnowledgeGraph g;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) {
                break;
            }
            start = tab + 1;
        }
        if (fields.size() != 3) {
            throw ParseError("expected 3 tab-separated fields, got " + std::to_string(fields.size()), line_no);
        }
        for (const auto& f : fields) {
            if (f.empty()) {
                throw ParseError("empty field", line_no);
            }
        }
        std::string head = fields[0];
        std::string rel = fields[1];
        std::string tail = fields[2];
        if (rel.front() == kInversePrefix) {
            rel.erase(0, 1);
            if (rel.empty()) {
                throw ParseError("relation consists only of the inverse marker", line_no);
            }
            std::swap(head, tail);
        }
        const EntityId h = g.intern_entity(head, vocab);
        const RelationId r = g.intern_relation(rel, vocab);
        const EntityId t = g.intern_entity(tail, vocab);
        const Triplet trip{h, r, t};
        if (g.triplet_set_.insert(trip).second) {
            const auto tid = static_cast<TripletId>(g.triplets_.size());
            g.triplets_.push_back(trip);
            g.out_index_[h].push_back(tid);
            g.in_index_[t].push_back(tid);
        }
    }
    if (g.triplets_.empty()) {
        throw Error("knowledge graph source contains no triplets");
    }
    return g;
}

KnowledgeGraph KnowledgeGraph::load_file(const std::filesystem::path& path, const Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open triples file " + path.string());
    }
    return load(in, vocab);
}

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view surface) const {
    auto it = entity_by_surface_.find(surface);
    if (it == entity_by_surface_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view surface) const {
    auto it = relation_by_surface_.find(surface);
    if (it == relation_by_surface_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<Triplet> KnowledgeGraph::find_triplet(std::string_view head, std::string_view relation,
                                                    std::string_view tail) const {
    auto h = find_entity(head);
    auto r = find_relation(relation);
    auto t = find_entity(tail);
    if (!h || !r || !t) {
        return std::nullopt;
    }
    Triplet trip{*h, *r, *t};
    if (relations_[*r].is_inverse) {
        trip = invert(trip);
    }
    if (!contains(trip)) {
        return std::nullopt;
    }
    return trip;
}

bool KnowledgeGraph::contains(const Triplet& t) const { return triplet_set_.contains(t); }

Triplet KnowledgeGraph::invert(const Triplet& t) const {
    return Triplet{t.tail, relations_.at(t.relation).inverse_id, t.head};
}

std::vector<Mention> KnowledgeGraph::link_entities(std::span<const TokenId> tokens) const {
    std::vector<Mention> out;
    std::size_t i = 0;
    std::vector<TokenId> key;
    while (i < tokens.size()) {
        const std::size_t longest = std::min(max_surface_len_, tokens.size() - i);
        bool matched = false;
        for (std::size_t len = longest; len >= 1; --len) {
            key.assign(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                       tokens.begin() + static_cast<std::ptrdiff_t>(i + len));
            if (auto it = surface_index_.find(key); it != surface_index_.end()) {
                out.push_back(Mention{it->second, i, len});
                i += len;
                matched = true;
                break;
            }
        }
        if (!matched) {
            ++i;
        }
    }
    return out;
}

std::vector<Triplet> KnowledgeGraph::khop_candidates(std::span<const EntityId> seeds, int k,
                                                     std::size_t cap) const {
    if (k < 1) {
        throw Error("khop_candidates: k must be >= 1");
    }
    std::unordered_set<EntityId> reached;
    std::vector<EntityId> frontier;
    for (EntityId s : seeds) {
        if (s >= entities_.size()) {
            throw Error("khop_candidates: unknown seed entity " + std::to_string(s));
        }
        if (reached.insert(s).second) {
            frontier.push_back(s);
        }
    }
    for (int step = 1; step < k && !frontier.empty(); ++step) {
        std::vector<EntityId> next;
        for (EntityId e : frontier) {
            for (TripletId tid : out_index_[e]) {
                if (reached.insert(triplets_[tid].tail).second) next.push_back(triplets_[tid].tail);
            }
            for (TripletId tid : in_index_[e]) {
                if (reached.insert(triplets_[tid].head).second) next.push_back(triplets_[tid].head);
            }
        }
        frontier = std::move(next);
    }
    std::set<Triplet> found;
    for (EntityId e : reached) {
        for (TripletId tid : out_index_[e]) found.insert(triplets_[tid]);
        for (TripletId tid : in_index_[e]) found.insert(triplets_[tid]);
    }
    std::vector<Triplet> out(found.begin(), found.end());
    if (out.size() > cap) {
        out.resize(cap);
    }
    return out;
}

bool KnowledgeGraph::check_indices() const {
    std::vector<std::vector<TripletId>> out(entities_.size());
    std::vector<std::vector<TripletId>> in(entities_.size());
    std::set<Triplet> unique;
    for (TripletId tid = 0; tid < triplets_.size(); ++tid) {
        const Triplet& t = triplets_[tid];
        if (t.head >= entities_.size() || t.tail >= entities_.size() || t.relation >= relations_.size()) {
            return false;
        }
        if (relations_[t.relation].is_inverse || !unique.insert(t).second) {
            return false;
        }
        out[t.head].push_back(tid);
        in[t.tail].push_back(tid);
    }
    for (std::size_t e = 0; e < entities_.size(); ++e) {
        auto a = out_index_[e];
        auto b = in_index_[e];
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        if (a != out[e] || b != in[e]) {
            return false;
        }
    }
    for (const auto& r : relations_) {
        if (relations_[r.inverse_id].inverse_id != r.id || r.inverse_id == r.id) {
            return false;
        }
    }
    return true;
}

std::string KnowledgeGraph::format(const Triplet& t) const {
    return entity(t.head).surface + '\t' + relation(t.relation).surface + '\t' + entity(t.tail).surface;
}

}  // namespace surge::kg
