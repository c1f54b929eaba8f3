#pragma once

#include "surge/vocab.hpp"

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace surge::kg {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;
using TripletId = std::uint32_t;

inline constexpr char kInversePrefix = '~';

struct Entity {
    EntityId id = 0;
    std::string surface;
    std::vector<TokenId> tokens;
};

struct Relation {
    RelationId id = 0;
    std::string surface;
    RelationId inverse_id = 0;
    std::vector<TokenId> tokens;
    bool is_inverse = false;
};

struct Triplet {
    EntityId head = 0;
    RelationId relation = 0;
    EntityId tail = 0;

    auto operator<=>(const Triplet&) const = default;
};

/// One exact surface match of an entity inside a token sequence.
struct Mention {
    EntityId entity = 0;
    std::size_t begin = 0;  // token offset
    std::size_t length = 0;

    auto operator<=>(const Mention&) const = default;
};

/// Maps an entity or relation surface to token ids (the symbol -> token map).
/// Never empty: a surface with no word units maps to a single UNK.
std::vector<TokenId> tokenize_symbol(std::string_view surface, const Vocabulary& vocab);

inline constexpr std::size_t kDefaultCandidateCap = 256;

/// Immutable multi-relational graph. Every relation r is stored with a
/// materialized inverse whose surface is "~" + surface(r); only original
/// relations appear in the stored triplets.
class KnowledgeGraph {
public:
    /// Parses `head<TAB>relation<TAB>tail` lines. Blank lines are ignored;
    /// a relation written as "~r" is stored as the inverted triplet over r.
    static KnowledgeGraph load(std::istream& in, const Vocabulary& vocab);
    static KnowledgeGraph load_file(const std::filesystem::path& path, const Vocabulary& vocab);

    [[nodiscard]] const std::vector<Entity>& entities() const { return entities_; }
    [[nodiscard]] const std::vector<Relation>& relations() const { return relations_; }
    [[nodiscard]] const std::vector<Triplet>& triplets() const { return triplets_; }

    [[nodiscard]] const Entity& entity(EntityId id) const { return entities_.at(id); }
    [[nodiscard]] const Relation& relation(RelationId id) const { return relations_.at(id); }
    [[nodiscard]] std::optional<EntityId> find_entity(std::string_view surface) const;
    [[nodiscard]] std::optional<RelationId> find_relation(std::string_view surface) const;
    /// Resolves a surface triple; relation may be an inverse surface.
    [[nodiscard]] std::optional<Triplet> find_triplet(std::string_view head, std::string_view relation,
                                                      std::string_view tail) const;
    [[nodiscard]] bool contains(const Triplet& t) const;

    [[nodiscard]] std::span<const TripletId> out_edges(EntityId e) const { return out_index_.at(e); }
    [[nodiscard]] std::span<const TripletId> in_edges(EntityId e) const { return in_index_.at(e); }

    /// (t, ~r, h) for (h, r, t).
    [[nodiscard]] Triplet invert(const Triplet& t) const;

    /// Leftmost-longest exact token matches of entity surfaces.
    [[nodiscard]] std::vector<Mention> link_entities(std::span<const TokenId> tokens) const;

    /// Triplets incident to any entity reachable within k-1 expansion steps
    /// from `seeds`, sorted by (head, relation, tail) and capped at `cap`.
    [[nodiscard]] std::vector<Triplet> khop_candidates(std::span<const EntityId> seeds, int k,
                                                       std::size_t cap = kDefaultCandidateCap) const;

    /// Rebuilds both adjacency indices by a linear scan and compares.
    [[nodiscard]] bool check_indices() const;

    [[nodiscard]] std::string format(const Triplet& t) const;

private:
    EntityId intern_entity(const std::string& surface, const Vocabulary& vocab);
    RelationId intern_relation(const std::string& surface, const Vocabulary& vocab);

    std::vector<Entity> entities_;
    std::vector<Relation> relations_;
    std::vector<Triplet> triplets_;
    std::set<Triplet> triplet_set_;
    std::vector<std::vector<TripletId>> out_index_;
    std::vector<std::vector<TripletId>> in_index_;
    std::map<std::string, EntityId, std::less<>> entity_by_surface_;
    std::map<std::string, RelationId, std::less<>> relation_by_surface_;
    std::map<std::vector<TokenId>, EntityId> surface_index_;
    std::size_t max_surface_len_ = 0;
};

}  // namespace surge::kg
