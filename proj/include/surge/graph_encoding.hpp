#pragma once

#include "surge/graph_nets.hpp"
#include "surge/kg.hpp"
#include "surge/seq_model.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace surge::encoding {

using nn::Tensor;

enum class EncodingVariant {
    Naive,               // q(h) q(r) q(t) per triplet, in the given order
    InvariantFull,       // naive over SORT(INV(Z))
    EntityOnly,          // sorted unique entities, no perturbation
    InvariantEfficient,  // sorted unique entities perturbed by the graph
};

[[nodiscard]] std::string to_string(EncodingVariant v);
[[nodiscard]] EncodingVariant parse_variant(std::string_view name);

/// Canonical order by (head, relation, tail) surfaces, then ids.
std::vector<kg::Triplet> sort_triplets(std::vector<kg::Triplet> z, const kg::KnowledgeGraph& graph);

/// Z together with the inverse of every member, deduplicated, in canonical order.
std::vector<kg::Triplet> inv_closure(const std::vector<kg::Triplet>& z, const kg::KnowledgeGraph& graph);

/// Unique head and tail entities sorted by surface, then id.
std::vector<kg::EntityId> ent(const std::vector<kg::Triplet>& z, const kg::KnowledgeGraph& graph);

struct EncodingLimits {
    std::size_t max_hist_len = 256;
    std::size_t max_know_len = 128;
};

struct EntitySpan {
    kg::EntityId entity = 0;
    std::size_t begin = 0;
    std::size_t length = 0;
};

/// Per-entity affine parameters (one row per entity in sorted order).
struct PerturbationOutput {
    std::vector<kg::EntityId> entities;
    Tensor gamma;
    Tensor delta;
    Tensor eta;
    Tensor perturbed;  // (1 + gamma) * f(a) + delta
};

struct EncodedInput {
    std::vector<TokenId> tokens;  // prefix followed by history
    Tensor embeddings;            // rows = tokens.size(); positions included
    std::size_t prefix_len = 0;
    std::vector<EntitySpan> entity_spans;
    std::optional<PerturbationOutput> perturbation;
};

/// Prefix token ids of a variant, capped at `max_know_len` by dropping whole
/// trailing units (triplets or entities).
std::vector<TokenId> prefix_tokens(EncodingVariant variant, const std::vector<kg::Triplet>& z,
                                   const kg::KnowledgeGraph& graph,
                                   std::size_t max_know_len = static_cast<std::size_t>(-1));

/// Holds the graph-conditioned perturbation: a relation-aware GNN over
/// INV(Z) followed by two MLPs producing gamma and delta.
class GraphEncoder {
public:
    GraphEncoder(std::size_t d_model, std::size_t num_relations, nn::ParamStore& store, nn::Rng& rng,
                 const std::string& prefix = "encoding");

    /// `entity_rows` holds f(a) for each entity in `entities` order; `z_closed`
    /// must be inverse-closed and reference only those entities.
    [[nodiscard]] PerturbationOutput perturb(const Tensor& entity_rows, const std::vector<kg::EntityId>& entities,
                                             const std::vector<kg::Triplet>& z_closed) const;

    [[nodiscard]] EncodedInput encode(EncodingVariant variant, std::span<const TokenId> history,
                                      const std::vector<kg::Triplet>& z, const kg::KnowledgeGraph& graph,
                                      const seq::Seq2Seq& model, const EncodingLimits& limits = {}) const;

    [[nodiscard]] const gnn::RelationalGnn& rgnn() const { return rgnn_; }
    [[nodiscard]] const nn::Mlp& gamma_mlp() const { return gamma_mlp_; }
    [[nodiscard]] const nn::Mlp& delta_mlp() const { return delta_mlp_; }
    [[nodiscard]] const Tensor& relation_table() const { return relation_table_; }

private:
    Tensor relation_table_;
    gnn::RelationalGnn rgnn_;
    nn::Mlp gamma_mlp_;
    nn::Mlp delta_mlp_;
};

/// Prefix tokens and per-entity (gamma-norm, delta-norm) as text.
std::string debug_dump(const EncodedInput& input, const kg::KnowledgeGraph& graph, const Vocabulary& vocab);

}  // namespace surge::encoding
