#pragma once

#include "surge/kg.hpp"
#include "surge/layers.hpp"

#include <optional>
#include <vector>

namespace surge::gnn {

using nn::Tensor;

/// Width of relation embedding rows.
inline constexpr std::size_t kRelationWidth = 128;

/// Node vectors over a local entity index space.
struct NodeEmbeddings {
    std::vector<kg::EntityId> ids;
    Tensor rows;                     // ids.size() x width
    std::vector<bool> from_context;  // false = zero-initialized

    [[nodiscard]] std::optional<std::size_t> index_of(kg::EntityId id) const;
};

/// A triplet over local node indices; `relation` stays a graph relation id.
struct LocalEdge {
    std::size_t head = 0;
    kg::RelationId relation = 0;
    std::size_t tail = 0;
};

/// Maps triplets onto the node order of `nodes`; throws if an endpoint is missing.
std::vector<LocalEdge> localize(const std::vector<kg::Triplet>& triplets, const NodeEmbeddings& nodes);

/// Mean over each node's incident edges of the opposite endpoint (row-stochastic,
/// empty rows for isolated nodes). Both edge directions count as neighbors.
nn::Matrix node_mean_operator(std::size_t num_nodes, const std::vector<LocalEdge>& edges);

/// Mean over triplets sharing at least one endpoint with each triplet, excluding itself.
nn::Matrix edge_mean_operator(const std::vector<LocalEdge>& edges);

/// Message passing where each layer computes ReLU(W [x || AGG(x)] + b).
class GcnNodeNet {
public:
    GcnNodeNet() = default;
    GcnNodeNet(nn::ParamStore& store, const std::string& name, std::size_t width, std::size_t layers, nn::Rng& rng);

    [[nodiscard]] Tensor forward(const Tensor& nodes, const std::vector<LocalEdge>& edges) const;
    [[nodiscard]] const std::vector<nn::Linear>& layers() const { return layers_; }

private:
    std::vector<nn::Linear> layers_;
};

/// Edge-level passing on the hypergraph whose hyperedges are entities: each
/// triplet aggregates the vectors of triplets sharing an endpoint.
class EdgeHypergraphNet {
public:
    EdgeHypergraphNet() = default;
    EdgeHypergraphNet(nn::ParamStore& store, const std::string& name, std::size_t width, std::size_t layers,
                      nn::Rng& rng);

    [[nodiscard]] Tensor forward(const Tensor& edge_vectors, const std::vector<LocalEdge>& edges) const;
    [[nodiscard]] const std::vector<nn::Linear>& layers() const { return layers_; }

private:
    std::vector<nn::Linear> layers_;
};

/// One relation-aware layer with subtraction composition: the message along
/// (h, r, t) into t is W (x_h - P rel_r); output ReLU(S x_t + mean(msgs) + b).
/// The same W serves a relation and its inverse.
class RelationalGnn {
public:
    RelationalGnn() = default;
    RelationalGnn(nn::ParamStore& store, const std::string& name, std::size_t width, std::size_t relation_width,
                  nn::Rng& rng);

    /// `relations` is the full relation table (one row per relation id,
    /// inverses included). `edges` must already be inverse-closed.
    [[nodiscard]] Tensor forward(const Tensor& nodes, const Tensor& relations, const std::vector<LocalEdge>& edges) const;

    nn::Linear message;
    nn::Linear self;
    nn::Linear relation_proj;
};

}  // namespace surge::gnn
