#include "surge/graph_nets.hpp"

#include "surge/error.hpp"

#include <algorithm>

namespace surge::gnn {

std::optional<std::size_t> NodeEmbeddings::index_of(kg::EntityId id) const {
    auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - ids.begin());
}

std::vector<LocalEdge> localize(const std::vector<kg::Triplet>& triplets, const NodeEmbeddings& nodes) {
    std::vector<LocalEdge> out;
    out.reserve(triplets.size());
    for (const auto& t : triplets) {
        auto h = nodes.index_of(t.head);
        auto tl = nodes.index_of(t.tail);
        if (!h || !tl) {
            throw Error("graph pass: triplet endpoint missing from node embeddings");
        }
        out.push_back(LocalEdge{*h, t.relation, *tl});
    }
    return out;
}

nn::Matrix node_mean_operator(std::size_t num_nodes, const std::vector<LocalEdge>& edges) {
    const auto n = static_cast<Eigen::Index>(num_nodes);
    nn::Matrix a = nn::Matrix::Zero(n, n);
    for (const auto& e : edges) {
        const auto h = static_cast<Eigen::Index>(e.head);
        const auto t = static_cast<Eigen::Index>(e.tail);
        a(t, h) += 1.0;
        if (h != t) {
            a(h, t) += 1.0;
        }
    }
    for (Eigen::Index r = 0; r < n; ++r) {
        const double deg = a.row(r).sum();
        if (deg > 0.0) {
            a.row(r) /= deg;
        }
    }
    return a;
}

nn::Matrix edge_mean_operator(const std::vector<LocalEdge>& edges) {
    const auto m = static_cast<Eigen::Index>(edges.size());
    nn::Matrix a = nn::Matrix::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& ei = edges[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < m; ++j) {
            if (i == j) {
                continue;
            }
            const auto& ej = edges[static_cast<std::size_t>(j)];
            if (ei.head == ej.head || ei.head == ej.tail || ei.tail == ej.head || ei.tail == ej.tail) {
                a(i, j) = 1.0;
            }
        }
        const double deg = a.row(i).sum();
        if (deg > 0.0) {
            a.row(i) /= deg;
        }
    }
    return a;
}

GcnNodeNet::GcnNodeNet(nn::ParamStore& store, const std::string& name, std::size_t width, std::size_t layers,
                       nn::Rng& rng) {
    for (std::size_t i = 0; i < layers; ++i) {
        layers_.emplace_back(store, name + "." + std::to_string(i), 2 * width, width, rng);
    }
}

Tensor GcnNodeNet::forward(const Tensor& nodes, const std::vector<LocalEdge>& edges) const {
    const nn::Matrix agg = node_mean_operator(nodes.rows(), edges);
    Tensor x = nodes;
    for (const auto& layer : layers_) {
        x = nn::relu(layer(nn::concat_cols({x, nn::constant_matmul(agg, x)})));
    }
    return x;
}

EdgeHypergraphNet::EdgeHypergraphNet(nn::ParamStore& store, const std::string& name, std::size_t width,
                                     std::size_t layers, nn::Rng& rng) {
    for (std::size_t i = 0; i < layers; ++i) {
        layers_.emplace_back(store, name + "." + std::to_string(i), 2 * width, width, rng);
    }
}

Tensor EdgeHypergraphNet::forward(const Tensor& edge_vectors, const std::vector<LocalEdge>& edges) const {
    if (edge_vectors.rows() != edges.size()) {
        throw Error("edge pass: one vector per triplet required");
    }
    const nn::Matrix agg = edge_mean_operator(edges);
    Tensor x = edge_vectors;
    for (const auto& layer : layers_) {
        x = nn::relu(layer(nn::concat_cols({x, nn::constant_matmul(agg, x)})));
    }
    return x;
}

RelationalGnn::RelationalGnn(nn::ParamStore& store, const std::string& name, std::size_t width,
                             std::size_t relation_width, nn::Rng& rng)
    : message(store, name + ".message", width, width, rng, false),
      self(store, name + ".self", width, width, rng),
      relation_proj(store, name + ".rel_proj", relation_width, width, rng, false) {}

Tensor RelationalGnn::forward(const Tensor& nodes, const Tensor& relations, const std::vector<LocalEdge>& edges) const {
    const auto n = static_cast<Eigen::Index>(nodes.rows());
    Tensor self_term = self(nodes);
    if (edges.empty()) {
        return nn::relu(self_term);
    }
    const auto m = static_cast<Eigen::Index>(edges.size());
    nn::Matrix head_select = nn::Matrix::Zero(m, n);
    nn::Matrix incoming = nn::Matrix::Zero(n, m);
    std::vector<std::size_t> rel_ids;
    rel_ids.reserve(edges.size());
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& e = edges[static_cast<std::size_t>(i)];
        if (e.relation >= relations.rows()) {
            throw Error("relational pass: no embedding for relation " + std::to_string(e.relation));
        }
        head_select(i, static_cast<Eigen::Index>(e.head)) = 1.0;
        incoming(static_cast<Eigen::Index>(e.tail), i) = 1.0;
        rel_ids.push_back(e.relation);
    }
    for (Eigen::Index r = 0; r < n; ++r) {
        const double deg = incoming.row(r).sum();
        if (deg > 0.0) {
            incoming.row(r) /= deg;
        }
    }
    Tensor sources = nn::constant_matmul(head_select, nodes);
    Tensor rel = relation_proj(nn::gather_rows(relations, rel_ids));
    Tensor messages = message(nn::sub(sources, rel));
    return nn::relu(nn::add(self_term, nn::constant_matmul(incoming, messages)));
}

}  // namespace surge::gnn
