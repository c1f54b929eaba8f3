#pragma once

#include "surge/graph_nets.hpp"
#include "surge/kg.hpp"
#include "surge/seq_model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace surge::retrieval {

using nn::Tensor;

struct RetrieverConfig {
    std::size_t d_model = 64;
    std::size_t relation_width = gnn::kRelationWidth;
    std::size_t gnn_layers = 2;
};

/// s(x) and the per-token attention weights that produced it.
struct ContextEmbedding {
    Tensor vector;  // 1 x d_model
    std::vector<double> attention;
};

/// Scored retrieval candidates for one dialogue.
struct CandidateSet {
    std::vector<kg::Triplet> triplets;
    Tensor scores;     // 1 x C, d(z)^T s(x)
    Tensor log_probs;  // 1 x C
    std::vector<double> probs;
    std::vector<bool> gold;  // empty when unknown

    [[nodiscard]] std::size_t size() const { return triplets.size(); }
};

struct SampledSubgraph {
    std::vector<std::size_t> indices;  // into CandidateSet::triplets
    Tensor log_prob;                   // sum of log p(z_i | x)
};

/// Dense triplet scorer: GCN over entities, edge-hypergraph passing over
/// relations, and an MLP over [head || relation || tail].
class Retriever {
public:
    Retriever(const RetrieverConfig& config, std::size_t num_relations, nn::ParamStore& store, nn::Rng& rng,
              const std::string& prefix = "retriever");

    /// Attention-pooled context vector over unmasked encoder states.
    [[nodiscard]] ContextEmbedding context_embedding(const seq::EncoderStates& enc) const;

    /// Initial node vectors for every entity touched by `candidates`: the mean
    /// encoder state over the entity's leftmost mention, or zeros.
    [[nodiscard]] gnn::NodeEmbeddings initial_nodes(const std::vector<kg::Triplet>& candidates,
                                                    const std::vector<kg::Mention>& mentions,
                                                    const Tensor& states) const;

    /// One row per candidate, d_model wide.
    [[nodiscard]] Tensor triplet_embeddings(const std::vector<kg::Triplet>& candidates,
                                            const gnn::NodeEmbeddings& nodes) const;

    /// Full scoring path from (detached) history encoder states.
    [[nodiscard]] CandidateSet score(const seq::EncoderStates& history, const std::vector<kg::Mention>& mentions,
                                     const std::vector<kg::Triplet>& candidates) const;

    [[nodiscard]] const Tensor& relation_table() const { return relation_table_; }
    [[nodiscard]] const gnn::GcnNodeNet& node_net() const { return node_net_; }
    [[nodiscard]] const gnn::EdgeHypergraphNet& edge_net() const { return edge_net_; }
    [[nodiscard]] const nn::Mlp& triplet_mlp() const { return triplet_mlp_; }
    [[nodiscard]] const nn::Mlp& attention_mlp() const { return attention_mlp_; }

private:
    RetrieverConfig config_;
    nn::Mlp attention_mlp_;
    Tensor relation_table_;
    gnn::GcnNodeNet node_net_;
    gnn::EdgeHypergraphNet edge_net_;
    nn::Mlp triplet_mlp_;
};

/// Mean of `states` rows over the entity's leftmost mention; zeros if unmentioned.
Tensor entity_init_embedding(kg::EntityId entity, const std::vector<kg::Mention>& mentions, const Tensor& states);

/// Softmax over inner products of triplet embeddings (C x d) with s(x) (1 x d).
CandidateSet retrieval_distribution(std::vector<kg::Triplet> triplets, const Tensor& triplet_embeddings,
                                    const Tensor& context);

/// Builds a CandidateSet from fixed scores (baselines).
CandidateSet candidate_set_from_scores(std::vector<kg::Triplet> triplets, std::span<const double> scores);

/// Draws k subgraphs of n distinct triplets by sequential renormalized sampling
/// without replacement. n is clamped to the candidate count. When `exhaustive`
/// is set and C(|candidates|, n) <= kExhaustiveLimit, every n-subset is
/// returned instead (in lexicographic order) and k is ignored.
std::vector<SampledSubgraph> sample_subgraphs(const CandidateSet& dist, std::size_t n, std::size_t k,
                                              std::uint64_t seed, bool exhaustive = false);

inline constexpr std::size_t kExhaustiveLimit = 64;

/// Candidate indices by descending probability; ties keep candidate order.
std::vector<std::size_t> ranking(const CandidateSet& dist);

/// Indices of the n most probable candidates in candidate order; ties go to
/// the earlier candidate.
std::vector<std::size_t> top_n(const CandidateSet& dist, std::size_t n);

/// Sum of log-probabilities of the selected candidates.
Tensor subgraph_log_prob(const CandidateSet& dist, std::span<const std::size_t> indices);

/// 1-based rank of the best-ranked gold candidate, 0 if none is gold.
std::size_t gold_rank(std::span<const double> scores, const std::vector<bool>& gold);

struct RetrievalMetrics {
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits3 = 0.0;
    double hits5 = 0.0;
    double hits10 = 0.0;
    double hits100 = 0.0;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;  // examples without a gold candidate
};

/// Accumulates ranking metrics over examples.
class RankingAccumulator {
public:
    void add(std::span<const double> scores, const std::vector<bool>& gold);
    void add(const CandidateSet& dist) { add(dist.probs, dist.gold); }
    [[nodiscard]] RetrievalMetrics result() const;

private:
    std::vector<std::size_t> ranks_;
    std::size_t skipped_ = 0;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Okapi BM25 of `query` against each document, with idf = ln(1 + (N - df + 0.5)/(df + 0.5)).
std::vector<double> bm25_scores(std::span<const TokenId> query, const std::vector<std::vector<TokenId>>& docs,
                                const Bm25Params& params = {});

/// Sparse baseline: candidates flattened to head||relation||tail token bags.
CandidateSet bm25_baseline_scores(std::span<const TokenId> history, std::vector<kg::Triplet> candidates,
                                  const kg::KnowledgeGraph& graph, const Bm25Params& params = {});

/// Uniform random scores.
CandidateSet random_baseline_scores(std::vector<kg::Triplet> candidates, std::uint64_t seed);

}  // namespace surge::retrieval
