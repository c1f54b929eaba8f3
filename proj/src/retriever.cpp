#include "surge/retriever.hpp"

#include "surge/error.hpp"
#include "surge/log.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace surge::retrieval {

namespace {

constexpr double kMasked = -1e30;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t binomial(std::size_t n, std::size_t k) {
    if (k > n) {
        return 0;
    }
    k = std::min(k, n - k);
    std::size_t r = 1;
    for (std::size_t i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
        if (r > 1'000'000) {
            return r;  // only compared against a small limit
        }
    }
    return r;
}

}  // namespace

Retriever::Retriever(const RetrieverConfig& config, std::size_t num_relations, nn::ParamStore& store, nn::Rng& rng,
                     const std::string& prefix)
    : config_(config),
      attention_mlp_(store, prefix + ".attn_mlp", config.d_model, config.d_model, 1, rng),
      relation_table_(store.create(prefix + ".rel_emb", num_relations, config.relation_width, nn::Init::Normal, rng)),
      node_net_(store, prefix + ".gcn", config.d_model, config.gnn_layers, rng),
      edge_net_(store, prefix + ".ehgnn", config.relation_width, config.gnn_layers, rng),
      triplet_mlp_(store, prefix + ".triplet_mlp", 2 * config.d_model + config.relation_width, config.d_model,
                   config.d_model, rng) {}

ContextEmbedding Retriever::context_embedding(const seq::EncoderStates& enc) const {
    const std::size_t n = enc.states.rows();
    if (enc.mask.size() != n) {
        throw Error("context_embedding: mask length mismatch");
    }
    nn::Matrix bias = nn::Matrix::Zero(1, static_cast<Eigen::Index>(n));
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (enc.mask[i]) {
            any = true;
        } else {
            bias(0, static_cast<Eigen::Index>(i)) = kMasked;
        }
    }
    if (!any) {
        throw Error("context_embedding: every position is masked");
    }
    Tensor logits = nn::add_constant(nn::transpose(attention_mlp_(enc.states)), bias);
    Tensor alpha = nn::softmax(logits);
    ContextEmbedding out;
    out.vector = nn::matmul(alpha, enc.states);
    out.attention.assign(alpha.value().data(), alpha.value().data() + alpha.size());
    return out;
}

Tensor entity_init_embedding(kg::EntityId entity, const std::vector<kg::Mention>& mentions, const Tensor& states) {
    const kg::Mention* first = nullptr;
    for (const auto& m : mentions) {
        if (m.entity == entity && (first == nullptr || m.begin < first->begin)) {
            first = &m;
        }
    }
    if (first == nullptr) {
        return Tensor::zeros(1, states.cols());
    }
    if (first->begin + first->length > states.rows()) {
        throw Error("entity mention span exceeds encoder states");
    }
    return nn::mean_rows(nn::slice_rows(states, first->begin, first->length));
}

gnn::NodeEmbeddings Retriever::initial_nodes(const std::vector<kg::Triplet>& candidates,
                                             const std::vector<kg::Mention>& mentions, const Tensor& states) const {
    gnn::NodeEmbeddings nodes;
    std::set<kg::EntityId> seen;
    for (const auto& t : candidates) {
        for (kg::EntityId e : {t.head, t.tail}) {
            if (seen.insert(e).second) {
                nodes.ids.push_back(e);
            }
        }
    }
    std::vector<Tensor> rows;
    rows.reserve(nodes.ids.size());
    for (kg::EntityId e : nodes.ids) {
        const bool mentioned = std::any_of(mentions.begin(), mentions.end(),
                                           [e](const kg::Mention& m) { return m.entity == e; });
        nodes.from_context.push_back(mentioned);
        rows.push_back(entity_init_embedding(e, mentions, states));
    }
    nodes.rows = rows.empty() ? Tensor::zeros(0, config_.d_model) : nn::concat_rows(rows);
    return nodes;
}

Tensor Retriever::triplet_embeddings(const std::vector<kg::Triplet>& candidates, const gnn::NodeEmbeddings& nodes) const {
    if (candidates.empty()) {
        throw Error("triplet_embeddings: no candidates");
    }
    const auto edges = gnn::localize(candidates, nodes);
    Tensor entity_vecs = node_net_.forward(nodes.rows, edges);
    std::vector<std::size_t> rel_ids;
    std::vector<std::size_t> heads;
    std::vector<std::size_t> tails;
    for (const auto& e : edges) {
        rel_ids.push_back(e.relation);
        heads.push_back(e.head);
        tails.push_back(e.tail);
    }
    Tensor rel_vecs = edge_net_.forward(nn::gather_rows(relation_table_, rel_ids), edges);
    Tensor joined = nn::concat_cols({nn::gather_rows(entity_vecs, heads), rel_vecs, nn::gather_rows(entity_vecs, tails)});
    return triplet_mlp_(joined);
}

CandidateSet Retriever::score(const seq::EncoderStates& history, const std::vector<kg::Mention>& mentions,
                              const std::vector<kg::Triplet>& candidates) const {
    ContextEmbedding ctx = context_embedding(history);
    gnn::NodeEmbeddings nodes = initial_nodes(candidates, mentions, history.states);
    return retrieval_distribution(candidates, triplet_embeddings(candidates, nodes), ctx.vector);
}

CandidateSet retrieval_distribution(std::vector<kg::Triplet> triplets, const Tensor& triplet_embeddings,
                                    const Tensor& context) {
    if (triplets.empty()) {
        throw Error("retrieval_distribution: empty candidate set");
    }
    if (triplet_embeddings.rows() != triplets.size()) {
        throw Error("retrieval_distribution: one embedding per candidate required");
    }
    CandidateSet out;
    out.triplets = std::move(triplets);
    out.scores = nn::matmul_nt(context, triplet_embeddings);
    out.log_probs = nn::log_softmax(out.scores);
    out.probs.resize(out.triplets.size());
    for (std::size_t i = 0; i < out.probs.size(); ++i) {
        out.probs[i] = std::exp(out.log_probs.value()(0, static_cast<Eigen::Index>(i)));
    }
    return out;
}

CandidateSet candidate_set_from_scores(std::vector<kg::Triplet> triplets, std::span<const double> scores) {
    if (triplets.size() != scores.size()) {
        throw Error("candidate_set_from_scores: size mismatch");
    }
    if (triplets.empty()) {
        throw Error("candidate_set_from_scores: empty candidate set");
    }
    CandidateSet out;
    out.triplets = std::move(triplets);
    out.scores = Tensor::row(scores);
    out.log_probs = nn::log_softmax(out.scores);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out.probs.push_back(std::exp(out.log_probs.value()(0, static_cast<Eigen::Index>(i))));
    }
    return out;
}

Tensor subgraph_log_prob(const CandidateSet& dist, std::span<const std::size_t> indices) {
    nn::Matrix pick = nn::Matrix::Zero(1, static_cast<Eigen::Index>(dist.size()));
    for (std::size_t i : indices) {
        if (i >= dist.size()) {
            throw Error("subgraph_log_prob: index out of range");
        }
        pick(0, static_cast<Eigen::Index>(i)) += 1.0;
    }
    return nn::sum(nn::mul(dist.log_probs, Tensor(std::move(pick))));
}

std::vector<SampledSubgraph> sample_subgraphs(const CandidateSet& dist, std::size_t n, std::size_t k,
                                              std::uint64_t seed, bool exhaustive) {
    const std::size_t c = dist.size();
    if (n > c) {
        log::warn("subgraph size " + std::to_string(n) + " exceeds " + std::to_string(c) + " candidates; clamped");
        n = c;
    }
    std::vector<SampledSubgraph> out;
    if (n == 0) {
        return out;
    }
    if (exhaustive && binomial(c, n) <= kExhaustiveLimit) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        while (true) {
            out.push_back(SampledSubgraph{idx, subgraph_log_prob(dist, idx)});
            // next combination in lexicographic order
            std::size_t i = n;
            while (i > 0 && idx[i - 1] == c - n + (i - 1)) {
                --i;
            }
            if (i == 0) {
                break;
            }
            ++idx[i - 1];
            for (std::size_t j = i; j < n; ++j) {
                idx[j] = idx[j - 1] + 1;
            }
        }
        return out;
    }
    std::mt19937_64 rng(seed);
    for (std::size_t s = 0; s < k; ++s) {
        std::vector<double> weights = dist.probs;
        std::vector<std::size_t> picked;
        for (std::size_t j = 0; j < n; ++j) {
            double total = 0.0;
            for (double w : weights) {
                total += w;
            }
            std::size_t choice = c;
            if (total > 0.0) {
                const double u = uniform01(rng) * total;
                double acc = 0.0;
                for (std::size_t i = 0; i < c; ++i) {
                    if (weights[i] <= 0.0) {
                        continue;
                    }
                    acc += weights[i];
                    choice = i;
                    if (u < acc) {
                        break;
                    }
                }
            }
            if (choice == c) {
                // All remaining mass underflowed: take the first unpicked candidate.
                for (std::size_t i = 0; i < c; ++i) {
                    if (std::find(picked.begin(), picked.end(), i) == picked.end()) {
                        choice = i;
                        break;
                    }
                }
            }
            picked.push_back(choice);
            weights[choice] = 0.0;
        }
        std::sort(picked.begin(), picked.end());
        out.push_back(SampledSubgraph{picked, subgraph_log_prob(dist, picked)});
    }
    return out;
}

std::vector<std::size_t> ranking(const CandidateSet& dist) {
    std::vector<std::size_t> idx(dist.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return dist.probs[a] > dist.probs[b]; });
    return idx;
}

std::vector<std::size_t> top_n(const CandidateSet& dist, std::size_t n) {
    std::vector<std::size_t> idx = ranking(dist);
    idx.resize(std::min(n, idx.size()));
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::size_t gold_rank(std::span<const double> scores, const std::vector<bool>& gold) {
    if (gold.size() != scores.size()) {
        return 0;
    }
    std::size_t best = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!gold[i]) {
            continue;
        }
        // Rank = 1 + candidates strictly better, plus equal-scored ones earlier in order.
        std::size_t rank = 1;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (scores[j] > scores[i] || (scores[j] == scores[i] && j < i)) {
                ++rank;
            }
        }
        if (best == 0 || rank < best) {
            best = rank;
        }
    }
    return best;
}

void RankingAccumulator::add(std::span<const double> scores, const std::vector<bool>& gold) {
    const std::size_t r = gold_rank(scores, gold);
    if (r == 0) {
        ++skipped_;
    } else {
        ranks_.push_back(r);
    }
}

RetrievalMetrics RankingAccumulator::result() const {
    RetrievalMetrics m;
    m.evaluated = ranks_.size();
    m.skipped = skipped_;
    if (ranks_.empty()) {
        return m;
    }
    for (std::size_t r : ranks_) {
        m.mrr += 1.0 / static_cast<double>(r);
        m.hits1 += r <= 1 ? 1.0 : 0.0;
        m.hits3 += r <= 3 ? 1.0 : 0.0;
        m.hits5 += r <= 5 ? 1.0 : 0.0;
        m.hits10 += r <= 10 ? 1.0 : 0.0;
        m.hits100 += r <= 100 ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(ranks_.size());
    m.mrr /= n;
    m.hits1 /= n;
    m.hits3 /= n;
    m.hits5 /= n;
    m.hits10 /= n;
    m.hits100 /= n;
    return m;
}

std::vector<double> bm25_scores(std::span<const TokenId> query, const std::vector<std::vector<TokenId>>& docs,
                                const Bm25Params& params) {
    const double n_docs = static_cast<double>(docs.size());
    std::vector<double> scores(docs.size(), 0.0);
    if (docs.empty()) {
        return scores;
    }
    double avgdl = 0.0;
    std::map<TokenId, double> df;
    std::vector<std::map<TokenId, double>> tf(docs.size());
    for (std::size_t d = 0; d < docs.size(); ++d) {
        avgdl += static_cast<double>(docs[d].size());
        for (TokenId t : docs[d]) {
            tf[d][t] += 1.0;
        }
        for (const auto& [t, _] : tf[d]) {
            df[t] += 1.0;
        }
    }
    avgdl /= n_docs;
    for (TokenId q : query) {
        auto it = df.find(q);
        if (it == df.end()) {
            continue;
        }
        const double idf = std::log(1.0 + (n_docs - it->second + 0.5) / (it->second + 0.5));
        for (std::size_t d = 0; d < docs.size(); ++d) {
            auto f = tf[d].find(q);
            if (f == tf[d].end()) {
                continue;
            }
            const double len_norm = avgdl > 0.0 ? static_cast<double>(docs[d].size()) / avgdl : 0.0;
            const double denom = f->second + params.k1 * (1.0 - params.b + params.b * len_norm);
            scores[d] += idf * f->second * (params.k1 + 1.0) / denom;
        }
    }
    return scores;
}

CandidateSet bm25_baseline_scores(std::span<const TokenId> history, std::vector<kg::Triplet> candidates,
                                  const kg::KnowledgeGraph& graph, const Bm25Params& params) {
    std::vector<std::vector<TokenId>> docs;
    docs.reserve(candidates.size());
    for (const auto& t : candidates) {
        std::vector<TokenId> doc = graph.entity(t.head).tokens;
        const auto& r = graph.relation(t.relation).tokens;
        const auto& tl = graph.entity(t.tail).tokens;
        doc.insert(doc.end(), r.begin(), r.end());
        doc.insert(doc.end(), tl.begin(), tl.end());
        docs.push_back(std::move(doc));
    }
    const auto scores = bm25_scores(history, docs, params);
    return candidate_set_from_scores(std::move(candidates), scores);
}

CandidateSet random_baseline_scores(std::vector<kg::Triplet> candidates, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<double> scores(candidates.size());
    for (auto& s : scores) {
        s = uniform01(rng);
    }
    return candidate_set_from_scores(std::move(candidates), scores);
}

}  // namespace surge::retrieval
