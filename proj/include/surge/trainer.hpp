#pragma once

#include "surge/config.hpp"
#include "surge/corpus.hpp"
#include "surge/graph_encoding.hpp"
#include "surge/retriever.hpp"
#include "surge/seq_model.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace surge::train {

using nn::Tensor;

inline constexpr double kMinTemperature = 1e-4;

/// Graph-side and text-side projections plus a learnable temperature.
struct ContrastiveHead {
    nn::Linear graph_proj;
    nn::Linear text_proj;
    Tensor tau;  // 1 x 1

    /// tau clamped from below at kMinTemperature.
    [[nodiscard]] Tensor temperature() const;
};

/// All trainable components over one parameter store.
class SurgeModel {
public:
    SurgeModel(const TrainConfig& config, std::size_t vocab_size, std::size_t num_relations);
    SurgeModel(const SurgeModel&) = delete;
    SurgeModel& operator=(const SurgeModel&) = delete;

    [[nodiscard]] const TrainConfig& config() const { return config_; }
    [[nodiscard]] nn::ParamStore& params() { return params_; }
    [[nodiscard]] const nn::ParamStore& params() const { return params_; }
    [[nodiscard]] const seq::Seq2Seq& seq() const { return seq_; }
    [[nodiscard]] const retrieval::Retriever& retriever() const { return retriever_; }
    [[nodiscard]] const encoding::GraphEncoder& encoder() const { return encoder_; }
    [[nodiscard]] const ContrastiveHead& head() const { return head_; }

private:
    TrainConfig config_;
    nn::ParamStore params_;
    nn::Rng rng_;
    seq::Seq2Seq seq_;
    retrieval::Retriever retriever_;
    encoding::GraphEncoder encoder_;
    ContrastiveHead head_;
};

data::PrepareOptions prepare_options(const TrainConfig& config);

/// Encoder states of the bare history, computed without gradient.
seq::EncoderStates detached_history_states(const SurgeModel& model, std::span<const TokenId> history);

/// p(z | x) over the example's candidates, with gold flags attached.
retrieval::CandidateSet score_candidates(const SurgeModel& model, const data::PreparedExample& example);

/// One teacher-forced generator pass conditioned on subgraph z.
struct GeneratorPass {
    Tensor log_likelihood;  // log p(y | x, z)
    Tensor graph_vector;    // mean encoder state over the knowledge prefix; undefined if empty
    Tensor text_vector;     // mean decoder state over response steps
    std::size_t prefix_len = 0;
};

GeneratorPass generator_pass(const SurgeModel& model, const kg::KnowledgeGraph& graph,
                             std::span<const TokenId> history, const std::vector<kg::Triplet>& z,
                             std::span<const TokenId> response);

/// log sum_i p(Z_i) p(y | Z_i) with the subgraph probabilities renormalized
/// over the given set: logsumexp(lp + ll) - logsumexp(lp).
Tensor marginal_log_likelihood(const std::vector<Tensor>& subgraph_log_probs,
                               const std::vector<Tensor>& log_likelihoods);

/// Mean log p(z* | x) over gold candidates; 0 when none is gold.
Tensor supervised_log_likelihood(const retrieval::CandidateSet& dist, const std::vector<bool>& gold);

/// Symmetric InfoNCE over projected rows (row i of each side is a positive
/// pair), cosine similarity over temperature, averaged over rows.
Tensor contrastive_objective(const Tensor& graph_rows, const Tensor& text_rows, const Tensor& temperature);

/// Projects pooled vectors through the head and applies contrastive_objective.
/// Returns 0 for fewer than one pair.
Tensor contrastive_loss(const ContrastiveHead& head, const std::vector<Tensor>& graph_vectors,
                        const std::vector<Tensor>& text_vectors);

/// Per-example terms on one forward pass.
struct ItemObjective {
    Tensor ret;
    Tensor sup;
    Tensor graph_vector;  // from the first sampled subgraph; contrastive mode only
    Tensor text_vector;
    std::size_t gold_missing = 0;
};

ItemObjective item_objective(const SurgeModel& model, const kg::KnowledgeGraph& graph,
                             const data::PreparedExample& example, std::uint64_t sample_seed);

struct BatchObjective {
    Tensor total;  // mean L_ret + mean L_sup + L_cont, to be maximized
    double ret = 0.0;
    double sup = 0.0;
    double cont = 0.0;
};

BatchObjective batch_objective(const SurgeModel& model, const kg::KnowledgeGraph& graph,
                               const std::vector<const data::PreparedExample*>& batch, std::uint64_t seed);

/// Greedy response under subgraph z.
std::vector<TokenId> generate(const SurgeModel& model, const kg::KnowledgeGraph& graph,
                              std::span<const TokenId> history, const std::vector<kg::Triplet>& z);

struct Inference {
    retrieval::CandidateSet dist;
    std::vector<kg::Triplet> subgraph;  // top n_triplets candidates
    std::vector<TokenId> response;
};

Inference infer(const SurgeModel& model, const kg::KnowledgeGraph& graph, const data::PreparedExample& example);

struct ValidationMetrics {
    double kqa_em = 0.0;
    double kqa_f1 = 0.0;
    std::size_t kqa_items = 0;
    double unigram_f1 = 0.0;
    double mrr = 0.0;
    double hits1 = 0.0;
};

ValidationMetrics validate(const SurgeModel& model, const kg::KnowledgeGraph& graph, const Vocabulary& vocab,
                           const std::vector<data::Dialogue>& dialogues);

struct EpochRecord {
    std::size_t epoch = 0;
    std::size_t steps = 0;
    std::size_t skipped_steps = 0;
    std::size_t gold_missing = 0;
    double loss = 0.0;  // mean -L per step
    double ret = 0.0;
    double sup = 0.0;
    double cont = 0.0;
    ValidationMetrics valid;
};

std::string format_epoch(const EpochRecord& record);

struct TrainResult {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    bool aborted = false;
};

struct Dataset {
    const kg::KnowledgeGraph& graph;
    const Vocabulary& vocab;
    std::vector<data::Dialogue> train;
    std::vector<data::Dialogue> valid;
};

/// Runs the configured number of epochs, logging one record per epoch to
/// `log` (if given), and leaves the model at the best validation epoch.
TrainResult train(SurgeModel& model, const Dataset& data, std::ostream* log = nullptr);

/// Deterministic 64-bit mixing of a seed with stream identifiers.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace surge::train
