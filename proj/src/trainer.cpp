#include "surge/trainer.hpp"

#include "surge/error.hpp"
#include "surge/log.hpp"
#include "surge/metrics.hpp"
#include "surge/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

namespace surge::train {

namespace {

seq::SeqModelConfig seq_config(const TrainConfig& c, std::size_t vocab_size) {
    seq::SeqModelConfig s;
    s.d_model = c.d_model;
    s.n_heads = c.n_heads;
    s.n_enc_layers = c.n_enc_layers;
    s.n_dec_layers = c.n_dec_layers;
    s.ffn_width = c.ffn_width;
    s.max_positions = c.max_positions;
    s.vocab_size = vocab_size;
    return s;
}

retrieval::RetrieverConfig retriever_config(const TrainConfig& c) {
    retrieval::RetrieverConfig r;
    r.d_model = c.d_model;
    r.gnn_layers = c.gnn_layers;
    return r;
}

ContrastiveHead make_head(const TrainConfig& c, nn::ParamStore& store, nn::Rng& rng) {
    ContrastiveHead h;
    h.graph_proj = nn::Linear(store, "contrastive.graph_proj", c.d_model, c.d_model, rng);
    h.text_proj = nn::Linear(store, "contrastive.text_proj", c.d_model, c.d_model, rng);
    h.tau = store.create("contrastive.tau", 1, 1, nn::Init::Zeros, rng);
    h.tau.mutable_value()(0, 0) = c.tau_init;
    return h;
}

Tensor diagonal_sum(const Tensor& square) {
    const auto n = static_cast<Eigen::Index>(square.rows());
    return nn::sum(nn::mul(square, Tensor(nn::Matrix::Identity(n, n), false)));
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    nn::Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    }
    return order;
}

bool finite(const Tensor& t) { return t.defined() && std::isfinite(t.item()); }

double selection_score(const ValidationMetrics& v) { return v.kqa_items > 0 ? v.kqa_f1 : v.unigram_f1; }

}  // namespace

Tensor ContrastiveHead::temperature() const { return nn::clamp_min(tau, kMinTemperature); }

SurgeModel::SurgeModel(const TrainConfig& config, std::size_t vocab_size, std::size_t num_relations)
    : config_(config),
      rng_(config.seed),
      seq_(seq_config(config, vocab_size), params_, rng_),
      retriever_(retriever_config(config), num_relations, params_, rng_),
      encoder_(config.d_model, num_relations, params_, rng_),
      head_(make_head(config, params_, rng_)) {
    config_.validate();
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over a simple combination.
    std::uint64_t z = seed ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xc2b2ae3d27d4eb4fULL);
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

data::PrepareOptions prepare_options(const TrainConfig& config) {
    data::PrepareOptions o;
    o.max_hist_len = config.max_hist_len;
    o.khop = config.khop;
    o.max_candidates = config.max_candidates;
    return o;
}

seq::EncoderStates detached_history_states(const SurgeModel& model, std::span<const TokenId> history) {
    if (history.empty()) {
        throw Error("empty dialogue history");
    }
    nn::NoGradGuard guard;
    const std::size_t keep = std::min(history.size(), model.seq().config().max_positions);
    seq::EncoderStates enc = model.seq().encode(model.seq().embed(history.last(keep)));
    enc.states = nn::detach(enc.states);
    return enc;
}

retrieval::CandidateSet score_candidates(const SurgeModel& model, const data::PreparedExample& example) {
    retrieval::CandidateSet dist;
    if (example.candidates.empty()) {
        return dist;
    }
    const auto states = detached_history_states(model, example.history);
    std::vector<kg::Mention> mentions = example.mentions;
    if (example.history.size() > states.states.rows()) {
        const std::size_t shift = example.history.size() - states.states.rows();
        std::erase_if(mentions, [shift](const kg::Mention& m) { return m.begin < shift; });
        for (auto& m : mentions) {
            m.begin -= shift;
        }
    }
    dist = model.retriever().score(states, mentions, example.candidates);
    dist.gold = example.gold;
    return dist;
}

GeneratorPass generator_pass(const SurgeModel& model, const kg::KnowledgeGraph& graph,
                             std::span<const TokenId> history, const std::vector<kg::Triplet>& z,
                             std::span<const TokenId> response) {
    const auto& config = model.config();
    const encoding::EncodingLimits limits{config.max_hist_len, config.max_know_len};
    const encoding::EncodedInput input = model.encoder().encode(config.encoding, history, z, graph, model.seq(), limits);
    const seq::EncoderStates enc = model.seq().encode(input.embeddings);
    const std::vector<TokenId> targets = seq::make_targets(response, config.max_resp_len);
    const seq::DecoderOutput out = model.seq().teacher_forced(enc, targets);
    GeneratorPass pass;
    pass.log_likelihood =
        seq::sequence_log_likelihood(out.logits, std::span<const TokenId>(targets).subspan(1));
    pass.prefix_len = input.prefix_len;
    if (input.prefix_len > 0) {
        pass.graph_vector = nn::mean_rows(nn::slice_rows(enc.states, 0, input.prefix_len));
    }
    pass.text_vector = nn::mean_rows(out.hidden);
    return pass;
}

Tensor marginal_log_likelihood(const std::vector<Tensor>& subgraph_log_probs,
                               const std::vector<Tensor>& log_likelihoods) {
    if (subgraph_log_probs.empty() || subgraph_log_probs.size() != log_likelihoods.size()) {
        throw Error("marginal_log_likelihood: need one likelihood per subgraph");
    }
    const Tensor lp = nn::concat_cols(subgraph_log_probs);
    const Tensor ll = nn::concat_cols(log_likelihoods);
    return nn::logsumexp(lp + ll) - nn::logsumexp(lp);
}

Tensor supervised_log_likelihood(const retrieval::CandidateSet& dist, const std::vector<bool>& gold) {
    std::vector<Tensor> terms;
    for (std::size_t i = 0; i < gold.size() && i < dist.size(); ++i) {
        if (gold[i]) {
            terms.push_back(nn::select(dist.log_probs, 0, i));
        }
    }
    if (terms.empty()) {
        return Tensor::scalar(0.0);
    }
    return nn::mean(nn::concat_cols(terms));
}

Tensor contrastive_objective(const Tensor& graph_rows, const Tensor& text_rows, const Tensor& temperature) {
    if (graph_rows.rows() != text_rows.rows() || graph_rows.cols() != text_rows.cols()) {
        throw Error("contrastive_objective: graph and text rows must align");
    }
    const std::size_t b = graph_rows.rows();
    if (b == 0) {
        return Tensor::scalar(0.0);
    }
    // sim[i][j] = cos(graph_i, text_j) / tau
    const Tensor sim =
        nn::div_scalar(nn::matmul_nt(nn::normalize_rows(graph_rows), nn::normalize_rows(text_rows)), temperature);
    const Tensor over_texts = diagonal_sum(nn::log_softmax(sim, nn::Axis::Cols));
    const Tensor over_graphs = diagonal_sum(nn::log_softmax(sim, nn::Axis::Rows));
    return nn::scale(over_texts + over_graphs, 0.5 / static_cast<double>(b));
}

Tensor contrastive_loss(const ContrastiveHead& head, const std::vector<Tensor>& graph_vectors,
                        const std::vector<Tensor>& text_vectors) {
    if (graph_vectors.size() != text_vectors.size()) {
        throw Error("contrastive_loss: one text vector per graph vector required");
    }
    if (graph_vectors.empty()) {
        return Tensor::scalar(0.0);
    }
    return contrastive_objective(head.graph_proj(nn::concat_rows(graph_vectors)),
                                 head.text_proj(nn::concat_rows(text_vectors)), head.temperature());
}

ItemObjective item_objective(const SurgeModel& model, const kg::KnowledgeGraph& graph,
                             const data::PreparedExample& example, std::uint64_t sample_seed) {
    const auto& config = model.config();
    ItemObjective out;
    out.gold_missing = example.gold_missing;
    const bool contrastive = config.mode == TrainMode::Contrastive;
    if (example.candidates.empty()) {
        GeneratorPass pass = generator_pass(model, graph, example.history, {}, example.response);
        out.ret = pass.log_likelihood;
        out.sup = Tensor::scalar(0.0);
        return out;
    }
    const retrieval::CandidateSet dist = score_candidates(model, example);
    const auto samples =
        retrieval::sample_subgraphs(dist, config.n_triplets, config.k_samples, sample_seed, config.exhaustive);
    std::vector<Tensor> log_probs;
    std::vector<Tensor> likelihoods;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        std::vector<kg::Triplet> z;
        for (std::size_t i : samples[s].indices) {
            z.push_back(dist.triplets[i]);
        }
        GeneratorPass pass = generator_pass(model, graph, example.history, z, example.response);
        log_probs.push_back(samples[s].log_prob);
        likelihoods.push_back(pass.log_likelihood);
        if (s == 0 && contrastive && pass.graph_vector.defined()) {
            out.graph_vector = pass.graph_vector;
            out.text_vector = pass.text_vector;
        }
    }
    out.ret = marginal_log_likelihood(log_probs, likelihoods);
    out.sup = config.mode == TrainMode::Unsupervised ? Tensor::scalar(0.0)
                                                     : supervised_log_likelihood(dist, example.gold);
    return out;
}

BatchObjective batch_objective(const SurgeModel& model, const kg::KnowledgeGraph& graph,
                               const std::vector<const data::PreparedExample*>& batch, std::uint64_t seed) {
    if (batch.empty()) {
        throw Error("batch_objective: empty batch");
    }
    std::vector<Tensor> rets;
    std::vector<Tensor> sups;
    std::vector<Tensor> graph_vectors;
    std::vector<Tensor> text_vectors;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        ItemObjective item = item_objective(model, graph, *batch[i], mix_seed(seed, i));
        rets.push_back(item.ret);
        sups.push_back(item.sup);
        if (item.graph_vector.defined()) {
            graph_vectors.push_back(item.graph_vector);
            text_vectors.push_back(item.text_vector);
        }
    }
    BatchObjective out;
    const Tensor ret = nn::mean(nn::concat_cols(rets));
    const Tensor sup = nn::mean(nn::concat_cols(sups));
    const Tensor cont = contrastive_loss(model.head(), graph_vectors, text_vectors);
    out.total = ret + sup + cont;
    out.ret = ret.item();
    out.sup = sup.item();
    out.cont = cont.item();
    return out;
}

std::vector<TokenId> generate(const SurgeModel& model, const kg::KnowledgeGraph& graph,
                              std::span<const TokenId> history, const std::vector<kg::Triplet>& z) {
    nn::NoGradGuard guard;
    const auto& config = model.config();
    const encoding::EncodingLimits limits{config.max_hist_len, config.max_know_len};
    const auto input = model.encoder().encode(config.encoding, history, z, graph, model.seq(), limits);
    return model.seq().greedy_decode(model.seq().encode(input.embeddings), config.max_resp_len);
}

Inference infer(const SurgeModel& model, const kg::KnowledgeGraph& graph, const data::PreparedExample& example) {
    nn::NoGradGuard guard;
    Inference out;
    out.dist = score_candidates(model, example);
    if (out.dist.size() > 0) {
        for (std::size_t i : retrieval::top_n(out.dist, model.config().n_triplets)) {
            out.subgraph.push_back(out.dist.triplets[i]);
        }
    }
    out.response = generate(model, graph, example.history, out.subgraph);
    return out;
}

ValidationMetrics validate(const SurgeModel& model, const kg::KnowledgeGraph& graph, const Vocabulary& vocab,
                           const std::vector<data::Dialogue>& dialogues) {
    ValidationMetrics v;
    std::vector<data::Dialogue> subset = dialogues;
    if (model.config().valid_limit > 0 && subset.size() > model.config().valid_limit) {
        subset.resize(model.config().valid_limit);
    }
    if (subset.empty()) {
        return v;
    }
    const auto options = prepare_options(model.config());
    retrieval::RankingAccumulator ranking;
    std::map<std::string, std::string> responses;
    std::vector<std::string> generated;
    std::vector<std::string> references;
    for (const auto& d : subset) {
        const auto example = data::prepare(d, graph, vocab, options);
        const Inference inf = infer(model, graph, example);
        if (inf.dist.size() > 0) {
            ranking.add(inf.dist);
        }
        const std::string text = vocab.decode(inf.response);
        responses[d.id] = text;
        generated.push_back(text);
        references.push_back(d.response);
    }
    const auto items = eval::synthesize_kqa(subset, graph, vocab);
    const auto kqa = eval::kqa_scores(items, responses);
    v.kqa_em = kqa.em;
    v.kqa_f1 = kqa.f1;
    v.kqa_items = kqa.items;
    v.unigram_f1 = eval::surface_metrics(generated, references).unigram_f1;
    const auto r = ranking.result();
    v.mrr = r.mrr;
    v.hits1 = r.hits1;
    return v;
}

std::string format_epoch(const EpochRecord& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "epoch=%zu steps=%zu skipped=%zu gold_missing=%zu loss=%.6f l_ret=%.6f l_sup=%.6f l_cont=%.6f "
                  "valid_kqa_items=%zu valid_kqa_em=%.4f valid_kqa_f1=%.4f valid_unigram_f1=%.4f "
                  "valid_mrr=%.4f valid_hits1=%.4f",
                  r.epoch, r.steps, r.skipped_steps, r.gold_missing, r.loss, r.ret, r.sup, r.cont,
                  r.valid.kqa_items, r.valid.kqa_em, r.valid.kqa_f1, r.valid.unigram_f1, r.valid.mrr,
                  r.valid.hits1);
    return buf;
}

TrainResult train(SurgeModel& model, const Dataset& data, std::ostream* log) {
    const TrainConfig& config = model.config();
    if (data.train.empty()) {
        throw Error("train: empty training split");
    }
    const auto options = prepare_options(config);
    std::vector<data::PreparedExample> examples;
    examples.reserve(data.train.size());
    for (const auto& d : data.train) {
        examples.push_back(data::prepare(d, data.graph, data.vocab, options));
    }

    nn::AdamWConfig opt_config;
    opt_config.lr = config.lr;
    opt_config.weight_decay = config.weight_decay;
    nn::AdamW optimizer(opt_config);
    const std::size_t batches = (examples.size() + config.batch_size - 1) / config.batch_size;
    const long total_steps = static_cast<long>(batches * config.epochs);
    const long warmup_steps = std::lround(config.warmup_ratio * static_cast<double>(total_steps));

    TrainResult result;
    auto& params = model.params();
    std::vector<nn::Matrix> best = params.snapshot();
    double best_score = -1.0;
    long step = 0;
    std::size_t consecutive_bad = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs && !result.aborted; ++epoch) {
        EpochRecord record;
        record.epoch = epoch;
        const auto order = shuffled_order(examples.size(), mix_seed(config.seed, 0x5eed, epoch));
        for (std::size_t b = 0; b < batches; ++b, ++step) {
            const std::size_t begin = b * config.batch_size;
            const std::size_t end = std::min(examples.size(), begin + config.batch_size);
            const double scale = 1.0 / static_cast<double>(end - begin);
            params.zero_grad();
            bool bad = false;
            double ret = 0.0;
            double sup = 0.0;
            std::vector<Tensor> graph_vectors;
            std::vector<Tensor> text_vectors;
            for (std::size_t i = begin; i < end && !bad; ++i) {
                const std::size_t idx = order[i];
                ItemObjective item =
                    item_objective(model, data.graph, examples[idx], mix_seed(config.seed, epoch, idx + 1));
                if (!finite(item.ret) || !finite(item.sup)) {
                    bad = true;
                    break;
                }
                ret += item.ret.item() * scale;
                sup += item.sup.item() * scale;
                record.gold_missing += item.gold_missing;
                // Per-item backward keeps only the contrastive pass alive.
                nn::scale(item.ret + item.sup, -scale).backward();
                if (item.graph_vector.defined()) {
                    graph_vectors.push_back(item.graph_vector);
                    text_vectors.push_back(item.text_vector);
                }
            }
            double cont = 0.0;
            if (!bad && !graph_vectors.empty()) {
                const Tensor c = contrastive_loss(model.head(), graph_vectors, text_vectors);
                if (!finite(c)) {
                    bad = true;
                } else {
                    cont = c.item();
                    nn::scale(c, -1.0).backward();
                }
            }
            const double norm = bad ? 0.0 : nn::clip_grad_norm(params, config.clip_norm);
            if (bad || !std::isfinite(norm)) {
                params.zero_grad();
                ++record.skipped_steps;
                log::warn("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                          "; step skipped");
                if (++consecutive_bad >= 2) {
                    log::warn("loss diverged twice in a row; restoring the last good checkpoint");
                    result.aborted = true;
                    break;
                }
                continue;
            }
            consecutive_bad = 0;
            optimizer.step(params, nn::warmup_linear_lr(config.lr, step, warmup_steps, total_steps));
            ++record.steps;
            record.ret += ret;
            record.sup += sup;
            record.cont += cont;
            record.loss += -(ret + sup + cont);
        }
        params.zero_grad();
        if (record.steps > 0) {
            const double n = static_cast<double>(record.steps);
            record.loss /= n;
            record.ret /= n;
            record.sup /= n;
            record.cont /= n;
        }
        if (result.aborted) {
            break;
        }
        record.valid = validate(model, data.graph, data.vocab, data.valid);
        const double score = selection_score(record.valid);
        if (score >= best_score) {
            best_score = score;
            best = params.snapshot();
            result.best_epoch = epoch;
        }
        if (log != nullptr) {
            *log << format_epoch(record) << '\n';
            log->flush();
        }
        result.epochs.push_back(record);
    }
    params.restore(best);
    return result;
}

}  // namespace surge::train
