#include "surge/seq_model.hpp"

#include "surge/error.hpp"

#include <cmath>
#include <limits>

namespace surge::seq {

namespace {

constexpr double kMasked = -1e30;

AttentionBlock make_attention(nn::ParamStore& store, const std::string& name, std::size_t d, nn::Rng& rng) {
    return AttentionBlock{nn::Linear(store, name + ".q", d, d, rng), nn::Linear(store, name + ".k", d, d, rng),
                          nn::Linear(store, name + ".v", d, d, rng), nn::Linear(store, name + ".o", d, d, rng)};
}

}  // namespace

void SeqModelConfig::validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
        throw Error("seq model: d_model must be a positive multiple of n_heads");
    }
    if (vocab_size <= kEos) {
        throw Error("seq model: vocabulary must contain the reserved tokens");
    }
    if (max_positions == 0) {
        throw Error("seq model: max_positions must be positive");
    }
}

Seq2Seq::Seq2Seq(const SeqModelConfig& config, nn::ParamStore& store, nn::Rng& rng, const std::string& prefix)
    : config_(config) {
    config_.validate();
    const std::size_t d = config_.d_model;
    token_table_ = store.create(prefix + ".tok_emb", config_.vocab_size, d, nn::Init::Normal, rng);
    position_table_ = store.create(prefix + ".pos_emb", config_.max_positions, d, nn::Init::Normal, rng);
    for (std::size_t i = 0; i < config_.n_enc_layers; ++i) {
        const std::string n = prefix + ".enc." + std::to_string(i);
        EncoderLayer layer;
        layer.attn_norm = nn::LayerNorm(store, n + ".attn_norm", d, rng);
        layer.self_attn = make_attention(store, n + ".attn", d, rng);
        layer.ffn_norm = nn::LayerNorm(store, n + ".ffn_norm", d, rng);
        layer.ffn = nn::Mlp(store, n + ".ffn", d, config_.ffn_width, d, rng);
        encoder_.push_back(std::move(layer));
    }
    encoder_norm_ = nn::LayerNorm(store, prefix + ".enc.norm", d, rng);
    for (std::size_t i = 0; i < config_.n_dec_layers; ++i) {
        const std::string n = prefix + ".dec." + std::to_string(i);
        DecoderLayer layer;
        layer.self_norm = nn::LayerNorm(store, n + ".self_norm", d, rng);
        layer.self_attn = make_attention(store, n + ".self", d, rng);
        layer.cross_norm = nn::LayerNorm(store, n + ".cross_norm", d, rng);
        layer.cross_attn = make_attention(store, n + ".cross", d, rng);
        layer.ffn_norm = nn::LayerNorm(store, n + ".ffn_norm", d, rng);
        layer.ffn = nn::Mlp(store, n + ".ffn", d, config_.ffn_width, d, rng);
        decoder_.push_back(std::move(layer));
    }
    decoder_norm_ = nn::LayerNorm(store, prefix + ".dec.norm", d, rng);
}

Tensor Seq2Seq::token_embeddings(std::span<const TokenId> tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (TokenId t : tokens) {
        if (t >= config_.vocab_size) {
            throw Error("token id " + std::to_string(t) + " outside vocabulary");
        }
        ids.push_back(t);
    }
    return nn::gather_rows(token_table_, ids);
}

Tensor Seq2Seq::add_positions(const Tensor& rows) const {
    if (rows.rows() > config_.max_positions) {
        throw Error("sequence of length " + std::to_string(rows.rows()) + " exceeds max_positions " +
                    std::to_string(config_.max_positions));
    }
    return nn::add(rows, nn::slice_rows(position_table_, 0, rows.rows()));
}

Tensor Seq2Seq::embed(std::span<const TokenId> tokens) const { return add_positions(token_embeddings(tokens)); }

Tensor Seq2Seq::attention(const AttentionBlock& block, const Tensor& queries, const Tensor& keys,
                          const nn::Matrix& bias) const {
    const std::size_t heads = config_.n_heads;
    const std::size_t dh = config_.d_model / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor q = block.query(queries);
    Tensor k = block.key(keys);
    Tensor v = block.value(keys);
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor qh = nn::slice_cols(q, h * dh, dh);
        Tensor kh = nn::slice_cols(k, h * dh, dh);
        Tensor vh = nn::slice_cols(v, h * dh, dh);
        Tensor scores = nn::add_constant(nn::scale(nn::matmul_nt(qh, kh), inv_sqrt), bias);
        outs.push_back(nn::matmul(nn::softmax(scores), vh));
    }
    return block.output(heads == 1 ? outs.front() : nn::concat_cols(outs));
}

EncoderStates Seq2Seq::encode(const Tensor& embedded) const {
    return encode(embedded, std::vector<bool>(embedded.rows(), true));
}

EncoderStates Seq2Seq::encode(const Tensor& embedded, std::vector<bool> mask) const {
    const std::size_t n = embedded.rows();
    if (mask.size() != n) {
        throw Error("encode: mask length does not match input rows");
    }
    nn::Matrix bias = nn::Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
        if (!mask[j]) {
            bias.col(static_cast<Eigen::Index>(j)).setConstant(kMasked);
        }
    }
    Tensor x = embedded;
    for (const auto& layer : encoder_) {
        Tensor h = layer.attn_norm(x);
        x = nn::add(x, attention(layer.self_attn, h, h, bias));
        x = nn::add(x, layer.ffn(layer.ffn_norm(x)));
    }
    return EncoderStates{encoder_norm_(x), std::move(mask)};
}

DecoderOutput Seq2Seq::decode(const EncoderStates& enc, std::span<const TokenId> inputs) const {
    const auto t = static_cast<Eigen::Index>(inputs.size());
    const auto s = static_cast<Eigen::Index>(enc.states.rows());
    nn::Matrix causal = nn::Matrix::Zero(t, t);
    for (Eigen::Index i = 0; i < t; ++i) {
        for (Eigen::Index j = i + 1; j < t; ++j) {
            causal(i, j) = kMasked;
        }
    }
    nn::Matrix cross = nn::Matrix::Zero(t, s);
    for (Eigen::Index j = 0; j < s; ++j) {
        if (!enc.mask[static_cast<std::size_t>(j)]) {
            cross.col(j).setConstant(kMasked);
        }
    }
    Tensor x = embed(inputs);
    for (const auto& layer : decoder_) {
        Tensor h = layer.self_norm(x);
        x = nn::add(x, attention(layer.self_attn, h, h, causal));
        x = nn::add(x, attention(layer.cross_attn, layer.cross_norm(x), enc.states, cross));
        x = nn::add(x, layer.ffn(layer.ffn_norm(x)));
    }
    Tensor hidden = decoder_norm_(x);
    Tensor logits = nn::matmul_nt(hidden, token_table_);
    return DecoderOutput{logits, hidden};
}

DecoderOutput Seq2Seq::teacher_forced(const EncoderStates& enc, std::span<const TokenId> targets) const {
    if (targets.size() < 2 || targets.front() != kBos) {
        throw Error("teacher_forced: targets must start with BOS and hold at least one step");
    }
    return decode(enc, targets.first(targets.size() - 1));
}

std::vector<TokenId> Seq2Seq::greedy_decode(const EncoderStates& enc, std::size_t max_len) const {
    if (max_len + 1 > config_.max_positions) {
        throw Error("greedy_decode: max_len exceeds max_positions");
    }
    nn::NoGradGuard no_grad;
    std::vector<TokenId> seq{kBos};
    std::vector<TokenId> out;
    for (std::size_t step = 0; step < max_len; ++step) {
        DecoderOutput d = decode(enc, seq);
        const auto row = d.logits.value().row(static_cast<Eigen::Index>(d.logits.rows() - 1));
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < row.size(); ++j) {
            if (row(j) > row(best)) {
                best = j;
            }
        }
        const auto tok = static_cast<TokenId>(best);
        if (tok == kEos) {
            break;
        }
        out.push_back(tok);
        seq.push_back(tok);
    }
    return out;
}

Tensor sequence_log_likelihood(const Tensor& logits, std::span<const TokenId> next, const std::vector<bool>& mask) {
    if (next.size() != logits.rows()) {
        throw Error("sequence_log_likelihood: one target per logits row required");
    }
    if (!mask.empty() && mask.size() != next.size()) {
        throw Error("sequence_log_likelihood: mask length mismatch");
    }
    Tensor lp = nn::log_softmax(logits);
    // Selection as a constant weight matrix keeps the backward pass a single op.
    nn::Matrix pick = nn::Matrix::Zero(static_cast<Eigen::Index>(logits.rows()), static_cast<Eigen::Index>(logits.cols()));
    for (std::size_t t = 0; t < next.size(); ++t) {
        if (!mask.empty() && !mask[t]) {
            continue;
        }
        if (next[t] >= logits.cols()) {
            throw Error("sequence_log_likelihood: target id outside vocabulary");
        }
        pick(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(next[t])) = 1.0;
    }
    return nn::sum(nn::mul(lp, Tensor(std::move(pick))));
}

std::vector<TokenId> make_targets(std::span<const TokenId> response, std::size_t max_len) {
    std::vector<TokenId> out{kBos};
    for (std::size_t i = 0; i < response.size() && i < max_len; ++i) {
        out.push_back(response[i]);
    }
    out.push_back(kEos);
    return out;
}

}  // namespace surge::seq
