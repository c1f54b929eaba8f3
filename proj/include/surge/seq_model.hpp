#pragma once

#include "surge/layers.hpp"
#include "surge/vocab.hpp"

#include <span>
#include <string>
#include <vector>

namespace surge::seq {

using nn::Tensor;

struct SeqModelConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_enc_layers = 2;
    std::size_t n_dec_layers = 2;
    std::size_t ffn_width = 128;
    std::size_t max_positions = 512;
    std::size_t vocab_size = 0;

    void validate() const;
};

struct EncoderStates {
    Tensor states;           // rows = input length
    std::vector<bool> mask;  // true = attendable
};

struct DecoderOutput {
    Tensor logits;  // T x vocab
    Tensor hidden;  // T x d_model
};

struct AttentionBlock {
    nn::Linear query;
    nn::Linear key;
    nn::Linear value;
    nn::Linear output;
};

struct EncoderLayer {
    nn::LayerNorm attn_norm;
    AttentionBlock self_attn;
    nn::LayerNorm ffn_norm;
    nn::Mlp ffn;
};

struct DecoderLayer {
    nn::LayerNorm self_norm;
    AttentionBlock self_attn;
    nn::LayerNorm cross_norm;
    AttentionBlock cross_attn;
    nn::LayerNorm ffn_norm;
    nn::Mlp ffn;
};

/// Pre-norm transformer encoder-decoder with learned absolute positions and
/// an output projection tied to the token embedding table.
class Seq2Seq {
public:
    Seq2Seq(const SeqModelConfig& config, nn::ParamStore& store, nn::Rng& rng, const std::string& prefix = "seq");

    [[nodiscard]] const SeqModelConfig& config() const { return config_; }

    /// Token embeddings without positions (one row per id).
    [[nodiscard]] Tensor token_embeddings(std::span<const TokenId> tokens) const;
    /// Adds positional embeddings 0..rows-1.
    [[nodiscard]] Tensor add_positions(const Tensor& rows) const;
    /// token_embeddings + positions.
    [[nodiscard]] Tensor embed(std::span<const TokenId> tokens) const;

    [[nodiscard]] EncoderStates encode(const Tensor& embedded, std::vector<bool> mask) const;
    /// Encodes with every position attendable.
    [[nodiscard]] EncoderStates encode(const Tensor& embedded) const;

    /// `targets` = [BOS, y_1, ..., y_T]. Row t of the result predicts
    /// targets[t + 1] from targets[0..t].
    [[nodiscard]] DecoderOutput teacher_forced(const EncoderStates& enc, std::span<const TokenId> targets) const;

    /// Argmax decoding, ties to the lowest id; stops at EOS (excluded) or max_len.
    [[nodiscard]] std::vector<TokenId> greedy_decode(const EncoderStates& enc, std::size_t max_len) const;

private:
    [[nodiscard]] Tensor attention(const AttentionBlock& block, const Tensor& queries, const Tensor& keys,
                                   const nn::Matrix& bias) const;
    [[nodiscard]] DecoderOutput decode(const EncoderStates& enc, std::span<const TokenId> inputs) const;

    SeqModelConfig config_;
    Tensor token_table_;
    Tensor position_table_;
    std::vector<EncoderLayer> encoder_;
    nn::LayerNorm encoder_norm_;
    std::vector<DecoderLayer> decoder_;
    nn::LayerNorm decoder_norm_;
};

/// Sum over unmasked steps of log softmax(logits)[t, next[t]].
/// `next` has one id per logits row; mask may be empty (all steps count).
Tensor sequence_log_likelihood(const Tensor& logits, std::span<const TokenId> next, const std::vector<bool>& mask = {});

/// Decoder targets for a response: [BOS, y..., EOS], truncated to max_len content tokens.
std::vector<TokenId> make_targets(std::span<const TokenId> response, std::size_t max_len);

}  // namespace surge::seq
