#pragma once

#include "surge/graph_encoding.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

namespace surge {

enum class TrainMode { Unsupervised, SemiSupervised, Contrastive };

[[nodiscard]] std::string to_string(TrainMode m);
[[nodiscard]] TrainMode parse_mode(std::string_view name);

/// Training and model hyperparameters. Parsed from flat `key = value` text.
struct TrainConfig {
    // Required keys.
    std::size_t n_triplets = 3;
    std::size_t k_samples = 4;
    double lr = 1e-4;
    double weight_decay = 0.01;
    double warmup_ratio = 0.06;
    std::size_t batch_size = 24;
    std::size_t epochs = 30;
    std::size_t max_hist_len = 256;
    std::size_t max_know_len = 128;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::Contrastive;

    // Optional keys.
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_enc_layers = 2;
    std::size_t n_dec_layers = 2;
    std::size_t ffn_width = 128;
    std::size_t max_positions = 512;
    std::size_t gnn_layers = 2;
    std::size_t max_resp_len = 32;
    int khop = 1;
    std::size_t max_candidates = 256;
    double clip_norm = 1.0;
    double tau_init = 0.01;
    bool exhaustive = false;
    encoding::EncodingVariant encoding = encoding::EncodingVariant::InvariantEfficient;
    std::size_t valid_limit = 0;  // 0 = whole validation split

    void validate() const;
};

/// Throws ParseError on malformed lines or unknown keys, Error on missing
/// required keys or invalid values.
TrainConfig parse_config(std::istream& in);
TrainConfig load_config_file(const std::filesystem::path& path);

/// Every key in a fixed order; parse_config(snapshot) reproduces the config.
std::string config_snapshot(const TrainConfig& config);

}  // namespace surge
