#pragma once

#include "surge/config.hpp"
#include "surge/kg.hpp"
#include "surge/synth.hpp"
#include "surge/tensor.hpp"
#include "surge/vocab.hpp"

#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fixtures {

inline surge::nn::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, scale);
    surge::nn::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            m(i, j) = dist(rng);
        }
    }
    return m;
}

inline surge::nn::Tensor param(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
    return surge::nn::Tensor(random_matrix(rows, cols, seed, scale), true);
}

/// Vocabulary holding every word unit of `texts`.
inline surge::Vocabulary vocab_for(const std::vector<std::string>& texts) {
    surge::Vocabulary v;
    for (const auto& t : texts) {
        for (const auto& w : surge::split_words(t)) {
            v.add(w);
        }
    }
    return v;
}

/// A small movie graph used across tests.
inline const char* kMovieKg =
    "Moby Dick\twritten_by\tHerman Melville\n"
    "Moby Dick\tstarred_actors\tGregory Peck\n"
    "Moby Dick\tstarred_actors\tOrson Welles\n"
    "Moby Dick\twritten_by\tRay Bradbury\n"
    "Herman Melville\tborn_in\tNew York\n"
    "Gregory Peck\tstarred_in\tRoman Holiday\n"
    "Orson Welles\tdirected\tCitizen Kane\n"
    "Citizen Kane\thas_genre\tDrama\n";

struct MovieWorld {
    surge::Vocabulary vocab;
    surge::kg::KnowledgeGraph graph;
};

inline MovieWorld movie_world(const std::vector<std::string>& extra_texts = {}) {
    std::vector<std::string> texts = {kMovieKg, "~written_by ~starred_actors ~born_in ~starred_in ~directed ~has_genre",
                                      "do you like Moby Dick ? it was written by Herman Melville ."};
    texts.insert(texts.end(), extra_texts.begin(), extra_texts.end());
    MovieWorld w;
    w.vocab = vocab_for(texts);
    std::istringstream in(kMovieKg);
    w.graph = surge::kg::KnowledgeGraph::load(in, w.vocab);
    return w;
}

struct SynthWorld {
    surge::Vocabulary vocab;
    surge::kg::KnowledgeGraph graph;
    std::vector<surge::data::Dialogue> dialogues;
};

inline SynthWorld synth_world(const surge::synth::SynthConfig& config) {
    auto out = surge::synth::generate(config);
    std::stringstream kg;
    surge::synth::write_kg(kg, out.triplets);
    SynthWorld w;
    w.vocab = out.vocab;
    w.graph = surge::kg::KnowledgeGraph::load(kg, w.vocab);
    w.dialogues = std::move(out.dialogues);
    return w;
}

/// 32 dialogues over 8 heads with 3 distractors each.
inline surge::synth::SynthConfig small_synth(std::uint64_t seed = 7) {
    surge::synth::SynthConfig c;
    c.n_entities = 80;
    c.n_relations = 6;
    c.n_triplets = 120;
    c.n_dialogues = 32;
    c.distractor_degree = 3;
    c.seed = seed;
    return c;
}

inline surge::TrainConfig tiny_config(surge::TrainMode mode = surge::TrainMode::Contrastive) {
    surge::TrainConfig c;
    c.n_triplets = 2;
    c.k_samples = 2;
    c.lr = 1e-3;
    c.batch_size = 2;
    c.epochs = 1;
    c.max_hist_len = 32;
    c.max_know_len = 32;
    c.seed = 3;
    c.mode = mode;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_enc_layers = 1;
    c.n_dec_layers = 1;
    c.ffn_width = 16;
    c.max_positions = 64;
    c.gnn_layers = 1;
    c.max_resp_len = 12;
    return c;
}

}  // namespace fixtures
