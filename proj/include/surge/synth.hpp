#pragma once

#include "surge/corpus.hpp"
#include "surge/vocab.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace surge::synth {

/// How one relation is asked about and realized. `cues` and `phrase` may use
/// {HEAD}; `phrase` is inserted between the head and tail in responses.
struct RelationTemplate {
    std::string surface;
    std::string phrase;
    std::vector<std::string> cues;
};

const std::vector<RelationTemplate>& default_templates();

struct SynthConfig {
    std::size_t n_entities = 600;
    std::size_t n_relations = 12;
    std::size_t n_triplets = 2400;
    std::size_t n_dialogues = 500;
    std::size_t distractor_degree = 7;
    /// Dialogues sharing one head entity, capped at distractor_degree + 1.
    std::size_t dialogues_per_head = 4;
    std::uint64_t seed = 7;
    std::vector<RelationTemplate> templates;  // empty = default_templates()

    void validate() const;
};

struct SynthOutput {
    std::vector<data::SurfaceTriple> triplets;
    std::vector<data::Dialogue> dialogues;
    Vocabulary vocab;
};

/// Each dialogue mentions one head entity in its history and asks about one of
/// its relations; the gold response realizes that single fact. Every head has
/// distractor_degree + 1 outgoing facts under distinct relations; remaining
/// triplets connect non-head entities only.
SynthOutput generate(const SynthConfig& config);

void write_kg(std::ostream& out, const std::vector<data::SurfaceTriple>& triplets);

/// Writes kg.tsv, dialogues.jsonl and vocab.txt into `dir`.
void write_outputs(const SynthOutput& output, const std::filesystem::path& dir);

}  // namespace surge::synth
