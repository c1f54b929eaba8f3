#include "surge/synth.hpp"

#include "surge/error.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <set>

namespace surge::synth {

namespace {

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[pick(rng, i)]);
    }
}

std::string fill(std::string text, const std::string& slot, const std::string& value) {
    for (auto at = text.find(slot); at != std::string::npos; at = text.find(slot, at + value.size())) {
        text.replace(at, slot.size(), value);
    }
    return text;
}

const std::vector<std::string>& openers() {
    static const std::vector<std::string> all = {
        "have you heard about {HEAD} ?",
        "i keep thinking about {HEAD} .",
        "{HEAD} came up yesterday .",
        "let us talk about {HEAD} .",
        "somebody mentioned {HEAD} this morning .",
    };
    return all;
}

const std::vector<std::string>& response_templates() {
    static const std::vector<std::string> all = {
        "{HEAD} {RELATION-PHRASE} {TAIL} .",
        "i believe {HEAD} {RELATION-PHRASE} {TAIL} .",
        "well , {HEAD} {RELATION-PHRASE} {TAIL} .",
    };
    return all;
}

std::vector<std::string> entity_names(std::size_t count, Rng& rng) {
    static const std::string consonants = "bdfgklmnprstvz";
    static const std::string vowels = "aeiou";
    std::set<std::string> seen;
    std::vector<std::string> out;
    while (out.size() < count) {
        const std::size_t syllables = 2 + pick(rng, 2);
        std::string name;
        for (std::size_t s = 0; s < syllables; ++s) {
            name += consonants[pick(rng, consonants.size())];
            name += vowels[pick(rng, vowels.size())];
        }
        name[0] = static_cast<char>(name[0] - 'a' + 'A');
        if (seen.insert(name).second) {
            out.push_back(std::move(name));
        }
    }
    return out;
}

}  // namespace

const std::vector<RelationTemplate>& default_templates() {
    static const std::vector<RelationTemplate> all = {
        {"written_by", "was written by", {"who is the author behind {HEAD} ?", "who wrote {HEAD} ?"}},
        {"directed_by", "was directed by", {"who made the film {HEAD} ?", "who was the director for {HEAD} ?"}},
        {"composed_by", "was composed by", {"who made the music for {HEAD} ?", "whose songs fill {HEAD} ?"}},
        {"produced_by", "was produced by", {"who financed {HEAD} ?", "which producer backed {HEAD} ?"}},
        {"illustrated_by", "was illustrated by", {"who drew the pictures for {HEAD} ?", "which artist drew {HEAD} ?"}},
        {"born_in", "was born in", {"where does {HEAD} come from ?", "what is the hometown for {HEAD} ?"}},
        {"married_to", "is married to", {"who is the partner for {HEAD} ?", "whom did {HEAD} wed ?"}},
        {"sibling_of", "is the sibling of", {"does {HEAD} have a brother or sister ?", "who grew up alongside {HEAD} ?"}},
        {"mentored_by", "was mentored by", {"who taught {HEAD} ?", "who was the teacher for {HEAD} ?"}},
        {"award_won", "won the award", {"what prize did {HEAD} receive ?", "which honour did {HEAD} get ?"}},
        {"member_of", "is a member of", {"which group does {HEAD} belong with ?", "what club has {HEAD} joined ?"}},
        {"founded_by", "was founded by", {"who started {HEAD} ?", "who is the creator behind {HEAD} ?"}},
        {"located_in", "is located in", {"where is {HEAD} situated ?", "where can i find {HEAD} ?"}},
        {"edited_by", "was edited by", {"who revised {HEAD} ?", "who was the editor for {HEAD} ?"}},
        {"narrated_by", "was narrated by", {"whose voice tells {HEAD} ?", "who reads the audiobook for {HEAD} ?"}},
        {"inspired_by", "was inspired by", {"what influenced {HEAD} ?", "who was the muse for {HEAD} ?"}},
    };
    return all;
}

void SynthConfig::validate() const {
    const auto& tpl = templates.empty() ? default_templates() : templates;
    if (n_relations == 0 || n_relations > tpl.size()) {
        throw Error("n_relations must lie in [1, " + std::to_string(tpl.size()) + "]");
    }
    if (n_dialogues == 0) {
        throw Error("n_dialogues must be positive");
    }
    if (n_triplets < n_dialogues) {
        throw Error("n_triplets must be at least n_dialogues");
    }
    const std::size_t per_head = distractor_degree + 1;
    if (per_head > n_relations) {
        throw Error("distractor_degree + 1 exceeds n_relations");
    }
    if (dialogues_per_head == 0) {
        throw Error("dialogues_per_head must be positive");
    }
    const std::size_t heads_per = std::min(dialogues_per_head, per_head);
    const std::size_t heads = (n_dialogues + heads_per - 1) / heads_per;
    if (heads * per_head > n_triplets) {
        throw Error("n_triplets too small for the head facts");
    }
    if (n_entities < heads + per_head) {
        throw Error("not enough entities: need at least " + std::to_string(heads + per_head));
    }
    const std::size_t pool = n_entities - heads;
    const std::size_t noise = n_triplets - heads * per_head;
    if (noise > 0 && (pool < 2 || noise > pool * (pool - 1) * n_relations / 2)) {
        throw Error("not enough non-head entities for the remaining triplets");
    }
}

SynthOutput generate(const SynthConfig& config) {
    config.validate();
    const auto& templates = config.templates.empty() ? default_templates() : config.templates;
    Rng rng(config.seed);
    const std::size_t per_head = config.distractor_degree + 1;
    const std::size_t dialogues_per_head = std::min(config.dialogues_per_head, per_head);
    const std::size_t n_heads = (config.n_dialogues + dialogues_per_head - 1) / dialogues_per_head;

    std::vector<std::string> names = entity_names(config.n_entities, rng);
    const std::vector<std::string> heads(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(n_heads));
    const std::vector<std::string> pool(names.begin() + static_cast<std::ptrdiff_t>(n_heads), names.end());

    SynthOutput out;
    std::set<data::SurfaceTriple> seen;
    // facts[h][j] = (relation index, tail)
    std::vector<std::vector<std::pair<std::size_t, std::string>>> facts(n_heads);
    std::vector<std::size_t> relation_ids(config.n_relations);
    for (std::size_t r = 0; r < config.n_relations; ++r) {
        relation_ids[r] = r;
    }
    std::vector<std::size_t> pool_ids(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        pool_ids[i] = i;
    }
    for (std::size_t h = 0; h < n_heads; ++h) {
        shuffle(relation_ids, rng);
        // Partial shuffle: the first per_head entries become distinct tails.
        for (std::size_t j = 0; j < per_head; ++j) {
            std::swap(pool_ids[j], pool_ids[j + pick(rng, pool_ids.size() - j)]);
        }
        for (std::size_t j = 0; j < per_head; ++j) {
            const std::size_t rel = relation_ids[j];
            const std::string& tail = pool[pool_ids[j]];
            facts[h].emplace_back(rel, tail);
            data::SurfaceTriple t{heads[h], templates[rel].surface, tail};
            seen.insert(t);
            out.triplets.push_back(std::move(t));
        }
    }
    while (out.triplets.size() < config.n_triplets) {
        const std::size_t a = pick(rng, pool.size());
        const std::size_t b = pick(rng, pool.size());
        if (a == b) {
            continue;
        }
        data::SurfaceTriple t{pool[a], templates[pick(rng, config.n_relations)].surface, pool[b]};
        if (seen.insert(t).second) {
            out.triplets.push_back(std::move(t));
        }
    }

    std::vector<std::size_t> used(n_heads, 0);
    for (auto& f : facts) {
        shuffle(f, rng);
    }
    for (std::size_t i = 0; i < config.n_dialogues; ++i) {
        const std::size_t h = i % n_heads;
        const auto& [rel, tail] = facts[h][used[h]++];
        const RelationTemplate& tpl = templates[rel];
        data::Dialogue d;
        char id[32];
        std::snprintf(id, sizeof(id), "d%05zu", i);
        d.id = id;
        d.history.push_back(fill(openers()[pick(rng, openers().size())], "{HEAD}", heads[h]));
        d.history.push_back(fill(tpl.cues[pick(rng, tpl.cues.size())], "{HEAD}", heads[h]));
        std::string response = response_templates()[pick(rng, response_templates().size())];
        response = fill(response, "{HEAD}", heads[h]);
        response = fill(response, "{RELATION-PHRASE}", fill(tpl.phrase, "{HEAD}", heads[h]));
        d.response = fill(response, "{TAIL}", tail);
        d.gold_triplets.push_back({heads[h], tpl.surface, tail});
        out.dialogues.push_back(std::move(d));
    }

    std::set<std::string> words;
    const auto collect = [&words](std::string_view text) {
        for (auto& w : split_words(text)) {
            words.insert(std::move(w));
        }
    };
    for (const auto& t : out.triplets) {
        collect(t[0]);
        collect(t[2]);
    }
    for (std::size_t r = 0; r < config.n_relations; ++r) {
        collect(templates[r].surface);
        collect(std::string(1, kg::kInversePrefix) + templates[r].surface);
    }
    for (const auto& d : out.dialogues) {
        for (const auto& u : d.history) {
            collect(u);
        }
        collect(d.response);
    }
    for (const auto& w : words) {
        out.vocab.add(w);
    }
    return out;
}

void write_kg(std::ostream& out, const std::vector<data::SurfaceTriple>& triplets) {
    for (const auto& t : triplets) {
        out << t[0] << '\t' << t[1] << '\t' << t[2] << '\n';
    }
}

void write_outputs(const SynthOutput& output, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto open = [&dir](const char* name) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) {
            throw Error("cannot write " + (dir / name).string());
        }
        return f;
    };
    {
        auto f = open("kg.tsv");
        write_kg(f, output.triplets);
    }
    {
        auto f = open("dialogues.jsonl");
        data::save_corpus(f, output.dialogues);
    }
    {
        auto f = open("vocab.txt");
        output.vocab.save(f);
    }
}

}  // namespace surge::synth
