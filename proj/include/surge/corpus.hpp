#pragma once

#include "surge/kg.hpp"
#include "surge/vocab.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace surge::data {

using SurfaceTriple = std::array<std::string, 3>;

/// One dialogue turn to respond to.
struct Dialogue {
    std::string id;
    std::vector<std::string> history;
    std::string response;
    std::vector<SurfaceTriple> gold_triplets;

    bool operator==(const Dialogue&) const = default;
};

/// JSON lines: {"id", "history": [..], "response", "gold_triplets": [[h, r, t], ..]}.
std::vector<Dialogue> load_corpus(std::istream& in);
std::vector<Dialogue> load_corpus_file(const std::filesystem::path& path);
void save_corpus(std::ostream& out, const std::vector<Dialogue>& dialogues);

enum class Split { Train, Valid, Test };

[[nodiscard]] std::string to_string(Split s);
[[nodiscard]] Split parse_split(std::string_view name);

/// 64-bit FNV-1a.
[[nodiscard]] std::uint64_t fnv1a(std::string_view bytes);
[[nodiscard]] std::string hex_digest(std::uint64_t h);
[[nodiscard]] std::string file_digest(const std::filesystem::path& path);

/// 70/15/15 by hash of the dialogue id.
[[nodiscard]] Split split_of(std::string_view id);
[[nodiscard]] std::vector<Dialogue> select_split(const std::vector<Dialogue>& all, Split split);

/// Utterances joined with single spaces.
[[nodiscard]] std::string history_text(const Dialogue& d);

/// A dialogue resolved against the graph and vocabulary.
struct PreparedExample {
    std::string id;
    std::vector<TokenId> history;  // most recent max_hist_len tokens
    std::vector<TokenId> response;
    std::vector<kg::Mention> mentions;
    std::vector<kg::Triplet> candidates;
    std::vector<bool> gold;  // per candidate
    std::vector<kg::Triplet> gold_triplets;
    std::size_t gold_missing = 0;  // gold facts absent from the candidate set
};

struct PrepareOptions {
    std::size_t max_hist_len = 256;
    int khop = 1;
    std::size_t max_candidates = kg::kDefaultCandidateCap;
};

PreparedExample prepare(const Dialogue& d, const kg::KnowledgeGraph& graph, const Vocabulary& vocab,
                        const PrepareOptions& options = {});

/// Flattened "head relation tail" surfaces, one triplet after another.
std::string knowledge_text(const std::vector<kg::Triplet>& z, const kg::KnowledgeGraph& graph);

}  // namespace surge::data
