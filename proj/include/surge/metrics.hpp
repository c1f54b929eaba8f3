#pragma once

#include "surge/corpus.hpp"
#include "surge/kg.hpp"
#include "surge/retriever.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace surge::eval {

/// Lowercased, punctuation stripped, whitespace split.
std::vector<std::string> normalize_tokens(std::string_view text);

/// An extractive question derived from a dialogue and one fact.
struct KqaItem {
    std::string dialogue_id;
    std::string context;
    std::string head;
    std::string relation;
    std::vector<std::string> candidates;  // every tail of (head, relation, .), sorted
    std::string gold;

    bool operator==(const KqaItem&) const = default;
};

/// One item per (dialogue, fact) whose head is mentioned in the history and
/// whose tail is mentioned in the gold response.
std::vector<KqaItem> synthesize_kqa(const std::vector<data::Dialogue>& dialogues, const kg::KnowledgeGraph& graph,
                                    const Vocabulary& vocab);

struct AugmentedItem {
    KqaItem item;
    std::string response;  // gold response with the tail swapped
};

/// For each item, swaps the tail with another candidate (or, if the item has a
/// single candidate, with up to `max_swaps` tails of the same relation elsewhere
/// in the graph) and rewrites the gold response.
std::vector<AugmentedItem> augment_kqa(const std::vector<KqaItem>& items,
                                       const std::vector<data::Dialogue>& dialogues,
                                       const kg::KnowledgeGraph& graph, std::uint64_t seed,
                                       std::size_t max_swaps = 1);

void save_kqa(std::ostream& out, const std::vector<KqaItem>& items);
std::vector<KqaItem> load_kqa(std::istream& in);

/// The candidate whose tokens occur contiguously in the response (case
/// insensitive); the longest such candidate wins, then the earliest listed.
std::optional<std::string> extractive_answer(const KqaItem& item, std::string_view response);

/// Token-level F1 of two strings after normalization, in [0, 1].
double token_f1(std::string_view prediction, std::string_view reference);

struct KqaScores {
    double em = 0.0;            // percent
    double f1 = 0.0;            // percent
    double string_match = 0.0;  // percent of items with any candidate found
    double entity_f1 = 0.0;     // percent
    std::size_t items = 0;
};

/// `responses` maps dialogue id to generated text; items of absent dialogues
/// score zero.
KqaScores kqa_scores(const std::vector<KqaItem>& items, const std::map<std::string, std::string>& responses);

/// Unigram F1 (percent) between a response and a knowledge text.
double knowledge_f1(std::string_view response, std::string_view knowledge);

struct SurfaceMetrics {
    double bleu_1 = 0.0, bleu_2 = 0.0, bleu_3 = 0.0, bleu_4 = 0.0;
    double rouge_1 = 0.0, rouge_2 = 0.0, rouge_l = 0.0;
    double unigram_f1 = 0.0;
    double distinct_1 = 0.0, distinct_2 = 0.0;
};

/// Corpus BLEU with brevity penalty, sentence ROUGE F-measures averaged,
/// unigram F1 averaged, Distinct over all generations.
SurfaceMetrics surface_metrics(const std::vector<std::string>& generated, const std::vector<std::string>& references);

/// Unique n-grams over total n-grams across the corpus.
double distinct_n(const std::vector<std::vector<std::string>>& corpus, std::size_t n);

struct MetricReport {
    KqaScores kqa;
    double knowledge_f1 = 0.0;
    SurfaceMetrics surface;
    retrieval::RetrievalMetrics retrieval;
    std::size_t examples = 0;
};

/// Fixed key order, one `key\tvalue` line each.
std::string format_report(const MetricReport& report);

}  // namespace surge::eval
