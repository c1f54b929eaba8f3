#include "surge/metrics.hpp"

#include "surge/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace surge::eval {

using nlohmann::json;

namespace {

using Tokens = std::vector<std::string>;
using NgramCounts = std::map<Tokens, std::size_t>;

NgramCounts ngram_counts(const Tokens& tokens, std::size_t n) {
    NgramCounts out;
    if (tokens.size() < n) {
        return out;
    }
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++out[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                     tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return out;
}

std::size_t clipped_overlap(const NgramCounts& hyp, const NgramCounts& ref) {
    std::size_t total = 0;
    for (const auto& [gram, count] : hyp) {
        if (auto it = ref.find(gram); it != ref.end()) {
            total += std::min(count, it->second);
        }
    }
    return total;
}

std::size_t total_count(const NgramCounts& c) {
    std::size_t total = 0;
    for (const auto& [gram, count] : c) {
        total += count;
    }
    return total;
}

double f_measure(std::size_t overlap, std::size_t hyp_total, std::size_t ref_total) {
    if (overlap == 0 || hyp_total == 0 || ref_total == 0) {
        return 0.0;
    }
    const double p = static_cast<double>(overlap) / static_cast<double>(hyp_total);
    const double r = static_cast<double>(overlap) / static_cast<double>(ref_total);
    return 2.0 * p * r / (p + r);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

bool contains_sequence(const Tokens& haystack, const Tokens& needle) {
    if (needle.empty() || needle.size() > haystack.size()) {
        return false;
    }
    return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

std::vector<std::size_t> matching_candidates(const KqaItem& item, const Tokens& response) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < item.candidates.size(); ++i) {
        if (contains_sequence(response, normalize_tokens(item.candidates[i]))) {
            out.push_back(i);
        }
    }
    return out;
}

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

std::vector<std::string> normalize_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    const auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    };
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isspace(c) || c == '_') {
            flush();
        } else if (std::ispunct(c)) {
            continue;
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

std::vector<KqaItem> synthesize_kqa(const std::vector<data::Dialogue>& dialogues, const kg::KnowledgeGraph& graph,
                                    const Vocabulary& vocab) {
    std::vector<KqaItem> items;
    for (const auto& d : dialogues) {
        const std::string context = data::history_text(d);
        std::set<kg::EntityId> heads;
        for (const auto& m : graph.link_entities(vocab.encode(context))) {
            heads.insert(m.entity);
        }
        std::set<kg::EntityId> tails;
        for (const auto& m : graph.link_entities(vocab.encode(d.response))) {
            tails.insert(m.entity);
        }
        std::set<kg::Triplet> facts;
        for (kg::EntityId h : heads) {
            for (kg::TripletId id : graph.out_edges(h)) {
                const auto& t = graph.triplets()[id];
                if (tails.contains(t.tail) && t.tail != h) {
                    facts.insert(t);
                }
            }
        }
        for (const auto& fact : facts) {
            KqaItem item;
            item.dialogue_id = d.id;
            item.context = context;
            item.head = graph.entity(fact.head).surface;
            item.relation = graph.relation(fact.relation).surface;
            for (kg::TripletId id : graph.out_edges(fact.head)) {
                const auto& t = graph.triplets()[id];
                if (t.relation == fact.relation) {
                    item.candidates.push_back(graph.entity(t.tail).surface);
                }
            }
            std::sort(item.candidates.begin(), item.candidates.end());
            item.candidates.erase(std::unique(item.candidates.begin(), item.candidates.end()), item.candidates.end());
            item.gold = graph.entity(fact.tail).surface;
            items.push_back(std::move(item));
        }
    }
    return items;
}

std::vector<AugmentedItem> augment_kqa(const std::vector<KqaItem>& items,
                                       const std::vector<data::Dialogue>& dialogues,
                                       const kg::KnowledgeGraph& graph, std::uint64_t seed, std::size_t max_swaps) {
    std::map<std::string, const data::Dialogue*> by_id;
    for (const auto& d : dialogues) {
        by_id[d.id] = &d;
    }
    std::mt19937_64 rng(seed);
    std::vector<AugmentedItem> out;
    for (const auto& item : items) {
        const auto it = by_id.find(item.dialogue_id);
        if (it == by_id.end()) {
            continue;
        }
        const std::string& response = it->second->response;
        const auto at = response.find(item.gold);
        if (at == std::string::npos) {
            continue;
        }
        std::vector<std::string> pool;
        for (const auto& c : item.candidates) {
            if (c != item.gold) {
                pool.push_back(c);
            }
        }
        bool widened = false;
        if (pool.empty()) {
            const auto rel = graph.find_relation(item.relation);
            if (!rel) {
                continue;
            }
            std::set<std::string> tails;
            for (const auto& t : graph.triplets()) {
                if (t.relation == *rel) {
                    tails.insert(graph.entity(t.tail).surface);
                }
            }
            for (const auto& c : item.candidates) {
                tails.erase(c);
            }
            pool.assign(tails.begin(), tails.end());
            widened = true;
        }
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(std::min(pool.size(), max_swaps));
        for (const auto& replacement : pool) {
            AugmentedItem a;
            a.item = item;
            a.item.gold = replacement;
            if (widened) {
                a.item.candidates.push_back(replacement);
                std::sort(a.item.candidates.begin(), a.item.candidates.end());
            }
            a.response = response;
            a.response.replace(at, item.gold.size(), replacement);
            out.push_back(std::move(a));
        }
    }
    return out;
}

void save_kqa(std::ostream& out, const std::vector<KqaItem>& items) {
    for (const auto& item : items) {
        json j;
        j["dialogue_id"] = item.dialogue_id;
        j["context"] = item.context;
        j["head"] = item.head;
        j["relation"] = item.relation;
        j["candidates"] = item.candidates;
        j["gold"] = item.gold;
        out << j.dump() << '\n';
    }
}

std::vector<KqaItem> load_kqa(std::istream& in) {
    std::vector<KqaItem> items;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const json j = json::parse(line);
            KqaItem item;
            item.dialogue_id = j.at("dialogue_id").get<std::string>();
            item.context = j.at("context").get<std::string>();
            item.head = j.at("head").get<std::string>();
            item.relation = j.at("relation").get<std::string>();
            item.candidates = j.at("candidates").get<std::vector<std::string>>();
            item.gold = j.at("gold").get<std::string>();
            items.push_back(std::move(item));
        } catch (const json::exception& e) {
            throw ParseError(std::string("invalid KQA record: ") + e.what(), line_no);
        }
    }
    return items;
}

std::optional<std::string> extractive_answer(const KqaItem& item, std::string_view response) {
    const Tokens tokens = normalize_tokens(response);
    std::optional<std::size_t> best;
    std::size_t best_len = 0;
    for (std::size_t i : matching_candidates(item, tokens)) {
        const std::size_t len = normalize_tokens(item.candidates[i]).size();
        if (!best || len > best_len ||
            (len == best_len && item.candidates[i].size() > item.candidates[*best].size())) {
            best = i;
            best_len = len;
        }
    }
    if (!best) {
        return std::nullopt;
    }
    return item.candidates[*best];
}

double token_f1(std::string_view prediction, std::string_view reference) {
    const Tokens p = normalize_tokens(prediction);
    const Tokens r = normalize_tokens(reference);
    if (p.empty() || r.empty()) {
        return p.empty() && r.empty() ? 1.0 : 0.0;
    }
    return f_measure(clipped_overlap(ngram_counts(p, 1), ngram_counts(r, 1)), p.size(), r.size());
}

KqaScores kqa_scores(const std::vector<KqaItem>& items, const std::map<std::string, std::string>& responses) {
    KqaScores s;
    s.items = items.size();
    if (items.empty()) {
        return s;
    }
    for (const auto& item : items) {
        const auto it = responses.find(item.dialogue_id);
        if (it == responses.end()) {
            continue;
        }
        const auto answer = extractive_answer(item, it->second);
        if (answer) {
            s.em += *answer == item.gold ? 1.0 : 0.0;
            s.f1 += token_f1(*answer, item.gold);
            s.string_match += 1.0;
        }
        const auto found = matching_candidates(item, normalize_tokens(it->second));
        const bool hit = std::any_of(found.begin(), found.end(),
                                     [&item](std::size_t i) { return item.candidates[i] == item.gold; });
        if (hit) {
            s.entity_f1 += 2.0 / (static_cast<double>(found.size()) + 1.0);
        }
    }
    const double n = static_cast<double>(items.size());
    s.em = 100.0 * s.em / n;
    s.f1 = 100.0 * s.f1 / n;
    s.string_match = 100.0 * s.string_match / n;
    s.entity_f1 = 100.0 * s.entity_f1 / n;
    return s;
}

double knowledge_f1(std::string_view response, std::string_view knowledge) {
    if (normalize_tokens(knowledge).empty()) {
        return 0.0;
    }
    return 100.0 * token_f1(response, knowledge);
}

double distinct_n(const std::vector<std::vector<std::string>>& corpus, std::size_t n) {
    std::set<Tokens> unique;
    std::size_t total = 0;
    for (const auto& tokens : corpus) {
        for (const auto& [gram, count] : ngram_counts(tokens, n)) {
            unique.insert(gram);
            total += count;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

SurfaceMetrics surface_metrics(const std::vector<std::string>& generated, const std::vector<std::string>& references) {
    if (generated.size() != references.size()) {
        throw Error("surface_metrics: generated and reference counts differ");
    }
    SurfaceMetrics m;
    if (generated.empty()) {
        return m;
    }
    std::vector<Tokens> hyps;
    std::vector<Tokens> refs;
    for (std::size_t i = 0; i < generated.size(); ++i) {
        hyps.push_back(normalize_tokens(generated[i]));
        refs.push_back(normalize_tokens(references[i]));
    }

    std::array<std::size_t, 4> matches{};
    std::array<std::size_t, 4> totals{};
    std::size_t hyp_len = 0;
    std::size_t ref_len = 0;
    double r1 = 0.0, r2 = 0.0, rl = 0.0, uf1 = 0.0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        hyp_len += hyps[i].size();
        ref_len += refs[i].size();
        for (std::size_t n = 1; n <= 4; ++n) {
            const auto h = ngram_counts(hyps[i], n);
            matches[n - 1] += clipped_overlap(h, ngram_counts(refs[i], n));
            totals[n - 1] += total_count(h);
        }
        const auto h1 = ngram_counts(hyps[i], 1);
        const auto g1 = ngram_counts(refs[i], 1);
        r1 += f_measure(clipped_overlap(h1, g1), total_count(h1), total_count(g1));
        const auto h2 = ngram_counts(hyps[i], 2);
        const auto g2 = ngram_counts(refs[i], 2);
        r2 += f_measure(clipped_overlap(h2, g2), total_count(h2), total_count(g2));
        rl += f_measure(lcs_length(hyps[i], refs[i]), hyps[i].size(), refs[i].size());
        uf1 += token_f1(generated[i], references[i]);
    }
    const double n = static_cast<double>(hyps.size());
    m.rouge_1 = 100.0 * r1 / n;
    m.rouge_2 = 100.0 * r2 / n;
    m.rouge_l = 100.0 * rl / n;
    m.unigram_f1 = 100.0 * uf1 / n;
    m.distinct_1 = distinct_n(hyps, 1);
    m.distinct_2 = distinct_n(hyps, 2);

    if (hyp_len > 0) {
        const double bp = hyp_len > ref_len
                              ? 1.0
                              : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
        std::array<double*, 4> out{&m.bleu_1, &m.bleu_2, &m.bleu_3, &m.bleu_4};
        double log_sum = 0.0;
        bool zero = false;
        for (std::size_t k = 0; k < 4; ++k) {
            if (matches[k] == 0 || totals[k] == 0) {
                zero = true;
            } else {
                log_sum += std::log(static_cast<double>(matches[k]) / static_cast<double>(totals[k]));
            }
            *out[k] = zero ? 0.0 : 100.0 * bp * std::exp(log_sum / static_cast<double>(k + 1));
        }
    }
    return m;
}

std::string format_report(const MetricReport& r) {
    std::ostringstream os;
    const auto line = [&os](const std::string& key, const std::string& value) { os << key << '\t' << value << '\n'; };
    line("examples", std::to_string(r.examples));
    line("kqa_items", std::to_string(r.kqa.items));
    line("kqa_em", fixed(r.kqa.em));
    line("kqa_f1", fixed(r.kqa.f1));
    line("knowledge_f1", fixed(r.knowledge_f1));
    line("entity_f1", fixed(r.kqa.entity_f1));
    line("string_match", fixed(r.kqa.string_match));
    line("bleu_1", fixed(r.surface.bleu_1));
    line("bleu_2", fixed(r.surface.bleu_2));
    line("bleu_3", fixed(r.surface.bleu_3));
    line("bleu_4", fixed(r.surface.bleu_4));
    line("rouge_1", fixed(r.surface.rouge_1));
    line("rouge_2", fixed(r.surface.rouge_2));
    line("rouge_l", fixed(r.surface.rouge_l));
    line("unigram_f1", fixed(r.surface.unigram_f1));
    line("distinct_1", fixed(r.surface.distinct_1));
    line("distinct_2", fixed(r.surface.distinct_2));
    line("mrr", fixed(100.0 * r.retrieval.mrr));
    line("hits@1", fixed(100.0 * r.retrieval.hits1));
    line("hits@3", fixed(100.0 * r.retrieval.hits3));
    line("hits@5", fixed(100.0 * r.retrieval.hits5));
    line("hits@10", fixed(100.0 * r.retrieval.hits10));
    line("hits@100", fixed(100.0 * r.retrieval.hits100));
    line("retrieval_evaluated", std::to_string(r.retrieval.evaluated));
    return os.str();
}

}  // namespace surge::eval
