#include "fixtures.hpp"

#include "surge/error.hpp"
#include "surge/kg.hpp"
#include "surge/vocab.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <sstream>

using namespace surge;
using kg::KnowledgeGraph;
using kg::Triplet;

namespace {

KnowledgeGraph load(const std::string& text, const Vocabulary& vocab) {
    std::istringstream in(text);
    return KnowledgeGraph::load(in, vocab);
}

// Leftmost-longest matching by scanning every surface at every position.
std::vector<kg::Mention> naive_link(const KnowledgeGraph& g, const std::vector<TokenId>& tokens) {
    std::vector<kg::Mention> out;
    std::size_t i = 0;
    while (i < tokens.size()) {
        std::optional<kg::Mention> best;
        for (const auto& e : g.entities()) {
            const auto& s = e.tokens;
            if (std::find(s.begin(), s.end(), kUnk) != s.end() || s.empty() || i + s.size() > tokens.size()) {
                continue;
            }
            if (!std::equal(s.begin(), s.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
                continue;
            }
            if (!best || s.size() > best->length) {
                best = kg::Mention{e.id, i, s.size()};
            }
        }
        if (best) {
            out.push_back(*best);
            i += best->length;
        } else {
            ++i;
        }
    }
    return out;
}

// Undirected BFS to depth k-1, then every incident triplet.
std::vector<Triplet> naive_khop(const KnowledgeGraph& g, const std::vector<kg::EntityId>& seeds, int k) {
    std::map<kg::EntityId, int> depth;
    std::queue<kg::EntityId> q;
    for (auto s : seeds) {
        if (depth.emplace(s, 0).second) q.push(s);
    }
    while (!q.empty()) {
        auto e = q.front();
        q.pop();
        if (depth[e] >= k - 1) continue;
        for (const auto& t : g.triplets()) {
            for (auto [a, b] : {std::pair{t.head, t.tail}, std::pair{t.tail, t.head}}) {
                if (a == e && !depth.contains(b)) {
                    depth[b] = depth[e] + 1;
                    q.push(b);
                }
            }
        }
    }
    std::set<Triplet> found;
    for (const auto& t : g.triplets()) {
        if (depth.contains(t.head) || depth.contains(t.tail)) found.insert(t);
    }
    return {found.begin(), found.end()};
}

std::string random_kg_text(std::uint64_t seed, std::size_t entities, std::size_t relations, std::size_t edges) {
    std::mt19937_64 rng(seed);
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
    std::string out;
    while (seen.size() < edges) {
        const auto h = rng() % entities;
        const auto t = rng() % entities;
        const auto r = rng() % relations;
        if (h != t && seen.emplace(h, r, t).second) {
            out += "e" + std::to_string(h) + "\tr" + std::to_string(r) + "\te" + std::to_string(t) + "\n";
        }
    }
    return out;
}

}  // namespace

TEST_CASE("word splitting") {
    CHECK(split_words("Moby Dick; The Whale") == std::vector<std::string>{"Moby", "Dick", ";", "The", "Whale"});
    CHECK(split_words("written_by") == std::vector<std::string>{"written", "by"});
    CHECK(split_words("~written_by") == std::vector<std::string>{"~", "written", "by"});
    CHECK(split_words("  (hello), world?  ") == std::vector<std::string>{"(", "hello", ")", ",", "world", "?"});
    CHECK(split_words("").empty());
}

TEST_CASE("vocabulary round-trips and falls back to UNK") {
    Vocabulary v = fixtures::vocab_for({"the cat sat"});
    CHECK(v.size() == 7);
    CHECK(v.encode("the dog") == std::vector<TokenId>{v.id("the"), kUnk});
    CHECK(v.decode(std::vector<TokenId>{kBos, v.id("cat"), v.id("sat"), kEos, kPad}) == "cat sat");
    std::stringstream ss;
    v.save(ss);
    Vocabulary w = Vocabulary::load(ss);
    CHECK(w.size() == v.size());
    CHECK(w.id("sat") == v.id("sat"));
}

TEST_CASE("vocabulary file must start with the reserved tokens") {
    std::istringstream bad("<pad>\n<bos>\n<unk>\n<eos>\nx\n");
    CHECK_THROWS_AS(Vocabulary::load(bad), ParseError);
    std::istringstream dup("<pad>\n<unk>\n<bos>\n<eos>\nx\nx\n");
    CHECK_THROWS_AS(Vocabulary::load(dup), ParseError);
}

TEST_CASE("graph loading builds entities, relations and inverses") {
    auto w = fixtures::movie_world();
    const auto& g = w.graph;
    CHECK(g.triplets().size() == 8);
    CHECK(g.check_indices());
    const auto wb = g.find_relation("written_by");
    const auto inv = g.find_relation("~written_by");
    REQUIRE(wb);
    REQUIRE(inv);
    CHECK(g.relation(*wb).inverse_id == *inv);
    CHECK(g.relation(*inv).inverse_id == *wb);
    CHECK(g.relation(*inv).is_inverse);
    const auto t = g.find_triplet("Moby Dick", "written_by", "Herman Melville");
    REQUIRE(t);
    CHECK(*g.find_triplet("Herman Melville", "~written_by", "Moby Dick") == *t);
    const Triplet inverted = g.invert(*t);
    CHECK(inverted.head == t->tail);
    CHECK(inverted.relation == *inv);
    CHECK(inverted.tail == t->head);
    CHECK(g.invert(g.invert(*t)) == *t);
    CHECK(g.format(*t) == "Moby Dick\twritten_by\tHerman Melville");
    CHECK(g.entity(*g.find_entity("Moby Dick")).tokens == w.vocab.encode("Moby Dick"));
}

TEST_CASE("an inverse relation in the file is stored as the original direction") {
    auto v = fixtures::vocab_for({"A B written by ~"});
    auto g = load("A\t~written_by\tB\n", v);
    REQUIRE(g.triplets().size() == 1);
    CHECK(g.entity(g.triplets()[0].head).surface == "B");
    CHECK(g.relation(g.triplets()[0].relation).surface == "written_by");
}

TEST_CASE("malformed graph lines report their line number") {
    auto v = fixtures::vocab_for({"a b c"});
    try {
        (void)load("a\tb\tc\n\na\tb\n", v);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS((void)load("", v), Error);
    CHECK_THROWS_AS((void)load("a\t\tc\n", v), ParseError);
}

TEST_CASE("entity linking is leftmost-longest exact match") {
    auto w = fixtures::movie_world({"Orson Welles and Orson met in New York ."});
    const auto& g = w.graph;
    const auto tokens = w.vocab.encode("Orson Welles and Orson met in New York .");
    const auto mentions = g.link_entities(tokens);
    REQUIRE(mentions.size() == 2);
    CHECK(g.entity(mentions[0].entity).surface == "Orson Welles");
    CHECK(mentions[0].begin == 0);
    CHECK(mentions[0].length == 2);
    CHECK(g.entity(mentions[1].entity).surface == "New York");
    CHECK(mentions == naive_link(g, tokens));
    CHECK(g.link_entities(w.vocab.encode("nothing here")).empty());
}

TEST_CASE("linking matches a brute-force scan on random token streams") {
    auto v = fixtures::vocab_for({"a b c d e"});
    auto g = load("a b\tr\tc\na\tr\td\na b c\tr\te\nd\tr\te\n", v);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<TokenId> tokens;
        const auto n = rng() % 12;
        for (std::size_t i = 0; i < n; ++i) {
            tokens.push_back(static_cast<TokenId>(4 + rng() % 6));  // includes ids outside the graph
        }
        CHECK(g.link_entities(tokens) == naive_link(g, tokens));
    }
}

TEST_CASE("k-hop candidates match a breadth-first oracle") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const std::string text = random_kg_text(seed, 30, 4, 60);
        std::vector<std::string> words = {text};
        auto v = fixtures::vocab_for(words);
        auto g = load(text, v);
        for (int k = 1; k <= 3; ++k) {
            const std::vector<kg::EntityId> seeds = {0, static_cast<kg::EntityId>(seed % g.entities().size())};
            CHECK(g.khop_candidates(seeds, k, 100000) == naive_khop(g, seeds, k));
        }
    }
}

TEST_CASE("k-hop candidates are sorted and capped") {
    auto w = fixtures::movie_world();
    const std::vector<kg::EntityId> seed = {*w.graph.find_entity("Moby Dick")};
    const auto one = w.graph.khop_candidates(seed, 1);
    CHECK(one.size() == 4);
    CHECK(std::is_sorted(one.begin(), one.end()));
    const auto two = w.graph.khop_candidates(seed, 2);
    CHECK(two.size() == 7);
    const auto capped = w.graph.khop_candidates(seed, 2, 3);
    CHECK(capped == std::vector<Triplet>(two.begin(), two.begin() + 3));
    CHECK(w.graph.khop_candidates({}, 1).empty());
    CHECK_THROWS_AS((void)w.graph.khop_candidates(seed, 0), Error);
}

TEST_CASE("symbols with unknown words map to UNK and never link") {
    auto v = fixtures::vocab_for({"known x r"});
    auto g = load("known\tr\tmystery thing\n", v);
    const auto& e = g.entity(*g.find_entity("mystery thing"));
    CHECK(e.tokens == std::vector<TokenId>{kUnk, kUnk});
    CHECK(g.link_entities(std::vector<TokenId>{kUnk, kUnk}).empty());
    CHECK(kg::tokenize_symbol("", v) == std::vector<TokenId>{kUnk});
}
