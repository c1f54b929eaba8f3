#include "fixtures.hpp"

#include "surge/error.hpp"
#include "surge/graph_nets.hpp"
#include "surge/optim.hpp"
#include "surge/retriever.hpp"
#include "surge/seq_model.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

using namespace surge;
using nn::Matrix;
using nn::Tensor;

namespace {

seq::SeqModelConfig tiny_seq(std::size_t vocab) {
    seq::SeqModelConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_enc_layers = 1;
    c.n_dec_layers = 1;
    c.ffn_width = 16;
    c.max_positions = 32;
    c.vocab_size = vocab;
    return c;
}

Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

Matrix affine(const nn::Linear& l, const Matrix& x) {
    Matrix y = x * l.weight.value();
    if (l.bias.defined()) {
        y.rowwise() += l.bias.value().row(0);
    }
    return y;
}

std::vector<kg::Triplet> triplets_of(std::initializer_list<std::array<std::uint32_t, 3>> list) {
    std::vector<kg::Triplet> out;
    for (const auto& a : list) {
        out.push_back(kg::Triplet{a[0], a[1], a[2]});
    }
    return out;
}

retrieval::CandidateSet fixed_dist(const std::vector<double>& scores) {
    std::vector<kg::Triplet> t;
    for (std::uint32_t i = 0; i < scores.size(); ++i) {
        t.push_back(kg::Triplet{i, 0, i + 100});
    }
    return retrieval::candidate_set_from_scores(t, scores);
}

}  // namespace

TEST_CASE("decoder is causal") {
    nn::ParamStore store;
    nn::Rng rng(1);
    seq::Seq2Seq model(tiny_seq(12), store, rng);
    const std::vector<TokenId> src = {5, 6, 7};
    auto enc = model.encode(model.embed(src));
    const std::vector<TokenId> a = {kBos, 4, 5, 6, 7};
    const std::vector<TokenId> b = {kBos, 4, 5, 11, 9};
    const Matrix la = model.teacher_forced(enc, a).logits.value();
    const Matrix lb = model.teacher_forced(enc, b).logits.value();
    CHECK(la.rows() == 4);
    CHECK(la.cols() == 12);
    CHECK(la.topRows(3) == lb.topRows(3));
    CHECK(la.row(3) != lb.row(3));
}

TEST_CASE("masked encoder positions do not influence the decoder") {
    nn::ParamStore store;
    nn::Rng rng(2);
    seq::Seq2Seq model(tiny_seq(12), store, rng);
    const std::vector<bool> mask = {true, true, false};
    auto e1 = model.encode(model.embed(std::vector<TokenId>{5, 6, 7}), mask);
    auto e2 = model.encode(model.embed(std::vector<TokenId>{5, 6, 10}), mask);
    CHECK(e1.states.value().topRows(2).isApprox(e2.states.value().topRows(2), 1e-12));
    const std::vector<TokenId> tgt = {kBos, 8, 9};
    CHECK(model.teacher_forced(e1, tgt).logits.value().isApprox(model.teacher_forced(e2, tgt).logits.value(), 1e-12));
}

TEST_CASE("greedy decoding is deterministic and bounded") {
    nn::ParamStore store;
    nn::Rng rng(3);
    seq::Seq2Seq model(tiny_seq(12), store, rng);
    auto enc = model.encode(model.embed(std::vector<TokenId>{4, 5}));
    const auto a = model.greedy_decode(enc, 6);
    CHECK(a == model.greedy_decode(enc, 6));
    CHECK(a.size() <= 6);
    CHECK(std::find(a.begin(), a.end(), kEos) == a.end());
}

TEST_CASE("sequence log-likelihood sums the selected log-probabilities") {
    Matrix logits = fixtures::random_matrix(3, 5, 4);
    const std::vector<TokenId> next = {1, 4, 0};
    const double got = seq::sequence_log_likelihood(Tensor(logits, false), next).item();
    const double masked = seq::sequence_log_likelihood(Tensor(logits, false), next, {true, false, true}).item();
    double want = 0.0;
    double want_masked = 0.0;
    for (Eigen::Index t = 0; t < 3; ++t) {
        const double lse = std::log(logits.row(t).array().exp().sum());
        const double lp = logits(t, static_cast<Eigen::Index>(next[static_cast<std::size_t>(t)])) - lse;
        want += lp;
        if (t != 1) want_masked += lp;
    }
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
    CHECK(masked == doctest::Approx(want_masked).epsilon(1e-12));
}

TEST_CASE("decoder targets are framed and truncated") {
    const std::vector<TokenId> y = {7, 8, 9};
    CHECK(seq::make_targets(y, 10) == std::vector<TokenId>{kBos, 7, 8, 9, kEos});
    CHECK(seq::make_targets(y, 2) == std::vector<TokenId>{kBos, 7, 8, kEos});
    CHECK(seq::make_targets({}, 4) == std::vector<TokenId>{kBos, kEos});
}

TEST_CASE("seq2seq likelihood has correct gradients") {
    nn::ParamStore store;
    nn::Rng rng(5);
    seq::Seq2Seq model(tiny_seq(10), store, rng);
    const std::vector<TokenId> src = {4, 5, 6};
    const std::vector<TokenId> tgt = seq::make_targets(std::vector<TokenId>{7, 8}, 8);
    auto f = [&] {
        auto enc = model.encode(model.embed(src));
        auto out = model.teacher_forced(enc, tgt);
        return seq::sequence_log_likelihood(out.logits, std::span(tgt).subspan(1));
    };
    nn::GradCheckOptions opt;
    opt.max_coords_per_tensor = 6;
    opt.epsilon = 1e-4;  // attention gradients are ~1e-4 at init; smaller steps drown in roundoff
    CHECK(nn::grad_check(f, store.tensors(), opt).max_rel_error < 1e-4);
}

TEST_CASE("sequences beyond the position table are rejected") {
    nn::ParamStore store;
    nn::Rng rng(6);
    seq::Seq2Seq model(tiny_seq(10), store, rng);
    std::vector<TokenId> long_input(33, 4);
    CHECK_THROWS_AS((void)model.embed(long_input), Error);
}

TEST_CASE("node mean operator averages both edge directions") {
    const std::vector<gnn::LocalEdge> edges = {{0, 0, 1}, {0, 1, 2}, {3, 0, 3}};
    const Matrix a = gnn::node_mean_operator(5, edges);
    Matrix want = Matrix::Zero(5, 5);
    want(0, 1) = 0.5;
    want(0, 2) = 0.5;
    want(1, 0) = 1.0;
    want(2, 0) = 1.0;
    want(3, 3) = 1.0;
    CHECK(a == want);
}

TEST_CASE("edge mean operator links triplets sharing an endpoint") {
    const std::vector<gnn::LocalEdge> edges = {{0, 0, 1}, {1, 1, 2}, {3, 0, 4}, {2, 0, 0}};
    const Matrix a = gnn::edge_mean_operator(edges);
    Matrix want = Matrix::Zero(4, 4);
    want(0, 1) = 0.5;
    want(0, 3) = 0.5;
    want(1, 0) = 0.5;
    want(1, 3) = 0.5;
    want(3, 0) = 0.5;
    want(3, 1) = 0.5;
    CHECK(a == want);
}

TEST_CASE("GCN and edge passes match a direct evaluation") {
    nn::ParamStore store;
    nn::Rng rng(7);
    gnn::GcnNodeNet gcn(store, "gcn", 4, 2, rng);
    gnn::EdgeHypergraphNet ehg(store, "ehg", 4, 1, rng);
    const std::vector<gnn::LocalEdge> edges = {{0, 0, 1}, {1, 1, 2}, {2, 0, 3}};
    const Matrix x = fixtures::random_matrix(4, 4, 8);
    // neighbors: 0:{1} 1:{0,2} 2:{1,3} 3:{2}
    Matrix agg = Matrix::Zero(4, 4);
    agg(0, 1) = 1.0;
    agg(1, 0) = agg(1, 2) = 0.5;
    agg(2, 1) = agg(2, 3) = 0.5;
    agg(3, 2) = 1.0;
    Matrix h = x;
    for (const auto& layer : gcn.layers()) {
        Matrix cat(4, 8);
        cat << h, agg * h;
        h = relu(affine(layer, cat));
    }
    CHECK(gcn.forward(Tensor(x, false), edges).value().isApprox(h, 1e-12));

    const Matrix ev = fixtures::random_matrix(3, 4, 9);
    Matrix eagg = Matrix::Zero(3, 3);
    eagg(0, 1) = 1.0;
    eagg(1, 0) = eagg(1, 2) = 0.5;
    eagg(2, 1) = 1.0;
    Matrix cat(3, 8);
    cat << ev, eagg * ev;
    CHECK(ehg.forward(Tensor(ev, false), edges).value().isApprox(relu(affine(ehg.layers()[0], cat)), 1e-12));
}

TEST_CASE("relational GNN matches a composition oracle") {
    nn::ParamStore store;
    nn::Rng rng(10);
    gnn::RelationalGnn rgnn(store, "rgnn", 4, 3, rng);
    const Matrix x = fixtures::random_matrix(3, 4, 11);
    const Matrix rel = fixtures::random_matrix(2, 3, 12);
    const std::vector<gnn::LocalEdge> edges = {{0, 0, 1}, {2, 1, 1}, {1, 1, 0}};
    Matrix want = affine(rgnn.self, x);
    // node 1 receives from 0 (rel 0) and 2 (rel 1); node 0 from 1 (rel 1); node 2 is isolated
    auto msg = [&](Eigen::Index src, Eigen::Index r) {
        Matrix diff = x.row(src) - affine(rgnn.relation_proj, rel.row(r));
        return Matrix(affine(rgnn.message, diff));
    };
    want.row(1) += 0.5 * (msg(0, 0) + msg(2, 1));
    want.row(0) += msg(1, 1);
    CHECK(rgnn.forward(Tensor(x, false), Tensor(rel, false), edges).value().isApprox(relu(want), 1e-12));
    CHECK(rgnn.forward(Tensor(x, false), Tensor(rel, false), {}).value().isApprox(relu(affine(rgnn.self, x)), 1e-12));
}

TEST_CASE("graph passes have correct gradients") {
    nn::ParamStore store;
    nn::Rng rng(13);
    gnn::GcnNodeNet gcn(store, "gcn", 4, 2, rng);
    gnn::RelationalGnn rgnn(store, "rgnn", 4, 3, rng);
    Tensor x = fixtures::param(3, 4, 14);
    Tensor rel = fixtures::param(2, 3, 15);
    const std::vector<gnn::LocalEdge> edges = {{0, 0, 1}, {1, 1, 2}, {2, 1, 0}};
    Tensor w(fixtures::random_matrix(3, 4, 16), false);
    auto f = [&] {
        return nn::sum(nn::mul(gcn.forward(x, edges), w)) + nn::sum(nn::mul(rgnn.forward(x, rel, edges), w));
    };
    auto params = store.tensors();
    params.push_back(x);
    params.push_back(rel);
    CHECK(nn::grad_check(f, params).max_rel_error < 1e-4);
}

TEST_CASE("retrieval distribution is a softmax of inner products") {
    const Matrix emb = fixtures::random_matrix(4, 3, 20);
    const Matrix ctx = fixtures::random_matrix(1, 3, 21);
    auto dist = retrieval::retrieval_distribution(triplets_of({{0, 0, 1}, {0, 1, 2}, {1, 0, 2}, {2, 1, 0}}),
                                                  Tensor(emb, false), Tensor(ctx, false));
    const Matrix s = ctx * emb.transpose();
    const double z = s.array().exp().sum();
    double total = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(dist.probs[i] == doctest::Approx(std::exp(s(0, static_cast<Eigen::Index>(i))) / z).epsilon(1e-12));
        total += dist.probs[i];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("retriever pools a single token to its state and zero-fills unmentioned entities") {
    nn::ParamStore store;
    nn::Rng rng(22);
    retrieval::RetrieverConfig cfg;
    cfg.d_model = 4;
    cfg.relation_width = 3;
    cfg.gnn_layers = 1;
    retrieval::Retriever r(cfg, 2, store, rng);
    const Matrix states = fixtures::random_matrix(3, 4, 23);
    seq::EncoderStates enc{Tensor(states, false), {false, true, false}};
    const auto ctx = r.context_embedding(enc);
    CHECK(ctx.vector.value().isApprox(states.row(1), 1e-12));
    CHECK(ctx.attention[1] == doctest::Approx(1.0));
    enc.mask = {false, false, false};
    CHECK_THROWS_AS((void)r.context_embedding(enc), Error);

    const std::vector<kg::Mention> mentions = {{5, 1, 2}};
    const auto nodes = r.initial_nodes(triplets_of({{5, 0, 9}}), mentions, Tensor(states, false));
    REQUIRE(nodes.ids == std::vector<kg::EntityId>{5, 9});
    CHECK(nodes.rows.value().row(0).isApprox(0.5 * (states.row(1) + states.row(2)), 1e-12));
    CHECK(nodes.rows.value().row(1).isZero());
    CHECK(nodes.from_context == std::vector<bool>{true, false});
}

TEST_CASE("sampling draws distinct sorted indices deterministically") {
    auto dist = fixed_dist({0.1, 2.0, -1.0, 0.5, 0.0});
    const auto a = retrieval::sample_subgraphs(dist, 3, 20, 42);
    const auto b = retrieval::sample_subgraphs(dist, 3, 20, 42);
    REQUIRE(a.size() == 20);
    for (std::size_t s = 0; s < a.size(); ++s) {
        CHECK(a[s].indices == b[s].indices);
        CHECK(std::is_sorted(a[s].indices.begin(), a[s].indices.end()));
        CHECK(std::set<std::size_t>(a[s].indices.begin(), a[s].indices.end()).size() == 3);
        double lp = 0.0;
        for (auto i : a[s].indices) lp += std::log(dist.probs[i]);
        CHECK(a[s].log_prob.item() == doctest::Approx(lp).epsilon(1e-12));
    }
    CHECK(retrieval::sample_subgraphs(dist, 9, 2, 1)[0].indices.size() == 5);
}

TEST_CASE("sampling without replacement matches the sequential-draw distribution") {
    auto dist = fixed_dist({0.3, 1.0, -0.5, 0.2});
    const auto& p = dist.probs;
    std::map<std::vector<std::size_t>, double> freq;
    const std::size_t trials = 40000;
    for (std::size_t s = 0; s < trials; ++s) {
        for (const auto& sg : retrieval::sample_subgraphs(dist, 2, 1, 1000 + s)) {
            freq[sg.indices] += 1.0 / trials;
        }
    }
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = i + 1; j < 4; ++j) {
            const double want = p[i] * p[j] / (1.0 - p[i]) + p[j] * p[i] / (1.0 - p[j]);
            CHECK(std::abs(freq[{i, j}] - want) < 0.01);
        }
    }
}

TEST_CASE("exhaustive mode enumerates every subset in lexicographic order") {
    auto dist = fixed_dist({0.0, 1.0, 2.0, 3.0, 4.0});
    const auto all = retrieval::sample_subgraphs(dist, 2, 1, 0, true);
    REQUIRE(all.size() == 10);
    CHECK(all.front().indices == std::vector<std::size_t>{0, 1});
    CHECK(all.back().indices == std::vector<std::size_t>{3, 4});
    for (std::size_t i = 1; i < all.size(); ++i) {
        CHECK(all[i - 1].indices < all[i].indices);
    }
    // C(10, 5) exceeds the limit, so k samples are drawn instead.
    auto big = fixed_dist(std::vector<double>(10, 0.0));
    CHECK(retrieval::sample_subgraphs(big, 5, 3, 0, true).size() == 3);
}

TEST_CASE("ranking, top-n and gold rank") {
    auto dist = fixed_dist({1.0, 3.0, 1.0, 2.0});
    CHECK(retrieval::ranking(dist) == std::vector<std::size_t>{1, 3, 0, 2});
    CHECK(retrieval::top_n(dist, 2) == std::vector<std::size_t>{1, 3});
    CHECK(retrieval::top_n(dist, 3) == std::vector<std::size_t>{0, 1, 3});
    const std::vector<double> scores = {1.0, 3.0, 1.0, 2.0};
    CHECK(retrieval::gold_rank(scores, {false, false, true, false}) == 4);
    CHECK(retrieval::gold_rank(scores, {true, false, true, false}) == 3);
    CHECK(retrieval::gold_rank(scores, {false, false, false, false}) == 0);
}

TEST_CASE("ranking accumulator computes MRR and hits") {
    retrieval::RankingAccumulator acc;
    acc.add(std::vector<double>{3, 2, 1}, {true, false, false});  // rank 1
    acc.add(std::vector<double>{3, 2, 1}, {false, false, true});  // rank 3
    acc.add(std::vector<double>{3, 2, 1}, {false, false, false});
    const auto m = acc.result();
    CHECK(m.evaluated == 2);
    CHECK(m.skipped == 1);
    CHECK(m.mrr == doctest::Approx((1.0 + 1.0 / 3.0) / 2.0));
    CHECK(m.hits1 == doctest::Approx(0.5));
    CHECK(m.hits3 == doctest::Approx(1.0));
}

TEST_CASE("BM25 matches a direct evaluation of the formula") {
    const std::vector<std::vector<TokenId>> docs = {{4, 5, 5, 6}, {6, 7}, {8}, {4, 4, 4, 9, 10, 11}};
    const std::vector<TokenId> query = {4, 6, 6, 12};
    const auto got = retrieval::bm25_scores(query, docs);
    const double k1 = 1.2;
    const double b = 0.75;
    double avgdl = 0.0;
    for (const auto& d : docs) avgdl += static_cast<double>(d.size()) / docs.size();
    for (std::size_t d = 0; d < docs.size(); ++d) {
        double want = 0.0;
        for (TokenId q : std::set<TokenId>(query.begin(), query.end())) {
            const double tf = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), q));
            double df = 0.0;
            for (const auto& o : docs) df += std::count(o.begin(), o.end(), q) > 0 ? 1.0 : 0.0;
            const double idf = std::log(1.0 + (docs.size() - df + 0.5) / (df + 0.5));
            const double qtf = static_cast<double>(std::count(query.begin(), query.end(), q));
            want += qtf * idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * docs[d].size() / avgdl));
        }
        CHECK(got[d] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("random baseline is seeded") {
    const auto t = triplets_of({{0, 0, 1}, {0, 0, 2}, {0, 0, 3}});
    CHECK(retrieval::random_baseline_scores(t, 4).probs == retrieval::random_baseline_scores(t, 4).probs);
    CHECK(retrieval::random_baseline_scores(t, 4).probs != retrieval::random_baseline_scores(t, 5).probs);
}
