#include "surge/graph_encoding.hpp"

#include "surge/error.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>
#include <tuple>

namespace surge::encoding {

namespace {

struct PrefixUnit {
    std::vector<TokenId> tokens;
    std::optional<kg::EntityId> entity;
};

std::vector<PrefixUnit> triplet_units(const std::vector<kg::Triplet>& z, const kg::KnowledgeGraph& graph) {
    std::vector<PrefixUnit> units;
    for (const auto& t : z) {
        PrefixUnit u;
        for (const auto* part : {&graph.entity(t.head).tokens, &graph.relation(t.relation).tokens,
                                 &graph.entity(t.tail).tokens}) {
            u.tokens.insert(u.tokens.end(), part->begin(), part->end());
        }
        units.push_back(std::move(u));
    }
    return units;
}

std::vector<PrefixUnit> entity_units(const std::vector<kg::Triplet>& z, const kg::KnowledgeGraph& graph) {
    std::vector<PrefixUnit> units;
    for (kg::EntityId e : ent(z, graph)) {
        units.push_back(PrefixUnit{graph.entity(e).tokens, e});
    }
    return units;
}

std::vector<PrefixUnit> build_units(EncodingVariant variant, const std::vector<kg::Triplet>& z,
                                    const kg::KnowledgeGraph& graph, std::size_t max_know_len) {
    std::vector<PrefixUnit> units;
    switch (variant) {
        case EncodingVariant::Naive:
            units = triplet_units(z, graph);
            break;
        case EncodingVariant::InvariantFull:
            units = triplet_units(inv_closure(z, graph), graph);
            break;
        case EncodingVariant::EntityOnly:
        case EncodingVariant::InvariantEfficient:
            units = entity_units(z, graph);
            break;
    }
    std::size_t total = 0;
    std::size_t keep = 0;
    while (keep < units.size() && total + units[keep].tokens.size() <= max_know_len) {
        total += units[keep].tokens.size();
        ++keep;
    }
    units.resize(keep);
    return units;
}

}  // namespace

std::string to_string(EncodingVariant v) {
    switch (v) {
        case EncodingVariant::Naive:
            return "naive";
        case EncodingVariant::InvariantFull:
            return "invariant_full";
        case EncodingVariant::EntityOnly:
            return "entity_only";
        case EncodingVariant::InvariantEfficient:
            return "invariant_efficient";
    }
    return "unknown";
}

EncodingVariant parse_variant(std::string_view name) {
    for (auto v : {EncodingVariant::Naive, EncodingVariant::InvariantFull, EncodingVariant::EntityOnly,
                   EncodingVariant::InvariantEfficient}) {
        if (to_string(v) == name) {
            return v;
        }
    }
    throw Error("unknown encoding variant: " + std::string(name));
}

std::vector<kg::Triplet> sort_triplets(std::vector<kg::Triplet> z, const kg::KnowledgeGraph& graph) {
    std::sort(z.begin(), z.end(), [&graph](const kg::Triplet& a, const kg::Triplet& b) {
        const auto key = [&graph](const kg::Triplet& t) {
            return std::tie(graph.entity(t.head).surface, graph.relation(t.relation).surface,
                            graph.entity(t.tail).surface);
        };
        const auto ka = key(a);
        const auto kb = key(b);
        if (ka != kb) {
            return ka < kb;
        }
        return a < b;
    });
    return z;
}

std::vector<kg::Triplet> inv_closure(const std::vector<kg::Triplet>& z, const kg::KnowledgeGraph& graph) {
    std::set<kg::Triplet> closed(z.begin(), z.end());
    for (const auto& t : z) {
        closed.insert(graph.invert(t));
    }
    return sort_triplets(std::vector<kg::Triplet>(closed.begin(), closed.end()), graph);
}

std::vector<kg::EntityId> ent(const std::vector<kg::Triplet>& z, const kg::KnowledgeGraph& graph) {
    std::set<kg::EntityId> unique;
    for (const auto& t : z) {
        unique.insert(t.head);
        unique.insert(t.tail);
    }
    std::vector<kg::EntityId> out(unique.begin(), unique.end());
    std::sort(out.begin(), out.end(), [&graph](kg::EntityId a, kg::EntityId b) {
        const auto& sa = graph.entity(a).surface;
        const auto& sb = graph.entity(b).surface;
        return sa != sb ? sa < sb : a < b;
    });
    return out;
}

std::vector<TokenId> prefix_tokens(EncodingVariant variant, const std::vector<kg::Triplet>& z,
                                   const kg::KnowledgeGraph& graph, std::size_t max_know_len) {
    std::vector<TokenId> out;
    for (const auto& u : build_units(variant, z, graph, max_know_len)) {
        out.insert(out.end(), u.tokens.begin(), u.tokens.end());
    }
    return out;
}

GraphEncoder::GraphEncoder(std::size_t d_model, std::size_t num_relations, nn::ParamStore& store, nn::Rng& rng,
                           const std::string& prefix)
    : relation_table_(store.create(prefix + ".rel_emb", num_relations, gnn::kRelationWidth, nn::Init::Normal, rng)),
      rgnn_(store, prefix + ".rgnn", d_model, gnn::kRelationWidth, rng),
      gamma_mlp_(store, prefix + ".gamma_mlp", d_model, d_model, d_model, rng, nn::Init::Zeros),
      delta_mlp_(store, prefix + ".delta_mlp", d_model, d_model, d_model, rng, nn::Init::Zeros) {}

PerturbationOutput GraphEncoder::perturb(const Tensor& entity_rows, const std::vector<kg::EntityId>& entities,
                                         const std::vector<kg::Triplet>& z_closed) const {
    if (entity_rows.rows() != entities.size()) {
        throw Error("perturb: one row per entity required");
    }
    gnn::NodeEmbeddings nodes{entities, entity_rows, std::vector<bool>(entities.size(), true)};
    PerturbationOutput out;
    out.entities = entities;
    out.eta = rgnn_.forward(entity_rows, relation_table_, gnn::localize(z_closed, nodes));
    out.gamma = gamma_mlp_(out.eta);
    out.delta = delta_mlp_(out.eta);
    out.perturbed = nn::add(nn::add(entity_rows, nn::mul(out.gamma, entity_rows)), out.delta);
    return out;
}

EncodedInput GraphEncoder::encode(EncodingVariant variant, std::span<const TokenId> history,
                                  const std::vector<kg::Triplet>& z, const kg::KnowledgeGraph& graph,
                                  const seq::Seq2Seq& model, const EncodingLimits& limits) const {
    EncodedInput out;
    const auto units = build_units(variant, z, graph, limits.max_know_len);
    for (const auto& u : units) {
        if (u.entity) {
            out.entity_spans.push_back(EntitySpan{*u.entity, out.tokens.size(), u.tokens.size()});
        }
        out.tokens.insert(out.tokens.end(), u.tokens.begin(), u.tokens.end());
    }
    out.prefix_len = out.tokens.size();
    const std::size_t max_positions = model.config().max_positions;
    if (out.prefix_len > max_positions) {
        throw Error("encoded knowledge prefix exceeds max_positions");
    }
    // Keep the most recent history tokens.
    const std::size_t hist_budget = std::min(limits.max_hist_len, max_positions - out.prefix_len);
    const std::size_t hist_len = std::min(hist_budget, history.size());
    const auto recent = history.last(hist_len);
    out.tokens.insert(out.tokens.end(), recent.begin(), recent.end());
    if (out.tokens.empty()) {
        throw Error("encode: empty input (no knowledge and no history)");
    }

    Tensor rows = model.token_embeddings(out.tokens);
    if (variant == EncodingVariant::InvariantEfficient && !out.entity_spans.empty()) {
        std::vector<kg::EntityId> entities;
        std::vector<Tensor> entity_means;
        std::vector<std::size_t> row_owner;
        for (std::size_t i = 0; i < out.entity_spans.size(); ++i) {
            const auto& span = out.entity_spans[i];
            entities.push_back(span.entity);
            entity_means.push_back(nn::mean_rows(nn::slice_rows(rows, span.begin, span.length)));
            row_owner.insert(row_owner.end(), span.length, i);
        }
        // Edges touching an entity dropped by the knowledge cap are ignored.
        std::vector<kg::Triplet> closed;
        for (const auto& t : inv_closure(z, graph)) {
            const bool kept = std::find(entities.begin(), entities.end(), t.head) != entities.end() &&
                              std::find(entities.begin(), entities.end(), t.tail) != entities.end();
            if (kept) {
                closed.push_back(t);
            }
        }
        PerturbationOutput p = perturb(nn::concat_rows(entity_means), entities, closed);
        Tensor prefix = nn::slice_rows(rows, 0, out.prefix_len);
        Tensor gamma_rows = nn::gather_rows(p.gamma, row_owner);
        Tensor delta_rows = nn::gather_rows(p.delta, row_owner);
        Tensor perturbed = nn::add(nn::add(prefix, nn::mul(gamma_rows, prefix)), delta_rows);
        const std::size_t rest = out.tokens.size() - out.prefix_len;
        rows = rest == 0 ? perturbed : nn::concat_rows({perturbed, nn::slice_rows(rows, out.prefix_len, rest)});
        out.perturbation = std::move(p);
    }
    out.embeddings = model.add_positions(rows);
    return out;
}

std::string debug_dump(const EncodedInput& input, const kg::KnowledgeGraph& graph, const Vocabulary& vocab) {
    std::ostringstream os;
    os << "prefix_len\t" << input.prefix_len << '\n';
    os << "prefix";
    for (std::size_t i = 0; i < input.prefix_len; ++i) {
        os << '\t' << vocab.token(input.tokens[i]);
    }
    os << '\n';
    if (input.perturbation) {
        const auto& p = *input.perturbation;
        os << std::setprecision(6);
        for (std::size_t i = 0; i < p.entities.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            os << "entity\t" << graph.entity(p.entities[i]).surface << "\tgamma_norm=" << p.gamma.value().row(r).norm()
               << "\tdelta_norm=" << p.delta.value().row(r).norm() << '\n';
        }
    }
    return os.str();
}

}  // namespace surge::encoding
