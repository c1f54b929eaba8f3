#include "surge/corpus.hpp"

#include "surge/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

namespace surge::data {

using nlohmann::json;

std::vector<Dialogue> load_corpus(std::istream& in) {
    std::vector<Dialogue> out;
    std::string line;
    std::size_t line_no = 0;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const json j = json::parse(line);
            Dialogue d;
            d.id = j.at("id").get<std::string>();
            d.history = j.at("history").get<std::vector<std::string>>();
            d.response = j.at("response").get<std::string>();
            if (j.contains("gold_triplets")) {
                for (const auto& t : j.at("gold_triplets")) {
                    if (!t.is_array() || t.size() != 3) {
                        throw ParseError("gold triplet must have three fields", line_no);
                    }
                    d.gold_triplets.push_back({t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>()});
                }
            }
            if (d.id.empty()) {
                throw ParseError("empty dialogue id", line_no);
            }
            if (!ids.insert(d.id).second) {
                throw ParseError("duplicate dialogue id " + d.id, line_no);
            }
            out.push_back(std::move(d));
        } catch (const json::exception& e) {
            throw ParseError(std::string("invalid dialogue record: ") + e.what(), line_no);
        }
    }
    return out;
}

std::vector<Dialogue> load_corpus_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open corpus " + path.string());
    }
    return load_corpus(in);
}

void save_corpus(std::ostream& out, const std::vector<Dialogue>& dialogues) {
    for (const auto& d : dialogues) {
        json j;
        j["id"] = d.id;
        j["history"] = d.history;
        j["response"] = d.response;
        json gold = json::array();
        for (const auto& t : d.gold_triplets) {
            gold.push_back({t[0], t[1], t[2]});
        }
        j["gold_triplets"] = gold;
        out << j.dump() << '\n';
    }
}

std::string to_string(Split s) {
    switch (s) {
        case Split::Train:
            return "train";
        case Split::Valid:
            return "valid";
        case Split::Test:
            return "test";
    }
    return "unknown";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "valid") return Split::Valid;
    if (name == "test") return Split::Test;
    throw Error("unknown split: " + std::string(name));
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex_digest(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return hex_digest(fnv1a(bytes));
}

Split split_of(std::string_view id) {
    const auto bucket = fnv1a(id) % 100;
    if (bucket < 70) return Split::Train;
    if (bucket < 85) return Split::Valid;
    return Split::Test;
}

std::vector<Dialogue> select_split(const std::vector<Dialogue>& all, Split split) {
    std::vector<Dialogue> out;
    std::copy_if(all.begin(), all.end(), std::back_inserter(out),
                 [split](const Dialogue& d) { return split_of(d.id) == split; });
    return out;
}

std::string history_text(const Dialogue& d) {
    std::string out;
    for (const auto& u : d.history) {
        if (!out.empty()) {
            out += ' ';
        }
        out += u;
    }
    return out;
}

PreparedExample prepare(const Dialogue& d, const kg::KnowledgeGraph& graph, const Vocabulary& vocab,
                        const PrepareOptions& options) {
    PreparedExample ex;
    ex.id = d.id;
    std::vector<TokenId> hist = vocab.encode(history_text(d));
    if (hist.size() > options.max_hist_len) {
        hist.erase(hist.begin(), hist.end() - static_cast<std::ptrdiff_t>(options.max_hist_len));
    }
    ex.history = std::move(hist);
    ex.response = vocab.encode(d.response);
    ex.mentions = graph.link_entities(ex.history);
    std::vector<kg::EntityId> seeds;
    for (const auto& m : ex.mentions) {
        if (std::find(seeds.begin(), seeds.end(), m.entity) == seeds.end()) {
            seeds.push_back(m.entity);
        }
    }
    ex.candidates = graph.khop_candidates(seeds, options.khop, options.max_candidates);
    ex.gold.assign(ex.candidates.size(), false);
    for (const auto& g : d.gold_triplets) {
        auto t = graph.find_triplet(g[0], g[1], g[2]);
        if (!t) {
            ++ex.gold_missing;
            continue;
        }
        ex.gold_triplets.push_back(*t);
        auto it = std::lower_bound(ex.candidates.begin(), ex.candidates.end(), *t);
        if (it != ex.candidates.end() && *it == *t) {
            ex.gold[static_cast<std::size_t>(it - ex.candidates.begin())] = true;
        } else {
            ++ex.gold_missing;
        }
    }
    return ex;
}

std::string knowledge_text(const std::vector<kg::Triplet>& z, const kg::KnowledgeGraph& graph) {
    std::string out;
    for (const auto& t : z) {
        for (const std::string* part : {&graph.entity(t.head).surface, &graph.relation(t.relation).surface,
                                        &graph.entity(t.tail).surface}) {
            if (!out.empty()) {
                out += ' ';
            }
            out += *part;
        }
    }
    return out;
}

}  // namespace surge::data
