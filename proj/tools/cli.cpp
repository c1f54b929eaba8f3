#include "cli.hpp"

#include "surge/config.hpp"
#include "surge/corpus.hpp"
#include "surge/error.hpp"
#include "surge/kg.hpp"
#include "surge/log.hpp"
#include "surge/metrics.hpp"
#include "surge/retriever.hpp"
#include "surge/synth.hpp"
#include "surge/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#ifndef SURGE_GIT_DESCRIBE
#define SURGE_GIT_DESCRIBE "unknown"
#endif

namespace surge::cli {

namespace fs = std::filesystem;

namespace {

struct DataBundle {
    Vocabulary vocab;
    kg::KnowledgeGraph graph;
    std::vector<data::Dialogue> dialogues;
    fs::path vocab_path;
    fs::path kg_path;
    fs::path corpus_path;
};

DataBundle load_data(const fs::path& dir, const std::string& kg_override = {}) {
    DataBundle b;
    b.vocab_path = dir / "vocab.txt";
    b.kg_path = kg_override.empty() ? dir / "kg.tsv" : fs::path(kg_override);
    b.corpus_path = dir / "dialogues.jsonl";
    for (const auto& p : {b.vocab_path, b.kg_path, b.corpus_path}) {
        if (!fs::exists(p)) {
            throw Error("missing input file " + p.string());
        }
    }
    b.vocab = Vocabulary::load_file(b.vocab_path);
    b.graph = kg::KnowledgeGraph::load_file(b.kg_path, b.vocab);
    b.dialogues = data::load_corpus_file(b.corpus_path);
    return b;
}

std::vector<data::Dialogue> split_dialogues(const std::vector<data::Dialogue>& all, const std::string& split) {
    if (split == "all") {
        return all;
    }
    return data::select_split(all, data::parse_split(split));
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    return out;
}

void add_inputs(RunManifest& m, const std::vector<fs::path>& paths) {
    for (const auto& p : paths) {
        m.inputs.emplace_back(p.string(), data::file_digest(p));
    }
}

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

RunManifest new_manifest(std::string command) {
    RunManifest m;
    m.command = std::move(command);
    m.git_describe = SURGE_GIT_DESCRIBE;
    return m;
}

struct LoadedRun {
    TrainConfig config;
    std::unique_ptr<train::SurgeModel> model;
};

LoadedRun load_run(const fs::path& run_dir, const DataBundle& data) {
    LoadedRun r;
    r.config = load_config_file(run_dir / "config.snapshot");
    r.model = std::make_unique<train::SurgeModel>(r.config, data.vocab.size(), data.graph.relations().size());
    nn::load_checkpoint(r.model->params(), run_dir / "checkpoint");
    return r;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::string out;
    synth::SynthConfig config;
};

int cmd_synth(const SynthArgs& a) {
    const fs::path dir(a.out);
    fs::create_directories(dir);
    RunManifest m = new_manifest("synth");
    m.args = {{"out", a.out},
              {"n_entities", std::to_string(a.config.n_entities)},
              {"n_relations", std::to_string(a.config.n_relations)},
              {"n_triplets", std::to_string(a.config.n_triplets)},
              {"n_dialogues", std::to_string(a.config.n_dialogues)},
              {"distractor_degree", std::to_string(a.config.distractor_degree)},
              {"dialogues_per_head", std::to_string(a.config.dialogues_per_head)}};
    m.seed = std::to_string(a.config.seed);
    for (const char* name : {"kg.tsv", "dialogues.jsonl", "vocab.txt"}) {
        m.outputs.push_back((dir / name).string());
    }
    a.config.validate();
    m.save(dir / "manifest.synth.txt");
    const auto output = synth::generate(a.config);
    synth::write_outputs(output, dir);
    std::cout << "wrote " << output.triplets.size() << " triplets and " << output.dialogues.size()
              << " dialogues to " << dir.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
};

int cmd_train(const TrainArgs& a) {
    const TrainConfig config = load_config_file(a.config);
    const DataBundle data = load_data(a.data);
    const fs::path dir(a.out);
    fs::create_directories(dir);
    RunManifest m = new_manifest("train");
    m.args = {{"config", a.config}, {"data", a.data}, {"out", a.out}};
    m.config = config_snapshot(config);
    m.seed = std::to_string(config.seed);
    add_inputs(m, {a.config, data.vocab_path, data.kg_path, data.corpus_path});
    m.outputs = {(dir / "config.snapshot").string(), (dir / "metrics.log").string(), (dir / "checkpoint").string()};
    m.save(dir / "manifest.train.txt");

    {
        auto snap = open_output(dir / "config.snapshot");
        snap << m.config;
    }
    train::SurgeModel model(config, data.vocab.size(), data.graph.relations().size());
    train::Dataset ds{data.graph, data.vocab, data::select_split(data.dialogues, data::Split::Train),
                      data::select_split(data.dialogues, data::Split::Valid)};
    auto metrics = open_output(dir / "metrics.log");
    const auto result = train::train(model, ds, &metrics);
    metrics << "best_epoch=" << result.best_epoch << " aborted=" << (result.aborted ? 1 : 0) << '\n';
    nn::save_checkpoint(model.params(), dir / "checkpoint");
    if (result.aborted) {
        std::cerr << "training diverged; kept the last good checkpoint\n";
        return 1;
    }
    std::cout << "trained " << result.epochs.size() << " epochs; best epoch " << result.best_epoch << '\n';
    return 0;
}

// ---------------------------------------------------------------- retrieve

struct RetrieveArgs {
    std::string run;
    std::string data;
    std::string split = "test";
    std::string method = "model";
    std::string out;
    std::uint64_t seed = 0;
};

int cmd_retrieve(const RetrieveArgs& a) {
    const DataBundle data = load_data(a.data);
    const fs::path out_path = a.out.empty() ? fs::path(a.run) / ("retrieve." + a.split + "." + a.method + ".tsv")
                                            : fs::path(a.out);
    if (a.method != "model" && a.method != "bm25" && a.method != "random") {
        throw Error("unknown retrieval method " + a.method + " (expected model, bm25 or random)");
    }
    LoadedRun run;
    TrainConfig config;
    if (a.method == "model") {
        run = load_run(a.run, data);
        config = run.config;
    } else if (!a.run.empty() && fs::exists(fs::path(a.run) / "config.snapshot")) {
        config = load_config_file(fs::path(a.run) / "config.snapshot");
    }
    RunManifest m = new_manifest("retrieve");
    m.args = {{"run", a.run}, {"data", a.data}, {"split", a.split}, {"method", a.method}, {"out", out_path.string()}};
    m.config = config_snapshot(config);
    m.seed = std::to_string(a.seed);
    add_inputs(m, {data.vocab_path, data.kg_path, data.corpus_path});
    if (run.model) {
        add_inputs(m, {fs::path(a.run) / "checkpoint" / "weights.bin"});
    }
    m.outputs = {out_path.string()};
    m.save(out_path.string() + ".manifest");

    auto out = open_output(out_path);
    const auto options = train::prepare_options(config);
    retrieval::RankingAccumulator ranking;
    for (const auto& d : split_dialogues(data.dialogues, a.split)) {
        const auto ex = data::prepare(d, data.graph, data.vocab, options);
        retrieval::CandidateSet dist;
        if (a.method == "model") {
            nn::NoGradGuard guard;
            dist = train::score_candidates(*run.model, ex);
        } else if (a.method == "bm25") {
            dist = retrieval::bm25_baseline_scores(ex.history, ex.candidates, data.graph);
            dist.gold = ex.gold;
        } else {
            dist = retrieval::random_baseline_scores(ex.candidates, train::mix_seed(a.seed, data::fnv1a(d.id)));
            dist.gold = ex.gold;
        }
        out << "# " << d.id << '\n';
        if (dist.size() == 0) {
            continue;
        }
        ranking.add(dist);
        const auto order = retrieval::ranking(dist);
        for (std::size_t r = 0; r < order.size(); ++r) {
            const auto& t = dist.triplets[order[r]];
            char prob[32];
            std::snprintf(prob, sizeof(prob), "%.6f", dist.probs[order[r]]);
            out << r + 1 << '\t' << prob << '\t' << data.graph.entity(t.head).surface << '\t'
                << data.graph.relation(t.relation).surface << '\t' << data.graph.entity(t.tail).surface << '\n';
        }
    }
    const auto metrics = ranking.result();
    std::cout << "mrr\t" << fixed(metrics.mrr) << "\nhits@1\t" << fixed(metrics.hits1) << "\nevaluated\t"
              << metrics.evaluated << '\n';
    return 0;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
    std::string run;
    std::string data;
    std::string split = "test";
    std::string out;
};

int cmd_generate(const GenerateArgs& a) {
    const DataBundle data = load_data(a.data);
    LoadedRun run = load_run(a.run, data);
    const fs::path out_path = a.out.empty() ? fs::path(a.run) / (a.split + ".out") : fs::path(a.out);
    const fs::path knowledge_path = out_path.string() + ".knowledge";
    RunManifest m = new_manifest("generate");
    m.args = {{"run", a.run}, {"data", a.data}, {"split", a.split}, {"out", out_path.string()}};
    m.config = config_snapshot(run.config);
    m.seed = std::to_string(run.config.seed);
    add_inputs(m, {data.vocab_path, data.kg_path, data.corpus_path, fs::path(a.run) / "checkpoint" / "weights.bin"});
    m.outputs = {out_path.string(), knowledge_path.string()};
    m.save(out_path.string() + ".manifest");

    auto out = open_output(out_path);
    auto knowledge = open_output(knowledge_path);
    const auto options = train::prepare_options(run.config);
    for (const auto& d : split_dialogues(data.dialogues, a.split)) {
        const auto ex = data::prepare(d, data.graph, data.vocab, options);
        const auto inf = train::infer(*run.model, data.graph, ex);
        out << d.id << '\t' << data.vocab.decode(inf.response) << '\n';
        knowledge << d.id << '\t' << data::knowledge_text(inf.subgraph, data.graph) << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string responses;
    std::string data;
    std::string kg;
    std::string knowledge;
    std::string ranking;
    std::string out;
    std::string manifest;
};

std::vector<std::pair<std::string, std::string>> read_id_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            out.emplace_back(line, "");
        } else {
            out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
        }
    }
    return out;
}

/// Ranked triplet surfaces per dialogue from a `retrieve` output file.
std::map<std::string, std::vector<data::SurfaceTriple>> read_ranking(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::map<std::string, std::vector<data::SurfaceTriple>> out;
    std::string line;
    std::string current;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.rfind("# ", 0) == 0) {
            current = line.substr(2);
            out[current];
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, '\t')) {
            fields.push_back(f);
        }
        if (fields.size() != 5 || current.empty()) {
            throw ParseError("expected rank, prob, head, relation, tail", line_no);
        }
        out[current].push_back({fields[2], fields[3], fields[4]});
    }
    return out;
}

int cmd_eval(EvalArgs a) {
    if (!a.manifest.empty()) {
        const RunManifest prior = RunManifest::load(a.manifest);
        if (prior.command != "eval") {
            throw Error("manifest " + a.manifest + " does not describe an eval run");
        }
        for (const auto& [path, digest] : prior.inputs) {
            if (data::file_digest(path) != digest) {
                throw Error("input " + path + " changed since the manifest was written");
            }
        }
        const auto get = [&prior](const char* key) {
            auto it = prior.args.find(key);
            return it == prior.args.end() ? std::string() : it->second;
        };
        a.responses = get("responses");
        a.data = get("data");
        a.kg = get("kg");
        a.knowledge = get("knowledge");
        a.ranking = get("ranking");
        a.out = get("out");
        a.manifest.clear();
    }
    if (a.responses.empty() || a.data.empty()) {
        throw Error("eval needs --responses and --data (or --manifest)");
    }
    const DataBundle data = load_data(a.data, a.kg);
    if (a.knowledge.empty() && fs::exists(a.responses + ".knowledge")) {
        a.knowledge = a.responses + ".knowledge";
    }
    const fs::path out_path = a.out.empty() ? fs::path(a.responses + ".report") : fs::path(a.out);
    RunManifest m = new_manifest("eval");
    m.args = {{"responses", a.responses}, {"data", a.data},         {"kg", data.kg_path.string()},
              {"knowledge", a.knowledge}, {"ranking", a.ranking}, {"out", out_path.string()}};
    m.seed = "0";
    std::vector<fs::path> inputs = {a.responses, data.vocab_path, data.kg_path, data.corpus_path};
    if (!a.knowledge.empty()) inputs.emplace_back(a.knowledge);
    if (!a.ranking.empty()) inputs.emplace_back(a.ranking);
    add_inputs(m, inputs);
    m.outputs = {out_path.string()};
    m.save(out_path.string() + ".manifest");

    std::map<std::string, const data::Dialogue*> by_id;
    for (const auto& d : data.dialogues) {
        by_id[d.id] = &d;
    }
    std::map<std::string, std::string> responses;
    std::vector<data::Dialogue> evaluated;
    std::vector<std::string> generated;
    std::vector<std::string> references;
    for (const auto& [id, text] : read_id_lines(a.responses)) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) {
            throw Error("response for unknown dialogue id " + id);
        }
        if (!responses.emplace(id, text).second) {
            throw Error("duplicate response for dialogue id " + id);
        }
        evaluated.push_back(*it->second);
        generated.push_back(text);
        references.push_back(it->second->response);
    }

    eval::MetricReport report;
    report.examples = evaluated.size();
    report.kqa = eval::kqa_scores(eval::synthesize_kqa(evaluated, data.graph, data.vocab), responses);
    report.surface = eval::surface_metrics(generated, references);

    // Knowledge F1 against the conditioned knowledge if recorded, else the gold facts.
    std::map<std::string, std::string> knowledge;
    if (!a.knowledge.empty()) {
        for (const auto& [id, text] : read_id_lines(a.knowledge)) {
            knowledge[id] = text;
        }
    }
    double kf1 = 0.0;
    for (const auto& d : evaluated) {
        std::string text;
        if (auto it = knowledge.find(d.id); it != knowledge.end()) {
            text = it->second;
        } else {
            for (const auto& t : d.gold_triplets) {
                text += (text.empty() ? "" : " ") + t[0] + " " + t[1] + " " + t[2];
            }
        }
        kf1 += eval::knowledge_f1(responses[d.id], text);
    }
    report.knowledge_f1 = evaluated.empty() ? 0.0 : kf1 / static_cast<double>(evaluated.size());

    if (!a.ranking.empty()) {
        const auto ranked = read_ranking(a.ranking);
        retrieval::RankingAccumulator acc;
        for (const auto& d : evaluated) {
            const auto it = ranked.find(d.id);
            if (it == ranked.end()) {
                continue;
            }
            const std::set<data::SurfaceTriple> gold(d.gold_triplets.begin(), d.gold_triplets.end());
            std::vector<double> scores;
            std::vector<bool> flags;
            const std::size_t n = it->second.size();
            for (std::size_t r = 0; r < n; ++r) {
                scores.push_back(static_cast<double>(n - r));
                flags.push_back(gold.contains(it->second[r]));
            }
            acc.add(scores, flags);
        }
        report.retrieval = acc.result();
    }

    auto out = open_output(out_path);
    out << eval::format_report(report);
    std::cout << eval::format_report(report);
    return 0;
}

// ---------------------------------------------------------------- kqa

struct KqaArgs {
    std::string data;
    std::string split = "all";
    std::string out;
    bool augment = false;
    std::uint64_t seed = 0;
};

int cmd_kqa(const KqaArgs& a) {
    const DataBundle data = load_data(a.data);
    const fs::path out_path = a.out.empty() ? fs::path(a.data) / ("kqa." + a.split + ".jsonl") : fs::path(a.out);
    RunManifest m = new_manifest("kqa");
    m.args = {{"data", a.data}, {"split", a.split}, {"out", out_path.string()}, {"augment", a.augment ? "1" : "0"}};
    m.seed = std::to_string(a.seed);
    add_inputs(m, {data.vocab_path, data.kg_path, data.corpus_path});
    m.outputs = {out_path.string()};
    const fs::path augmented_path = out_path.string() + ".augmented";
    if (a.augment) {
        m.outputs.push_back(augmented_path.string());
    }
    m.save(out_path.string() + ".manifest");

    const auto dialogues = split_dialogues(data.dialogues, a.split);
    const auto items = eval::synthesize_kqa(dialogues, data.graph, data.vocab);
    {
        auto out = open_output(out_path);
        eval::save_kqa(out, items);
    }
    std::cout << "items\t" << items.size() << '\n';
    if (a.augment) {
        const auto augmented = eval::augment_kqa(items, dialogues, data.graph, a.seed);
        auto out = open_output(augmented_path);
        std::size_t correct = 0;
        for (const auto& aug : augmented) {
            nlohmann::json j;
            j["dialogue_id"] = aug.item.dialogue_id;
            j["head"] = aug.item.head;
            j["relation"] = aug.item.relation;
            j["candidates"] = aug.item.candidates;
            j["gold"] = aug.item.gold;
            j["response"] = aug.response;
            out << j.dump() << '\n';
            const auto answer = eval::extractive_answer(aug.item, aug.response);
            correct += answer && *answer == aug.item.gold ? 1 : 0;
        }
        const double acc = augmented.empty() ? 0.0 : 100.0 * static_cast<double>(correct) /
                                                         static_cast<double>(augmented.size());
        std::cout << "augmented_items\t" << augmented.size() << "\nanswerer_accuracy\t" << fixed(acc) << '\n';
    }
    return 0;
}

}  // namespace

void RunManifest::save(const fs::path& path) const {
    auto out = open_output(path);
    out << "command\t" << command << '\n';
    out << "git_describe\t" << git_describe << '\n';
    out << "seed\t" << seed << '\n';
    for (const auto& [k, v] : args) {
        out << "arg\t" << k << '\t' << v << '\n';
    }
    std::istringstream cfg(config);
    for (std::string line; std::getline(cfg, line);) {
        out << "config\t" << line << '\n';
    }
    for (const auto& [p, d] : inputs) {
        out << "input\t" << p << '\t' << d << '\n';
    }
    for (const auto& p : outputs) {
        out << "output\t" << p << '\n';
    }
}

RunManifest RunManifest::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open manifest " + path.string());
    }
    RunManifest m;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string part; std::getline(ss, part, '\t');) {
            f.push_back(part);
        }
        if (line.empty()) {
            continue;
        }
        const std::string& kind = f[0];
        const auto field = [&f](std::size_t i) { return i < f.size() ? f[i] : std::string(); };
        if (kind == "command") {
            m.command = field(1);
        } else if (kind == "git_describe") {
            m.git_describe = field(1);
        } else if (kind == "seed") {
            m.seed = field(1);
        } else if (kind == "arg") {
            m.args[field(1)] = field(2);
        } else if (kind == "config") {
            m.config += field(1) + "\n";
        } else if (kind == "input") {
            m.inputs.emplace_back(field(1), field(2));
        } else if (kind == "output") {
            m.outputs.push_back(field(1));
        } else {
            throw ParseError("unknown manifest record '" + kind + "'", line_no);
        }
    }
    return m;
}

int run(const std::vector<std::string>& args) {
    CLI::App app{"Subgraph-retrieval-augmented dialogue generation toolkit", "surge"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Suppress warnings");

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic knowledge graph and dialogue corpus");
    synth_cmd->add_option("--out", synth_args.out, "Output directory")->required();
    synth_cmd->add_option("--seed", synth_args.config.seed, "Random seed");
    synth_cmd->add_option("--n-entities", synth_args.config.n_entities);
    synth_cmd->add_option("--n-relations", synth_args.config.n_relations);
    synth_cmd->add_option("--n-triplets", synth_args.config.n_triplets);
    synth_cmd->add_option("--n-dialogues", synth_args.config.n_dialogues);
    synth_cmd->add_option("--distractor-degree", synth_args.config.distractor_degree);
    synth_cmd->add_option("--dialogues-per-head", synth_args.config.dialogues_per_head);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train retriever and generator");
    train_cmd->add_option("--config", train_args.config, "key = value config file")->required();
    train_cmd->add_option("--data", train_args.data, "Directory with kg.tsv, dialogues.jsonl, vocab.txt")->required();
    train_cmd->add_option("--out", train_args.out, "Run directory")->required();

    RetrieveArgs retrieve_args;
    auto* retrieve_cmd = app.add_subcommand("retrieve", "Rank candidate triplets per dialogue");
    retrieve_cmd->add_option("--run", retrieve_args.run, "Run directory");
    retrieve_cmd->add_option("--data", retrieve_args.data)->required();
    retrieve_cmd->add_option("--split", retrieve_args.split, "train, valid, test or all");
    retrieve_cmd->add_option("--method", retrieve_args.method, "model, bm25 or random");
    retrieve_cmd->add_option("--seed", retrieve_args.seed, "Seed for the random baseline");
    retrieve_cmd->add_option("--out", retrieve_args.out);

    GenerateArgs generate_args;
    auto* generate_cmd = app.add_subcommand("generate", "Greedy responses conditioned on the top-n subgraph");
    generate_cmd->add_option("--run", generate_args.run)->required();
    generate_cmd->add_option("--data", generate_args.data)->required();
    generate_cmd->add_option("--split", generate_args.split, "train, valid, test or all");
    generate_cmd->add_option("--out", generate_args.out);

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Score responses against a corpus");
    eval_cmd->add_option("--responses", eval_args.responses, "id<TAB>response lines");
    eval_cmd->add_option("--data", eval_args.data);
    eval_cmd->add_option("--kg", eval_args.kg, "Knowledge graph (default: <data>/kg.tsv)");
    eval_cmd->add_option("--knowledge", eval_args.knowledge, "id<TAB>knowledge text lines");
    eval_cmd->add_option("--ranking", eval_args.ranking, "Output of the retrieve command");
    eval_cmd->add_option("--out", eval_args.out, "Report path (default: <responses>.report)");
    eval_cmd->add_option("--manifest", eval_args.manifest, "Re-run the eval recorded in this manifest");

    KqaArgs kqa_args;
    auto* kqa_cmd = app.add_subcommand("kqa", "Synthesize knowledge-verifying QA items");
    kqa_cmd->add_option("--data", kqa_args.data)->required();
    kqa_cmd->add_option("--split", kqa_args.split, "train, valid, test or all");
    kqa_cmd->add_option("--out", kqa_args.out);
    kqa_cmd->add_flag("--augment", kqa_args.augment, "Also write tail-swapped items and score the answerer on them");
    kqa_cmd->add_option("--seed", kqa_args.seed);

    std::vector<std::string> argv_storage = {"surge"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_storage) {
        argv.push_back(s.data());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }
    if (quiet) {
        log::set_level(log::Level::Quiet);
    }
    try {
        if (*synth_cmd) return cmd_synth(synth_args);
        if (*train_cmd) return cmd_train(train_args);
        if (*retrieve_cmd) return cmd_retrieve(retrieve_args);
        if (*generate_cmd) return cmd_generate(generate_args);
        if (*eval_cmd) return cmd_eval(eval_args);
        if (*kqa_cmd) return cmd_kqa(kqa_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    std::cerr << app.help();
    return 2;
}

}  // namespace surge::cli
