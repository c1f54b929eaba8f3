#include "fixtures.hpp"

#include "cli.hpp"
#include "surge/error.hpp"
#include "surge/metrics.hpp"
#include "surge/trainer.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace surge;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("surge_unit_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

struct CandidateStats {
    std::size_t dialogues = 0;
    std::size_t candidates = 0;
    std::size_t gold_found = 0;
    std::size_t min_size = SIZE_MAX;
    std::size_t max_size = 0;
};

CandidateStats candidate_stats(const fixtures::SynthWorld& w) {
    CandidateStats s;
    data::PrepareOptions options;
    for (const auto& d : w.dialogues) {
        const auto ex = data::prepare(d, w.graph, w.vocab, options);
        ++s.dialogues;
        s.candidates += ex.candidates.size();
        s.gold_found += static_cast<std::size_t>(std::count(ex.gold.begin(), ex.gold.end(), true));
        s.min_size = std::min(s.min_size, ex.candidates.size());
        s.max_size = std::max(s.max_size, ex.candidates.size());
    }
    return s;
}

}  // namespace

TEST_CASE("synthetic gold facts lie in the one-hop candidates") {
    const auto w = fixtures::synth_world(fixtures::small_synth());
    const auto s = candidate_stats(w);
    CHECK(s.gold_found == w.dialogues.size());
    CHECK(s.min_size == 4);
    CHECK(s.max_size == 4);
    for (const auto& d : w.dialogues) {
        REQUIRE(d.gold_triplets.size() == 1);
        CHECK(d.response.find(d.gold_triplets[0][2]) != std::string::npos);
        CHECK(data::history_text(d).find(d.gold_triplets[0][0]) != std::string::npos);
        const auto tokens = w.vocab.encode(d.response);
        CHECK(std::find(tokens.begin(), tokens.end(), kUnk) == tokens.end());
    }
}

TEST_CASE("distractor degree sets the candidate count") {
    auto config = fixtures::small_synth();
    config.distractor_degree = 0;
    const auto s0 = candidate_stats(fixtures::synth_world(config));
    CHECK(s0.min_size == 1);
    CHECK(s0.max_size == 1);
    CHECK(s0.gold_found == s0.dialogues);

    const auto s7 = candidate_stats(fixtures::synth_world(synth::SynthConfig{}));
    CHECK(s7.dialogues == 500);
    CHECK(s7.min_size == 8);
    CHECK(s7.max_size == 8);
    CHECK(static_cast<double>(s7.gold_found) / static_cast<double>(s7.candidates) == 0.125);
}

TEST_CASE("dialogues per head controls head sharing") {
    for (std::size_t per : {1, 2, 4}) {
        auto config = fixtures::small_synth();
        config.n_triplets = 200;
        config.dialogues_per_head = per;
        const auto out = synth::generate(config);
        std::set<std::string> heads;
        std::set<data::SurfaceTriple> facts;
        for (const auto& d : out.dialogues) {
            heads.insert(d.gold_triplets[0][0]);
            facts.insert(d.gold_triplets[0]);
        }
        CHECK(heads.size() == (config.n_dialogues + per - 1) / per);
        CHECK(facts.size() == out.dialogues.size());
    }
    auto capped = fixtures::small_synth();
    capped.dialogues_per_head = 50;
    std::set<std::string> heads;
    for (const auto& d : synth::generate(capped).dialogues) heads.insert(d.gold_triplets[0][0]);
    CHECK(heads.size() == 8);
}

TEST_CASE("question cues never contain relation words") {
    for (const auto& t : synth::default_templates()) {
        const auto rel = eval::normalize_tokens(t.surface);
        for (const auto& cue : t.cues) {
            for (const auto& w : eval::normalize_tokens(cue)) {
                CHECK_MESSAGE(std::find(rel.begin(), rel.end(), w) == rel.end(), cue);
            }
        }
    }
}

TEST_CASE("synthetic outputs are byte-identical for a seed") {
    const auto a = scratch("synth_a");
    const auto b = scratch("synth_b");
    const auto c = scratch("synth_c");
    synth::write_outputs(synth::generate(fixtures::small_synth(7)), a);
    synth::write_outputs(synth::generate(fixtures::small_synth(7)), b);
    synth::write_outputs(synth::generate(fixtures::small_synth(8)), c);
    for (const char* name : {"kg.tsv", "dialogues.jsonl", "vocab.txt"}) {
        CHECK(slurp(a / name) == slurp(b / name));
        CHECK_FALSE(slurp(a / name).empty());
    }
    CHECK(slurp(a / "kg.tsv") != slurp(c / "kg.tsv"));
}

TEST_CASE("unsatisfiable synthetic configs are rejected") {
    auto config = fixtures::small_synth();
    config.n_entities = 10;
    CHECK_THROWS_AS(config.validate(), Error);
    config = fixtures::small_synth();
    config.n_triplets = 10;
    CHECK_THROWS_AS(config.validate(), Error);
    config = fixtures::small_synth();
    config.distractor_degree = 6;
    CHECK_THROWS_AS(config.validate(), Error);
    config = fixtures::small_synth();
    config.dialogues_per_head = 0;
    CHECK_THROWS_AS(config.validate(), Error);
}

TEST_CASE("split assignment is roughly 70/15/15") {
    const auto out = synth::generate(synth::SynthConfig{});
    const double n = static_cast<double>(out.dialogues.size());
    CHECK(static_cast<double>(data::select_split(out.dialogues, data::Split::Train).size()) / n ==
          doctest::Approx(0.70).epsilon(0.1));
    CHECK(static_cast<double>(data::select_split(out.dialogues, data::Split::Valid).size()) / n ==
          doctest::Approx(0.15).epsilon(0.35));
    CHECK(static_cast<double>(data::select_split(out.dialogues, data::Split::Test).size()) / n ==
          doctest::Approx(0.15).epsilon(0.35));
}

TEST_CASE("config parsing rejects bad input and round-trips snapshots") {
    const auto config = fixtures::tiny_config(TrainMode::SemiSupervised);
    std::istringstream snap(config_snapshot(config));
    CHECK(config_snapshot(parse_config(snap)) == config_snapshot(config));

    std::istringstream unknown(config_snapshot(config) + "bogus = 1\n");
    CHECK_THROWS_AS((void)parse_config(unknown), ParseError);
    std::istringstream malformed(config_snapshot(config) + "lr 0.1\n");
    CHECK_THROWS_AS((void)parse_config(malformed), ParseError);
    std::istringstream missing("lr = 0.1\n");
    CHECK_THROWS_AS((void)parse_config(missing), Error);
}

TEST_CASE("run manifests round-trip") {
    cli::RunManifest m;
    m.command = "eval";
    m.args = {{"data", "d/"}, {"out", "r.report"}};
    m.config = "lr = 0.001\nseed = 3\n";
    m.seed = "3";
    m.git_describe = "abc123";
    m.inputs = {{"d/kg.tsv", "0123456789abcdef"}};
    m.outputs = {"r.report"};
    const auto dir = scratch("manifest");
    m.save(dir / "m.txt");
    const auto back = cli::RunManifest::load(dir / "m.txt");
    CHECK(back.command == m.command);
    CHECK(back.args == m.args);
    CHECK(back.config == m.config);
    CHECK(back.seed == m.seed);
    CHECK(back.git_describe == m.git_describe);
    CHECK(back.inputs == m.inputs);
    CHECK(back.outputs == m.outputs);
}

TEST_CASE("CLI exit codes") {
    const auto dir = scratch("exit");
    CHECK(cli::run({}) == 2);
    CHECK(cli::run({"bogus"}) == 2);
    CHECK(cli::run({"train", "--data", dir.string()}) == 2);
    CHECK(cli::run({"synth", "--out", (dir / "bad").string(), "--n-relations", "99"}) == 1);
    CHECK(cli::run({"train", "--config", (dir / "none.cfg").string(), "--data", dir.string(), "--out",
                    (dir / "run").string()}) == 1);
    CHECK(cli::run({"retrieve", "--data", dir.string(), "--method", "model"}) == 1);
}

TEST_CASE("CLI pipeline: synth, train, retrieve, generate, kqa, eval") {
    const auto dir = scratch("pipeline");
    const auto data = (dir / "data").string();
    const auto run = (dir / "run").string();
    REQUIRE(cli::run({"-q", "synth", "--out", data, "--seed", "7", "--n-entities", "80", "--n-relations", "6",
                      "--n-triplets", "120", "--n-dialogues", "32", "--distractor-degree", "3"}) == 0);
    CHECK(fs::exists(dir / "data" / "manifest.synth.txt"));

    auto config = fixtures::tiny_config(TrainMode::Contrastive);
    config.max_resp_len = 16;
    config.valid_limit = 2;
    write_file(dir / "cfg.txt", config_snapshot(config));
    REQUIRE(cli::run({"-q", "train", "--config", (dir / "cfg.txt").string(), "--data", data, "--out", run}) == 0);
    for (const char* name : {"checkpoint", "metrics.log", "config.snapshot", "manifest.train.txt"}) {
        CHECK(fs::exists(dir / "run" / name));
    }
    CHECK(slurp(dir / "run" / "metrics.log").starts_with("epoch=1 "));

    REQUIRE(cli::run({"-q", "retrieve", "--run", run, "--data", data, "--split", "all"}) == 0);
    REQUIRE(cli::run({"-q", "retrieve", "--run", run, "--data", data, "--split", "all", "--method", "bm25"}) == 0);
    REQUIRE(cli::run({"-q", "generate", "--run", run, "--data", data, "--split", "all"}) == 0);
    REQUIRE(cli::run({"-q", "kqa", "--data", data, "--augment", "--seed", "1"}) == 0);
    CHECK(fs::file_size(dir / "data" / "kqa.all.jsonl") > 0);

    const auto responses = (dir / "run" / "all.out").string();
    const auto ranking = (dir / "run" / "retrieve.all.model.tsv").string();
    REQUIRE(cli::run({"-q", "eval", "--responses", responses, "--data", data, "--ranking", ranking}) == 0);
    const auto report = slurp(responses + ".report");
    for (const char* key : {"kqa_em", "kqa_f1", "knowledge_f1", "entity_f1", "string_match", "bleu_4", "rouge_l",
                            "unigram_f1", "distinct_2", "mrr", "hits@1"}) {
        CHECK_MESSAGE(report.find(std::string(key) + "\t") != std::string::npos, key);
    }
    CHECK(report.find("retrieval_evaluated\t32\n") != std::string::npos);

    const auto first = report;
    fs::remove(responses + ".report");
    REQUIRE(cli::run({"-q", "eval", "--manifest", responses + ".report.manifest"}) == 0);
    CHECK(slurp(responses + ".report") == first);

    std::ofstream(responses, std::ios::app) << "d00000\textra line\n";
    CHECK(cli::run({"-q", "eval", "--manifest", responses + ".report.manifest"}) == 1);
}
