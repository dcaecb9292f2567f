#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>
#include <sstream>

#include "dama/cli.hpp"
#include "dama/corpus.hpp"
#include "dama/digest.hpp"
#include "dama/trainer.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace dama;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::string> data_args(const fs::path& dir, const std::string& run) {
    return {"--set", "corpus=" + (dir / "corpus.jsonl").string(),
            "--set", "hardness=" + (dir / "hardness.jsonl").string(),
            "--set", "hardness_summary=" + (dir / "hardness_summary.json").string(),
            "--set", "out_dir=" + (dir / run).string(),
            "--set", "epochs=2"};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

fs::path prepared(const std::string& name) {
    auto dir = dama::test::scratch_dir(name);
    REQUIRE(cli({"gen", "--pairs", "64", "--seed", "3", "--out", dir.string()}).code == 0);
    REQUIRE(cli({"hardness", "--corpus", (dir / "corpus.jsonl").string(), "--scores",
                 (dir / "scores.jsonl").string(), "--out-dir", dir.string()})
                .code == 0);
    return dir;
}

std::size_t line_count(const std::string& text) { return std::count(text.begin(), text.end(), '\n'); }

}  // namespace

TEST_CASE("usage errors exit 1") {
    CHECK(cli({}).code == 1);
    CHECK(cli({"frobnicate"}).code == 1);
    CHECK(cli({"gen", "--pairs", "1", "--out", dama::test::scratch_dir("one").string()}).code == 1);
    CHECK(cli({"split"}).code == 1);
    CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("full pipeline") {
    const auto dir = prepared("pipeline");
    CHECK(load_corpus(dir / "corpus.jsonl").size() == 64);

    const auto split = cli({"split", "--corpus", (dir / "corpus.jsonl").string(), "--out",
                            (dir / "subsentences.jsonl").string()});
    CHECK(split.code == 0);
    CHECK(load_subsentences(dir / "subsentences.jsonl").size() == 64);
    const auto score = cli({"score-mock", "--corpus", (dir / "corpus.jsonl").string(), "--subsentences",
                            (dir / "subsentences.jsonl").string(), "--out", (dir / "mock.jsonl").string()});
    CHECK(score.code == 0);
    CHECK(load_scores(dir / "mock.jsonl").size() == 64);

    const auto hs = nlohmann::json::parse(dama::test::read_text(dir / "hardness_summary.json"));
    CHECK(hs.at("count") == 64);

    for (const std::string mode : {"dpo", "dama"}) {
        const auto t = cli(concat({"train", "--mode", mode}, data_args(dir, mode)));
        CHECK_MESSAGE(t.code == 0, t.err);
        CHECK(t.out.find("final loss") != std::string::npos);
        for (const char* file : {"metrics.csv", "checkpoint.json", "vocab.json", "run_manifest.json"}) {
            CHECK(fs::exists(dir / mode / file));
        }
        CHECK(line_count(dama::test::read_text(dir / mode / "metrics.csv")) == 1 + 2 * 4);
        const auto manifest = nlohmann::json::parse(dama::test::read_text(dir / mode / "run_manifest.json"));
        CHECK(manifest.at("train").at("mode") == mode);
        CHECK(manifest.at("digests").at("metrics") == sha256_file(dir / mode / "metrics.csv"));

        const auto e = cli(concat({"eval"}, data_args(dir, mode)));
        CHECK_MESSAGE(e.code == 0, e.err);
        const auto rep = load_eval_json(dir / mode / "eval.json");
        CHECK(rep.easy_count + rep.hard_count == 64);
    }

    const auto report_path = dir / "comparison.csv";
    const auto r = cli({"report", "--metrics", (dir / "dpo" / "metrics.csv").string(), "--metrics",
                        (dir / "dama" / "metrics.csv").string(), "--eval", (dir / "dama" / "eval.json").string(),
                        "--out", report_path.string()});
    CHECK_MESSAGE(r.code == 0, r.err);
    const auto text = dama::test::read_text(report_path);
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    CHECK(line == "run_label,epoch,batch,metric,value");
    std::size_t metric_rows = 0;
    std::set<std::string> labels;
    while (std::getline(in, line)) {
        const auto label = line.substr(0, line.find(','));
        labels.insert(label);
        if (line.find(",,") == std::string::npos) ++metric_rows;
    }
    CHECK(metric_rows % 6 == 0);
    CHECK(metric_rows == 6 * 2 * 8);
    CHECK(labels == std::set<std::string>{"dpo", "dama"});
}

TEST_CASE("train and eval errors") {
    const auto dir = prepared("errors");
    auto bad_k = cli(concat({"train", "--set", "keep_k=20"}, data_args(dir, "bad")));
    CHECK(bad_k.code == 1);
    CHECK(bad_k.err.find("keep_k") != std::string::npos);
    CHECK(cli(concat({"train", "--set", "bogus=1"}, data_args(dir, "bad"))).code == 1);
    CHECK(cli(concat({"train", "--mode", "ppo"}, data_args(dir, "bad"))).code == 1);
    CHECK(cli({"train", "--config", (dir / "missing.ini").string()}).code == 1);
    CHECK(cli(concat({"eval"}, data_args(dir, "never_trained"))).code == 1);

    const auto aborted =
        cli(concat({"train", "--set", "base_beta=1e300", "--set", "learning_rate=1e300", "--mode", "dpo"},
                   data_args(dir, "nan")));
    CHECK(aborted.code == 2);
    CHECK(aborted.err.find("non-finite") != std::string::npos);
}

TEST_CASE("train from a config file") {
    const auto dir = prepared("configfile");
    dama::test::write_text(dir / "run.ini",
                           "corpus = corpus.jsonl\nhardness = hardness.jsonl\nhardness_summary = "
                           "hardness_summary.json\nout_dir = from_ini\n[train]\nmode = mdpo\nepochs = 1\n");
    const auto t = cli({"train", "--config", (dir / "run.ini").string(), "--set", "keep_k=10"});
    CHECK_MESSAGE(t.code == 0, t.err);
    const auto m = load_metrics_csv(dir / "from_ini" / "metrics.csv");
    REQUIRE(!m.empty());
    CHECK(m[0].retained_count == 10);
}

TEST_CASE("hardness with a missing id exits 1") {
    const auto dir = prepared("missing");
    auto scores = load_scores(dir / "scores.jsonl");
    scores.pop_back();
    write_scores(dir / "partial.jsonl", scores);
    const auto r = cli({"hardness", "--corpus", (dir / "corpus.jsonl").string(), "--scores",
                        (dir / "partial.jsonl").string(), "--out-dir", (dir / "h").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find(load_corpus(dir / "corpus.jsonl").back().id) != std::string::npos);
    CHECK(cli({"hardness", "--corpus", (dir / "corpus.jsonl").string(), "--scores", (dir / "scores.jsonl").string(),
               "--mode", "bogus"})
              .code == 1);
}

TEST_CASE("report with no inputs exits 1") {
    const auto dir = dama::test::scratch_dir("report");
    CHECK(cli({"report", "--out", (dir / "x.csv").string()}).code == 1);
    CHECK(cli({"report", "--metrics", (dir / "nope.csv").string()}).code == 1);
}

TEST_CASE("repeat runs are byte identical") {
    const auto dir = prepared("repeat");
    CHECK(cli(concat({"train"}, data_args(dir, "a"))).code == 0);
    CHECK(cli(concat({"train", "--set", "threads=3"}, data_args(dir, "b"))).code == 0);
    for (const char* file : {"metrics.csv", "checkpoint.json"}) {
        CHECK(sha256_file(dir / "a" / file) == sha256_file(dir / "b" / file));
    }
}
