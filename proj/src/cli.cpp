#include "dama/cli.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include "CLI11.hpp"
#include "dama/config.hpp"
#include "dama/corpus.hpp"
#include "dama/digest.hpp"
#include "dama/error.hpp"
#include "dama/hardness.hpp"
#include "dama/synthetic.hpp"
#include "dama/trainer.hpp"

namespace dama {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
    if (dir.empty()) {
        return;
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw InputError("cannot create output directory " + dir.string());
    }
}

void ensure_parent(const fs::path& file) { ensure_dir(file.parent_path()); }

std::string run_label(const fs::path& file) {
    const std::string stem = file.stem().string();
    if ((stem == "metrics" || stem == "eval") && file.has_parent_path()) {
        const auto parent = fs::absolute(file).parent_path().filename().string();
        if (!parent.empty()) {
            return parent;
        }
    }
    return stem;
}

// ---- gen ----

struct GenOptions {
    SyntheticSpec spec;
    fs::path out_dir = ".";
};

void run_gen(const GenOptions& opt, std::ostream& out) {
    out << "gen: pairs=" << opt.spec.pairs << " easy_fraction=" << opt.spec.easy_fraction
        << " vocab_size=" << opt.spec.vocab_size << " gap_strength=" << opt.spec.gap_strength
        << " images=" << opt.spec.images << " scale=" << opt.spec.scale << " seed=" << opt.spec.seed
        << " out=" << opt.out_dir.string() << '\n';
    const auto data = make_synthetic_corpus(opt.spec);
    ensure_dir(opt.out_dir);
    write_corpus(opt.out_dir / "corpus.jsonl", data.corpus);
    write_scores(opt.out_dir / "scores.jsonl", data.scores);
    out << "wrote " << data.corpus.size() << " pairs to " << (opt.out_dir / "corpus.jsonl").string() << " and "
        << (opt.out_dir / "scores.jsonl").string() << '\n';
}

// ---- split / score-mock ----

void run_split(const fs::path& corpus_path, const fs::path& out_path, std::ostream& out) {
    const auto corpus = load_corpus(corpus_path);
    std::vector<SubSentences> parts;
    parts.reserve(corpus.size());
    for (const auto& inst : corpus) {
        parts.push_back(split_sentences(inst));
    }
    ensure_parent(out_path);
    write_subsentences(out_path, parts);
    out << "split " << corpus.size() << " instances into " << out_path.string() << '\n';
}

void run_score_mock(const fs::path& corpus_path, const fs::path& parts_path, double scale, std::uint64_t seed,
                    const fs::path& out_path, std::ostream& out) {
    out << "score-mock: scale=" << scale << " seed=" << seed << '\n';
    const auto corpus = load_corpus(corpus_path);
    std::unordered_map<std::string, SubSentences> parts_by_id;
    if (!parts_path.empty()) {
        for (auto& s : load_subsentences(parts_path)) {
            auto id = s.instance_id;
            parts_by_id.emplace(std::move(id), std::move(s));
        }
    }
    std::vector<SimilarityRecord> scores;
    for (const auto& inst : corpus) {
        SubSentences parts;
        if (parts_path.empty()) {
            parts = split_sentences(inst);
        } else {
            auto it = parts_by_id.find(inst.id);
            if (it == parts_by_id.end()) {
                throw InputError("no sub-sentences for instance '" + inst.id + "'");
            }
            parts = it->second;
        }
        scores.push_back(mock_similarity_scores(inst, parts, scale, seed));
    }
    ensure_parent(out_path);
    write_scores(out_path, scores);
    out << "scored " << scores.size() << " instances into " << out_path.string() << '\n';
}

// ---- hardness ----

void run_hardness(const fs::path& corpus_path, const fs::path& scores_path, const std::string& mode_text,
                  double epsilon, const fs::path& out_dir, std::ostream& out) {
    const auto mode = parse_hardness_mode(mode_text);
    const auto corpus = load_corpus(corpus_path);
    const auto scores = load_scores(scores_path);
    std::unordered_map<std::string, const SimilarityRecord*> by_id;
    for (const auto& s : scores) {
        by_id.emplace(s.instance_id, &s);
    }
    std::vector<SimilarityRecord> ordered;
    ordered.reserve(corpus.size());
    for (const auto& inst : corpus) {
        auto it = by_id.find(inst.id);
        if (it == by_id.end()) {
            throw InputError("no similarity scores for instance '" + inst.id + "'");
        }
        ordered.push_back(*it->second);
    }
    const auto table = annotate_corpus(ordered, mode, epsilon);
    ensure_dir(out_dir);
    write_hardness(out_dir / "hardness.jsonl", out_dir / "hardness_summary.json", table);
    nlohmann::json summary = {{"delta_bar", table.summary.delta_bar},
                              {"count", table.summary.count},
                              {"mode", to_string(table.summary.mode)},
                              {"sigmoid_delta_bar", table.summary.sigmoid_delta_bar}};
    out << summary.dump(2) << '\n';
}

// ---- train / eval ----

RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    RunConfig config = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    apply_overrides(config, overrides);
    config.train.validate();
    return config;
}

struct LoadedData {
    std::vector<PreferenceInstance> corpus;
    TokenizeResult tokens;
    HardnessTable hardness;
};

LoadedData load_data(const RunConfig& config, const std::optional<Vocabulary>& vocab) {
    LoadedData data;
    data.corpus = load_corpus(config.corpus);
    if (data.corpus.empty()) {
        throw InputError("corpus " + config.corpus.string() + " is empty");
    }
    data.tokens = tokenize(data.corpus, vocab, config.train.context_count);
    const bool need_hardness = config.train.uses_data_factor() || fs::exists(config.hardness);
    if (need_hardness) {
        data.hardness = load_hardness(config.hardness, config.hardness_summary);
    }
    return data;
}

void run_train(const RunConfig& config, std::ostream& out) {
    out << "resolved config:\n" << to_json(config).dump(2) << '\n';
    const auto start = std::chrono::steady_clock::now();
    const auto data = load_data(config, std::nullopt);
    ensure_dir(config.out_dir);

    const auto result = run_training(config.train, data.tokens.instances, data.tokens.vocab.size(), data.hardness);

    write_vocabulary(config.out_dir / "vocab.json", data.tokens.vocab);
    write_metrics_csv(config.out_dir / "metrics.csv", result.reports);
    save_checkpoint(config.out_dir / "checkpoint.json", result.policy, result.reference);

    nlohmann::json manifest = to_json(config);
    manifest["digests"] = {{"corpus", sha256_file(config.corpus)},
                           {"checkpoint", sha256_file(config.out_dir / "checkpoint.json")},
                           {"metrics", sha256_file(config.out_dir / "metrics.csv")},
                           {"vocab", sha256_file(config.out_dir / "vocab.json")}};
    if (fs::exists(config.hardness)) {
        manifest["digests"]["hardness"] = sha256_file(config.hardness);
    }
    if (fs::exists(config.hardness_summary)) {
        manifest["digests"]["hardness_summary"] = sha256_file(config.hardness_summary);
    }
    manifest["batches"] = result.reports.size();
    manifest["vocab_size"] = data.tokens.vocab.size();
    std::ofstream mf(config.out_dir / "run_manifest.json", std::ios::binary | std::ios::trunc);
    if (!mf) {
        throw InputError("cannot write run manifest");
    }
    mf << manifest.dump(2) << '\n';

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double final_loss = result.reports.empty() ? 0.0 : result.reports.back().loss;
    out << "final loss " << format_double(final_loss) << " after " << result.reports.size() << " batches, wall time "
        << seconds << " s\n";
}

void run_eval(const RunConfig& config, const fs::path& checkpoint_override, std::ostream& out) {
    out << "resolved config:\n" << to_json(config).dump(2) << '\n';
    const auto vocab = load_vocabulary(config.out_dir / "vocab.json");
    RunConfig cfg = config;
    auto data = load_data(cfg, vocab);
    if (data.hardness.records.empty()) {
        data.hardness = load_hardness(config.hardness, config.hardness_summary);
    }
    const fs::path ckpt_path = checkpoint_override.empty() ? config.out_dir / "checkpoint.json" : checkpoint_override;
    const auto ckpt = load_checkpoint(ckpt_path);
    if (ckpt.policy.vocab_size() != vocab.size() || ckpt.policy.context_count() != config.train.context_count) {
        throw InputError("checkpoint shape does not match the vocabulary or context_count");
    }
    const auto report = evaluate(ckpt.policy, ReferenceSnapshot(ckpt.reference), data.tokens.instances,
                                 data.hardness.records, config.train.base_beta, config.train.threads);
    write_eval_json(config.out_dir / "eval.json", report);
    out << "preference_accuracy " << format_double(report.preference_accuracy) << "\nmean_gap_easy "
        << format_double(report.mean_gap_easy) << " (" << report.easy_count << ")\nmean_gap_hard "
        << format_double(report.mean_gap_hard) << " (" << report.hard_count << ")\n";
}

// ---- report ----

void run_report(const std::vector<std::string>& metrics, const std::vector<std::string>& evals,
                const fs::path& out_path, std::ostream& out) {
    if (metrics.empty()) {
        throw InputError("report needs at least one metrics file");
    }
    std::ostringstream rows;
    rows << "run_label,epoch,batch,metric,value\n";
    std::size_t count = 0;
    for (const auto& file : metrics) {
        const auto label = run_label(file);
        for (const auto& r : load_metrics_csv(file)) {
            const std::pair<const char*, std::string> cells[] = {
                {"loss", format_double(r.loss)},
                {"alpha_m", format_double(r.alpha_m)},
                {"mean_beta_c", format_double(r.mean_beta_c)},
                {"running_mean", format_double(r.running_mean)},
                {"retained_count", std::to_string(r.retained_count)},
                {"mean_raw_gap", format_double(r.mean_raw_gap)},
            };
            for (const auto& [name, value] : cells) {
                rows << label << ',' << r.epoch << ',' << r.batch_index << ',' << name << ',' << value << '\n';
                ++count;
            }
        }
    }
    for (const auto& file : evals) {
        const auto label = run_label(file);
        const auto e = load_eval_json(file);
        const std::pair<const char*, double> cells[] = {
            {"mean_gap_easy", e.mean_gap_easy},
            {"mean_gap_hard", e.mean_gap_hard},
            {"preference_accuracy", e.preference_accuracy},
            {"bucket_threshold", e.bucket_threshold},
        };
        for (const auto& [name, value] : cells) {
            rows << label << ",,," << name << ',' << format_double(value) << '\n';
            ++count;
        }
    }
    ensure_parent(out_path);
    std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw InputError("cannot write " + out_path.string());
    }
    f << rows.str();
    out << "wrote " << count << " rows to " << out_path.string() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Adaptive-beta preference optimization toolkit"};
    app.require_subcommand(1);

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen", "Write a synthetic corpus.jsonl and scores.jsonl");
    gen_cmd->add_option("--pairs", gen.spec.pairs, "Number of preference pairs")->capture_default_str();
    gen_cmd->add_option("--easy-fraction", gen.spec.easy_fraction, "Fraction of easy pairs")->capture_default_str();
    gen_cmd->add_option("--vocab-size", gen.spec.vocab_size, "Word budget")->capture_default_str();
    gen_cmd->add_option("--gap-strength", gen.spec.gap_strength, "Similarity drop for hallucinated sentences")
        ->capture_default_str();
    gen_cmd->add_option("--images", gen.spec.images, "Number of scenes")->capture_default_str();
    gen_cmd->add_option("--scale", gen.spec.scale, "Similarity score scale")->capture_default_str();
    gen_cmd->add_option("--seed", gen.spec.seed, "Random seed")->capture_default_str();
    gen_cmd->add_option("--out", gen.out_dir, "Output directory")->capture_default_str();

    std::string split_corpus, split_out = "subsentences.jsonl";
    auto* split_cmd = app.add_subcommand("split", "Split responses into sub-sentences");
    split_cmd->add_option("--corpus", split_corpus, "corpus.jsonl")->required();
    split_cmd->add_option("--out", split_out, "Output subsentences.jsonl")->capture_default_str();

    std::string score_corpus, score_parts, score_out = "scores.jsonl";
    double score_scale = 5.0;
    std::uint64_t score_seed = 0;
    auto* score_cmd = app.add_subcommand("score-mock", "Deterministic mock similarity scores");
    score_cmd->add_option("--corpus", score_corpus, "corpus.jsonl")->required();
    score_cmd->add_option("--subsentences", score_parts, "Pre-split subsentences.jsonl (default: split rule)");
    score_cmd->add_option("--scale", score_scale, "Score scale")->capture_default_str();
    score_cmd->add_option("--seed", score_seed, "Seed")->capture_default_str();
    score_cmd->add_option("--out", score_out, "Output scores.jsonl")->capture_default_str();

    std::string hard_corpus, hard_scores, hard_mode = "probabilities", hard_out = ".";
    double hard_eps = kDefaultRatioEpsilon;
    auto* hard_cmd = app.add_subcommand("hardness", "Annotate per-instance hardness");
    hard_cmd->add_option("--corpus", hard_corpus, "corpus.jsonl")->required();
    hard_cmd->add_option("--scores", hard_scores, "scores.jsonl")->required();
    hard_cmd->add_option("--mode", hard_mode, "probabilities | raw_ratio")->capture_default_str();
    hard_cmd->add_option("--epsilon", hard_eps, "Denominator clamp for raw_ratio")->capture_default_str();
    hard_cmd->add_option("--out-dir", hard_out, "Output directory")->capture_default_str();

    std::string train_config;
    std::vector<std::string> train_sets;
    auto* train_cmd = app.add_subcommand("train", "Train the toy policy");
    train_cmd->add_option("--config", train_config, "key = value config file");
    train_cmd->add_option("--set", train_sets, "Override key=value (repeatable)");
    std::string train_mode;
    train_cmd->add_option("--mode", train_mode, "Shorthand for --set mode=...");

    std::string eval_config, eval_ckpt;
    std::vector<std::string> eval_sets;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained checkpoint");
    eval_cmd->add_option("--config", eval_config, "key = value config file");
    eval_cmd->add_option("--set", eval_sets, "Override key=value (repeatable)");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint (default: <out_dir>/checkpoint.json)");

    std::vector<std::string> report_metrics, report_evals;
    std::string report_out = "comparison.csv";
    auto* report_cmd = app.add_subcommand("report", "Long-format comparison table");
    report_cmd->add_option("--metrics", report_metrics, "metrics.csv files");
    report_cmd->add_option("--eval", report_evals, "eval.json files");
    report_cmd->add_option("--out", report_out, "Output CSV")->capture_default_str();

    std::vector<std::string> argv_store = args;
    argv_store.insert(argv_store.begin(), "dama");
    std::vector<char*> argv;
    for (auto& a : argv_store) {
        argv.push_back(a.data());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }

    try {
        if (*gen_cmd) {
            run_gen(gen, out);
        } else if (*split_cmd) {
            run_split(split_corpus, split_out, out);
        } else if (*score_cmd) {
            run_score_mock(score_corpus, score_parts, score_scale, score_seed, score_out, out);
        } else if (*hard_cmd) {
            run_hardness(hard_corpus, hard_scores, hard_mode, hard_eps, hard_out, out);
        } else if (*train_cmd) {
            if (!train_mode.empty()) {
                train_sets.push_back("mode=" + train_mode);
            }
            run_train(resolve_config(train_config, train_sets), out);
        } else if (*eval_cmd) {
            run_eval(resolve_config(eval_config, eval_sets), eval_ckpt, out);
        } else if (*report_cmd) {
            run_report(report_metrics, report_evals, report_out, out);
        }
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const TrainingAborted& e) {
        err << "training aborted: " << e.what() << '\n';
        return 2;
    } catch (const InvariantError& e) {
        err << "internal error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace dama
