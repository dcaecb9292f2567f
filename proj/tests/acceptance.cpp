// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "dama/cli.hpp"
#include "dama/digest.hpp"
#include "dama/hardness.hpp"
#include "dama/numeric.hpp"
#include "dama/objective.hpp"
#include "dama/responsiveness.hpp"
#include "dama/synthetic.hpp"
#include "dama/trainer.hpp"
#include "minimal_dpo.hpp"
#include "test_support.hpp"

using namespace dama;
using dama::test::Gen;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(4) << x;
    return os.str();
}

struct Data {
    TokenizeResult tok;
    HardnessTable hardness;
    std::vector<PreferenceInstance> corpus;
};

Data synthetic(std::size_t pairs, std::uint64_t seed, std::size_t contexts = 64) {
    SyntheticSpec spec;
    spec.pairs = pairs;
    spec.seed = seed;
    auto s = make_synthetic_corpus(spec);
    Data d;
    d.tok = tokenize(s.corpus, std::nullopt, contexts);
    d.hardness = annotate_corpus(s.scores, HardnessMode::probabilities);
    d.corpus = std::move(s.corpus);
    return d;
}

// 1: static mode against an independent DPO on 128 pairs, 4 epochs.
Outcome static_dpo_equivalence() {
    const auto t0 = Clock::now();
    const auto d = synthetic(128, 0);
    TrainConfig cfg;
    cfg.mode = TrainMode::dpo;

    dama::test::MinimalDpo oracle{cfg.context_count, d.tok.vocab.size(), {}, {}};
    oracle.theta = initial_policy(cfg, d.tok.vocab.size()).logits();
    oracle.ref = oracle.theta;
    std::vector<double> losses;
    std::vector<std::vector<double>> grads;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const auto order = epoch_order(cfg.seed, e, d.tok.instances.size());
        for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
            std::vector<const TokenizedInstance*> batch;
            for (std::size_t i = s; i < std::min(order.size(), s + cfg.batch_size); ++i) {
                batch.push_back(&d.tok.instances[order[i]]);
            }
            std::vector<double> g;
            losses.push_back(oracle.step(batch, cfg.base_beta, cfg.learning_rate, &g));
            grads.push_back(std::move(g));
        }
    }

    // Recover each step's gradient from consecutive parameter snapshots.
    std::size_t b = 0;
    double loss_err = 0.0, grad_err = 0.0;
    std::vector<double> prev = initial_policy(cfg, d.tok.vocab.size()).logits();
    run_training(cfg, d.tok.instances, d.tok.vocab.size(), d.hardness,
                 [&](const BatchReport& r, const PolicyParams& p) {
                     loss_err = std::max(loss_err, std::abs(r.loss - losses[b]));
                     for (std::size_t k = 0; k < prev.size(); ++k) {
                         const double g = (prev[k] - p.logits()[k]) / cfg.learning_rate;
                         grad_err = std::max(grad_err, std::abs(g - grads[b][k]));
                     }
                     prev = p.logits();
                     ++b;
                 });
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = b == losses.size() && loss_err <= 1e-12 && grad_err <= 1e-12 && secs < 5.0;
    o.detail = std::to_string(b) + " batches, max |loss diff| " + fmt(loss_err) + ", max |grad diff| " +
               fmt(grad_err) + ", " + fmt(secs) + " s (limits 1e-12, 5 s)";
    return o;
}

// 2: analytic logit gradients vs central differences.
Outcome gradient_check() {
    const std::size_t contexts = 4;
    const auto d = synthetic(64, 1, contexts);
    const std::size_t vocab = d.tok.vocab.size();
    Gen gen(2024);
    const double h = 1e-5;
    const int configs = 120;
    double worst = 0.0;
    for (int trial = 0; trial < configs; ++trial) {
        const auto policy = PolicyParams::random(contexts, vocab, gen.engine()(), 0.5);
        const auto ref = PolicyParams::random(contexts, vocab, gen.engine()(), 0.5);
        const std::size_t n = gen.index(1, 16);
        std::vector<std::size_t> members(n);
        for (auto& m : members) m = gen.index(0, d.tok.instances.size() - 1);
        const auto betas = effective_beta(gen.uniform(0.01, 1.0), gen.vec(n, 0.5, 2.0));
        std::vector<std::uint8_t> mask(n, 0);
        for (auto& m : mask) m = gen.index(0, 1);
        mask[gen.index(0, n - 1)] = 1;

        auto loss_at = [&](const PolicyParams& p) {
            const auto lp = batch_log_probs(p, ref, d.tok.instances, members);
            return dpo_loss_and_grad(lp.delta_w, lp.delta_l, betas, mask);
        };
        const auto grad = batch_logit_gradient(policy, d.tok.instances, members, loss_at(policy), mask);
        std::vector<double> fd(grad.size());
        auto probe = policy;
        for (std::size_t k = 0; k < fd.size(); ++k) {
            const double keep = probe.logits()[k];
            probe.logits()[k] = keep + h;
            const double up = loss_at(probe).loss;
            probe.logits()[k] = keep - h;
            const double down = loss_at(probe).loss;
            probe.logits()[k] = keep;
            fd[k] = (up - down) / (2 * h);
        }
        worst = std::max(worst, dama::test::relative_error(grad, fd));
    }
    return {worst <= 1e-6, std::to_string(configs) + " configurations, max relative error " + fmt(worst) +
                               " (limit 1e-6)"};
}

// 3: hardness invariants.
Outcome hardness_invariants() {
    Gen gen(33);
    const int samples = 10000;
    double norm_err = 0.0, shift_err = 0.0;
    std::size_t range_fail = 0, mono_fail = 0, identity_fail = 0;
    for (int s = 0; s < samples; ++s) {
        const auto cw = gen.vec(gen.index(1, 6), -10.0, 10.0);
        const auto cl = gen.vec(gen.index(1, 6), -10.0, 10.0);
        const auto p = softmax_probabilities(cw, cl);
        double total = 0.0;
        for (double x : p.chosen) total += x;
        for (double x : p.rejected) total += x;
        norm_err = std::max(norm_err, std::abs(total - 1.0));

        const double c = gen.uniform(-50.0, 50.0);
        auto cw2 = cw, cl2 = cl;
        for (auto& x : cw2) x += c;
        for (auto& x : cl2) x += c;
        const auto q = softmax_probabilities(cw2, cl2);
        for (std::size_t i = 0; i < p.chosen.size(); ++i) shift_err = std::max(shift_err, std::abs(p.chosen[i] - q.chosen[i]));
        for (std::size_t i = 0; i < p.rejected.size(); ++i)
            shift_err = std::max(shift_err, std::abs(p.rejected[i] - q.rejected[i]));

        const double delta = hardness_delta(p.chosen, p.rejected);
        range_fail += !(delta > -1.0 && delta < 1.0);

        const double bar = gen.uniform(-1.0, 1.0);
        const double other = gen.uniform(-1.0, 1.0);
        const double lo = std::min(delta, other), hi = std::max(delta, other);
        mono_fail += alpha_data(lo, bar) > alpha_data(hi, bar);
        identity_fail += alpha_data(bar, bar) != 1.0;
    }
    const bool pass = norm_err <= 1e-12 && shift_err <= 1e-9 && range_fail == 0 && mono_fail == 0 && identity_fail == 0;
    return {pass, std::to_string(samples) + " samples, normalization " + fmt(norm_err) + ", shift " + fmt(shift_err) +
                      ", range/monotone/identity violations " + std::to_string(range_fail) + "/" +
                      std::to_string(mono_fail) + "/" + std::to_string(identity_fail)};
}

// 4: mask invariants.
Outcome mask_invariants() {
    Gen gen(44);
    const int batches = 10000;
    std::size_t violations = 0;
    for (int b = 0; b < batches; ++b) {
        const std::size_t n = gen.index(1, 32);
        const std::size_t k = gen.index(1, 32);
        const double center = gen.uniform(-3.0, 3.0);
        auto gaps = gen.vec(n, -5.0, 5.0);
        if (b % 4 == 0) {
            for (auto& g : gaps) g = std::round(g * 2.0) / 2.0;
        }
        for (auto strategy :
             {FilterStrategy::none, FilterStrategy::bottom, FilterStrategy::top, FilterStrategy::extremes}) {
            const auto m = outlier_mask(gaps, center, k, strategy);
            const auto kept = static_cast<std::size_t>(std::count(m.begin(), m.end(), 1));
            if (strategy == FilterStrategy::none) {
                violations += kept != n;
                continue;
            }
            violations += kept != std::min(k, n);
            if (strategy == FilterStrategy::extremes) {
                double max_kept = -1.0, min_dropped = INFINITY;
                for (std::size_t i = 0; i < n; ++i) {
                    const double sq = (gaps[i] - center) * (gaps[i] - center);
                    if (m[i]) max_kept = std::max(max_kept, sq);
                    else min_dropped = std::min(min_dropped, sq);
                }
                violations += max_kept > min_dropped;
            }
        }
    }
    return {violations == 0, std::to_string(batches) + " batches x 4 strategies, " + std::to_string(violations) +
                                 " violations"};
}

// 5: EMA contraction.
Outcome ema_contraction() {
    Gen gen(55);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        ResponsivenessState state;
        state.running_mean = gen.uniform(-20.0, 20.0);
        const double c = gen.uniform(-20.0, 20.0);
        const double r0 = state.running_mean;
        for (int t = 1; t <= 50; ++t) {
            state = update_running_mean(state, c);
            worst = std::max(worst, std::abs(std::abs(state.running_mean - c) - std::pow(0.9, t) * std::abs(r0 - c)));
        }
    }
    return {worst <= 1e-9, "1000 trajectories x 50 steps, max deviation " + fmt(worst) + " (limit 1e-9)"};
}

// 6: easy/hard reward-gap dynamics on the synthetic corpus.
Outcome gap_dynamics() {
    const auto t0 = Clock::now();
    bool a_ok = true, b_ok = true;
    std::ostringstream detail;
    for (std::uint64_t seed : {0, 1, 2}) {
        const auto d = synthetic(512, seed);
        EvalReport reports[2];
        for (int m = 0; m < 2; ++m) {
            TrainConfig cfg;
            cfg.seed = seed;
            cfg.mode = m == 0 ? TrainMode::dpo : TrainMode::dama;
            const auto run = run_training(cfg, d.tok.instances, d.tok.vocab.size(), d.hardness);
            reports[m] = evaluate(run.policy, run.reference, d.tok.instances, d.hardness.records, cfg.base_beta);
        }
        const bool a = reports[0].mean_gap_easy > reports[0].mean_gap_hard;
        const bool b = reports[1].mean_gap_hard > reports[0].mean_gap_hard;
        a_ok = a_ok && a;
        b_ok = b_ok && b;
        detail << " seed " << seed << ": dpo easy " << fmt(reports[0].mean_gap_easy) << " hard "
               << fmt(reports[0].mean_gap_hard) << ", dama hard " << fmt(reports[1].mean_gap_hard) << " [a "
               << (a ? "ok" : "FAIL") << ", b " << (b ? "ok" : "FAIL") << "];";
    }
    const double secs = seconds_since(t0);
    detail << " " << fmt(secs) << " s (limit 60 s)";
    return {a_ok && b_ok && secs < 60.0, "(a) " + std::string(a_ok ? "pass" : "fail") + ", (b) " +
                                             (b_ok ? "pass" : "fail") + ";" + detail.str()};
}

// 7: mode reductions.
Outcome mode_lattice() {
    const auto d = synthetic(128, 7);
    auto losses = [&](const TrainConfig& c) {
        std::vector<double> out;
        for (const auto& r : run_training(c, d.tok.instances, d.tok.vocab.size(), d.hardness).reports) {
            out.push_back(r.loss);
        }
        return out;
    };
    auto gap = [](const std::vector<double>& a, const std::vector<double>& b) -> double {
        if (a.size() != b.size()) return INFINITY;
        double worst = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
        return worst;
    };
    auto mode_cfg = [](TrainMode m) {
        TrainConfig c;
        c.mode = m;
        return c;
    };
    auto to_mdpo = mode_cfg(TrainMode::dama);
    to_mdpo.force_alpha_d_one = true;
    auto to_d2po = mode_cfg(TrainMode::dama);
    to_d2po.force_alpha_m_one = true;
    to_d2po.filter = FilterStrategy::none;
    auto to_dpo = to_d2po;
    to_dpo.force_alpha_d_one = true;

    const double e1 = gap(losses(to_mdpo), losses(mode_cfg(TrainMode::mdpo)));
    const double e2 = gap(losses(to_d2po), losses(mode_cfg(TrainMode::d2po)));
    const double e3 = gap(losses(to_dpo), losses(mode_cfg(TrainMode::dpo)));
    return {std::max({e1, e2, e3}) <= 1e-12, "max per-batch loss difference: mdpo " + fmt(e1) + ", d2po " + fmt(e2) +
                                                 ", dpo " + fmt(e3) + " (limit 1e-12)"};
}

// 8: byte-identical artifacts across repeats and thread counts.
Outcome determinism() {
    const auto dir = dama::test::scratch_dir("determinism");
    std::ostringstream sink;
    auto cli = [&](std::vector<std::string> args) { return run_cli(args, sink, sink); };
    if (cli({"gen", "--pairs", "256", "--seed", "5", "--out", dir.string()}) != 0 ||
        cli({"hardness", "--corpus", (dir / "corpus.jsonl").string(), "--scores", (dir / "scores.jsonl").string(),
             "--out-dir", dir.string()}) != 0) {
        return {false, "could not prepare data: " + sink.str()};
    }
    auto train = [&](const std::string& name, const std::string& threads) {
        return cli({"train", "--set", "corpus=" + (dir / "corpus.jsonl").string(), "--set",
                    "hardness=" + (dir / "hardness.jsonl").string(), "--set",
                    "hardness_summary=" + (dir / "hardness_summary.json").string(), "--set",
                    "out_dir=" + (dir / name).string(), "--set", "threads=" + threads, "--set", "seed=5"});
    };
    if (train("t1_a", "1") != 0 || train("t1_b", "1") != 0 || train("t4", "4") != 0 || train("t3", "3") != 0) {
        return {false, "training failed: " + sink.str()};
    }
    std::size_t mismatches = 0;
    for (const char* file : {"metrics.csv", "checkpoint.json"}) {
        const auto base = sha256_file(dir / "t1_a" / file);
        for (const char* run : {"t1_b", "t4", "t3"}) mismatches += sha256_file(dir / run / file) != base;
    }
    return {mismatches == 0, "metrics.csv and checkpoint.json digests over 2 repeats and threads {1,3,4}: " +
                                 std::to_string(mismatches) + " mismatches"};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        Outcome (*run)();
    };
    const Criterion criteria[] = {
        {"static DPO equivalence", static_dpo_equivalence},
        {"gradient correctness", gradient_check},
        {"hardness invariants", hardness_invariants},
        {"mask and filter invariants", mask_invariants},
        {"EMA contraction", ema_contraction},
        {"easy/hard reward-gap dynamics", gap_dynamics},
        {"mode reductions", mode_lattice},
        {"determinism", determinism},
    };
    int failed = 0;
    int index = 1;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << index++ << "] " << c.name << ": " << o.detail << std::endl;
        failed += !o.pass;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
