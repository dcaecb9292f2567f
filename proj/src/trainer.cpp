#include "dama/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "dama/error.hpp"
#include "dama/numeric.hpp"
#include "dama/objective.hpp"
#include "dama/parallel.hpp"
#include "json.hpp"

namespace dama {

std::string to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::dpo: return "dpo";
        case TrainMode::d2po: return "d2po";
        case TrainMode::mdpo: return "mdpo";
        case TrainMode::dama: return "dama";
    }
    return "?";
}

TrainMode parse_train_mode(const std::string& text) {
    if (text == "dpo") return TrainMode::dpo;
    if (text == "d2po") return TrainMode::d2po;
    if (text == "mdpo") return TrainMode::mdpo;
    if (text == "dama") return TrainMode::dama;
    throw InputError("unknown mode '" + text + "' (expected dpo, d2po, mdpo or dama)");
}

std::string to_string(CombineStrategy combine) {
    return combine == CombineStrategy::multiply ? "multiply" : "weighted";
}

CombineStrategy parse_combine_strategy(const std::string& text) {
    if (text == "multiply") return CombineStrategy::multiply;
    if (text == "weighted") return CombineStrategy::weighted;
    throw InputError("unknown combine strategy '" + text + "' (expected multiply or weighted)");
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw InputError("invalid config: " + msg); };
    if (!(base_beta > 0.0) || !std::isfinite(base_beta)) fail("base_beta must be positive");
    if (batch_size < 1) fail("batch_size must be at least 1");
    if (keep_k < 1 || keep_k > batch_size) {
        fail("keep_k must satisfy 1 <= keep_k <= batch_size (got keep_k=" + std::to_string(keep_k) +
             ", batch_size=" + std::to_string(batch_size) + ")");
    }
    if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0, 1)");
    if (epochs < 1) fail("epochs must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
    if (!(rho >= 0.0 && rho <= 1.0)) fail("rho must lie in [0, 1]");
    if (!(epsilon > 0.0)) fail("epsilon must be positive");
    if (context_count < 1) fail("context_count must be at least 1");
    if (threads < 1) fail("threads must be at least 1");
    if (!(grad_clip >= 0.0)) fail("grad_clip must be non-negative");
    if (legacy_eq12_norm && keep_k >= batch_size) fail("legacy_eq12_norm requires keep_k < batch_size");
}

bool TrainConfig::uses_data_factor() const {
    return (mode == TrainMode::d2po || mode == TrainMode::dama) && !force_alpha_d_one;
}

bool TrainConfig::uses_model_factor() const {
    return (mode == TrainMode::mdpo || mode == TrainMode::dama) && !force_alpha_m_one;
}

bool TrainConfig::uses_filter() const { return mode == TrainMode::mdpo || mode == TrainMode::dama; }

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t count) {
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) {
        order[i] = i;
    }
    std::mt19937_64 rng(splitmix64(seed) ^ splitmix64(0x5eed0000ULL + epoch));
    for (std::size_t i = count; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

PolicyParams initial_policy(const TrainConfig& config, std::size_t vocab_size) {
    return PolicyParams::random(config.context_count, vocab_size, config.seed, 0.1);
}

namespace {

std::string batch_diagnostic(const BatchReport& r, const LossReport& loss, const EffectiveBeta& betas) {
    std::ostringstream os;
    os << "non-finite loss at epoch " << r.epoch << " batch " << r.batch_index << ": loss=" << loss.loss
       << " alpha_m=" << r.alpha_m << " running_mean=" << r.running_mean << " betas=[";
    for (std::size_t i = 0; i < betas.values.size(); ++i) {
        os << (i ? "," : "") << betas.values[i];
    }
    os << "]";
    return os.str();
}

}  // namespace

BatchLogProbs batch_log_probs(const PolicyParams& policy, const PolicyParams& reference,
                              const std::vector<TokenizedInstance>& corpus, std::span<const std::size_t> members,
                              std::size_t threads) {
    const std::size_t n = members.size();
    BatchLogProbs out;
    for (auto* v : {&out.theta_w, &out.ref_w, &out.theta_l, &out.ref_l, &out.delta_w, &out.delta_l}) {
        v->resize(n);
    }
    parallel_for(n, threads, [&](std::size_t i) {
        const auto& inst = corpus[members[i]];
        out.theta_w[i] = log_prob(policy, inst.context_id, inst.chosen_tokens);
        out.ref_w[i] = log_prob(reference, inst.context_id, inst.chosen_tokens);
        out.theta_l[i] = log_prob(policy, inst.context_id, inst.rejected_tokens);
        out.ref_l[i] = log_prob(reference, inst.context_id, inst.rejected_tokens);
        out.delta_w[i] = out.theta_w[i] - out.ref_w[i];
        out.delta_l[i] = out.theta_l[i] - out.ref_l[i];
    });
    return out;
}

std::vector<double> batch_logit_gradient(const PolicyParams& policy, const std::vector<TokenizedInstance>& corpus,
                                         std::span<const std::size_t> members, const LossReport& loss,
                                         std::span<const std::uint8_t> mask, std::size_t threads) {
    const std::size_t n = members.size();
    const std::size_t vocab_size = policy.vocab_size();
    // Per-instance row gradients in parallel, summed in batch order.
    std::vector<SparseRowGradient> rows(n);
    parallel_for(n, threads, [&](std::size_t i) {
        if (!mask[i]) {
            return;
        }
        const auto& inst = corpus[members[i]];
        auto gw = log_prob_gradient(policy, inst.context_id, inst.chosen_tokens);
        auto gl = log_prob_gradient(policy, inst.context_id, inst.rejected_tokens);
        for (std::size_t v = 0; v < gw.row.size(); ++v) {
            gw.row[v] = loss.gradient_wrt_delta_w[i] * gw.row[v] + loss.gradient_wrt_delta_l[i] * gl.row[v];
        }
        rows[i] = std::move(gw);
    });
    std::vector<double> gradient(policy.logits().size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) {
            continue;
        }
        double* dst = gradient.data() + rows[i].context_id * vocab_size;
        for (std::size_t v = 0; v < vocab_size; ++v) {
            dst[v] += rows[i].row[v];
        }
    }
    return gradient;
}

TrainResult run_training(const TrainConfig& config, const std::vector<TokenizedInstance>& corpus,
                         std::size_t vocab_size, const HardnessTable& hardness, const BatchObserver& observer) {
    config.validate();
    if (corpus.empty()) {
        throw InputError("training corpus is empty");
    }

    std::vector<double> alpha_d_of(corpus.size(), 1.0);
    if (config.uses_data_factor()) {
        if (hardness.summary.mode != config.hardness_mode) {
            throw InputError("hardness records were computed in mode '" + to_string(hardness.summary.mode) +
                             "' but the config asks for '" + to_string(config.hardness_mode) + "'");
        }
        std::unordered_map<std::string, double> by_id;
        for (const auto& r : hardness.records) {
            by_id.emplace(r.instance_id, r.alpha_d);
        }
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            auto it = by_id.find(corpus[i].instance_id);
            if (it == by_id.end()) {
                throw InputError("no hardness record for instance '" + corpus[i].instance_id + "'");
            }
            alpha_d_of[i] = it->second;
        }
    }

    TrainResult result;
    result.policy = initial_policy(config, vocab_size);
    result.reference = snapshot_reference(result.policy);
    const PolicyParams& reference = result.reference.params();
    for (const auto& inst : corpus) {
        if (inst.context_id >= config.context_count) {
            throw InputError("instance '" + inst.instance_id + "' has context id outside context_count");
        }
    }

    ResponsivenessState state;
    state.gamma = config.gamma;
    state.epsilon = config.epsilon;
    state.validate();

    const std::size_t n_total = corpus.size();
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = epoch_order(config.seed, epoch, n_total);
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n_total; start += config.batch_size, ++batch_index) {
            const std::size_t n = std::min(config.batch_size, n_total - start);
            const std::span<const std::size_t> members(order.data() + start, n);

            const auto lp = batch_log_probs(result.policy, reference, corpus, members, config.threads);
            const auto& theta_w = lp.theta_w;
            const auto& ref_w = lp.ref_w;
            const auto& theta_l = lp.theta_l;
            const auto& ref_l = lp.ref_l;

            const auto raw = reward_gaps(theta_w, ref_w, theta_l, ref_l, config.base_beta);
            const auto normalized = normalize_gaps(raw, state);
            const std::size_t keep = std::min(config.keep_k, n);
            const auto mask = config.uses_filter()
                                  ? outlier_mask(config.filter_on_raw ? raw : normalized, state.running_mean, keep,
                                                 config.filter)
                                  : std::vector<std::uint8_t>(n, 1);
            const double responsiveness =
                config.legacy_eq12_norm
                    ? batch_responsiveness_fixed_divisor(normalized, mask,
                                                         static_cast<double>(config.batch_size - config.keep_k))
                    : batch_responsiveness(normalized, mask);
            const double alpha_m = config.uses_model_factor() ? alpha_model(responsiveness, state) : 1.0;

            std::vector<double> alpha_d(n);
            for (std::size_t i = 0; i < n; ++i) {
                alpha_d[i] = alpha_d_of[members[i]];
            }
            const auto alpha = config.combine == CombineStrategy::multiply
                                   ? combine_multiplicative(alpha_d, alpha_m)
                                   : combine_weighted(alpha_d, alpha_m, config.rho);
            const auto betas = effective_beta(config.base_beta, alpha);
            const auto loss = dpo_loss_and_grad(lp.delta_w, lp.delta_l, betas, mask);

            BatchReport report;
            report.epoch = epoch;
            report.batch_index = batch_index;
            report.loss = loss.loss;
            report.alpha_m = alpha_m;
            report.mean_beta_c = stable_mean(betas.values);
            report.running_mean = state.running_mean;
            report.retained_count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
            report.mean_raw_gap = stable_mean(raw);
            report.batch_responsiveness = responsiveness;
            if (!std::isfinite(loss.loss)) {
                throw TrainingAborted(batch_diagnostic(report, loss, betas), std::move(result.reports));
            }

            const auto gradient =
                batch_logit_gradient(result.policy, corpus, members, loss, mask, config.threads);
            apply_gradient(result.policy, gradient, config.learning_rate, config.grad_clip);

            if (config.uses_model_factor()) {
                state = update_running_mean(state, responsiveness);
            }
            result.reports.push_back(report);
            if (observer) {
                observer(report, result.policy);
            }
        }
    }
    return result;
}

std::vector<double> evaluate_gaps(const PolicyParams& policy, const ReferenceSnapshot& reference,
                                  const std::vector<TokenizedInstance>& corpus, double beta, std::size_t threads) {
    std::vector<std::size_t> all(corpus.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto lp = batch_log_probs(policy, reference.params(), corpus, all, threads);
    return reward_gaps(lp.theta_w, lp.ref_w, lp.theta_l, lp.ref_l, beta);
}

EvalReport evaluate(const PolicyParams& policy, const ReferenceSnapshot& reference,
                    const std::vector<TokenizedInstance>& corpus, const std::vector<HardnessRecord>& hardness,
                    double beta, std::size_t threads) {
    if (corpus.empty()) {
        throw InputError("cannot evaluate an empty corpus");
    }
    std::unordered_map<std::string, double> delta_of;
    for (const auto& r : hardness) {
        delta_of.emplace(r.instance_id, r.delta);
    }
    std::vector<double> deltas(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto it = delta_of.find(corpus[i].instance_id);
        if (it == delta_of.end()) {
            throw InputError("no hardness record for instance '" + corpus[i].instance_id + "'");
        }
        deltas[i] = it->second;
    }
    const auto gaps = evaluate_gaps(policy, reference, corpus, beta, threads);

    auto sorted = deltas;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

    EvalReport report;
    report.bucket_threshold = median;
    std::vector<double> easy, hard;
    std::size_t wins = 0;
    for (std::size_t i = 0; i < n; ++i) {
        wins += gaps[i] > 0.0 ? 1 : 0;  // ties count as failures
        (deltas[i] > median ? easy : hard).push_back(gaps[i]);
    }
    report.preference_accuracy = static_cast<double>(wins) / static_cast<double>(n);
    report.easy_count = easy.size();
    report.hard_count = hard.size();
    report.mean_gap_easy = stable_mean(easy);
    report.mean_gap_hard = stable_mean(hard);
    report.mean_gap = stable_mean(gaps);
    return report;
}

std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) {
        throw InvariantError("failed to format a double");
    }
    return std::string(buf, end);
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<BatchReport>& reports) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    out << kMetricsHeader << '\n';
    for (const auto& r : reports) {
        out << r.epoch << ',' << r.batch_index << ',' << format_double(r.loss) << ',' << format_double(r.alpha_m)
            << ',' << format_double(r.mean_beta_c) << ',' << format_double(r.running_mean) << ','
            << r.retained_count << ',' << format_double(r.mean_raw_gap) << '\n';
    }
}

std::vector<BatchReport> load_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line) || (line != kMetricsHeader && line != std::string(kMetricsHeader) + "\r")) {
        throw InputError(path.string() + ":1: unexpected metrics header");
    }
    std::vector<BatchReport> reports;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        auto bad = [&](const std::string& why) {
            return InputError(path.string() + ":" + std::to_string(line_no) + ": " + why);
        };
        if (cells.size() != 8) {
            throw bad("expected 8 columns, found " + std::to_string(cells.size()));
        }
        auto as_size = [&](const std::string& s) {
            std::size_t v = 0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || p != s.data() + s.size()) {
                throw bad("not an integer: '" + s + "'");
            }
            return v;
        };
        auto as_double = [&](const std::string& s) {
            double v = 0.0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || p != s.data() + s.size()) {
                throw bad("not a number: '" + s + "'");
            }
            return v;
        };
        BatchReport r;
        r.epoch = as_size(cells[0]);
        r.batch_index = as_size(cells[1]);
        r.loss = as_double(cells[2]);
        r.alpha_m = as_double(cells[3]);
        r.mean_beta_c = as_double(cells[4]);
        r.running_mean = as_double(cells[5]);
        r.retained_count = as_size(cells[6]);
        r.mean_raw_gap = as_double(cells[7]);
        reports.push_back(r);
    }
    return reports;
}

void write_eval_json(const std::filesystem::path& path, const EvalReport& report) {
    nlohmann::json j = {{"preference_accuracy", report.preference_accuracy},
                        {"mean_gap_easy", report.mean_gap_easy},
                        {"mean_gap_hard", report.mean_gap_hard},
                        {"bucket_threshold", report.bucket_threshold},
                        {"easy_count", report.easy_count},
                        {"hard_count", report.hard_count},
                        {"mean_gap", report.mean_gap}};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
}

EvalReport load_eval_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    try {
        auto j = nlohmann::json::parse(in);
        EvalReport r;
        r.preference_accuracy = j.at("preference_accuracy").get<double>();
        r.mean_gap_easy = j.at("mean_gap_easy").get<double>();
        r.mean_gap_hard = j.at("mean_gap_hard").get<double>();
        r.bucket_threshold = j.at("bucket_threshold").get<double>();
        r.easy_count = j.value("easy_count", std::size_t{0});
        r.hard_count = j.value("hard_count", std::size_t{0});
        r.mean_gap = j.value("mean_gap", 0.0);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

}  // namespace dama
