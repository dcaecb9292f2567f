#include "dama/hardness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dama/error.hpp"
#include "dama/numeric.hpp"
#include "json.hpp"

namespace dama {

using nlohmann::json;

std::string to_string(HardnessMode mode) {
    return mode == HardnessMode::probabilities ? "probabilities" : "raw_ratio";
}

HardnessMode parse_hardness_mode(const std::string& text) {
    if (text == "probabilities") {
        return HardnessMode::probabilities;
    }
    if (text == "raw_ratio") {
        return HardnessMode::raw_ratio;
    }
    throw InputError("unknown hardness mode '" + text + "' (expected probabilities or raw_ratio)");
}

SoftmaxSplit softmax_probabilities(std::span<const double> chosen_scores, std::span<const double> rejected_scores) {
    if (chosen_scores.empty() || rejected_scores.empty()) {
        throw InputError("softmax_probabilities: score lists must be non-empty");
    }
    double max_score = -INFINITY;
    for (auto list : {chosen_scores, rejected_scores}) {
        for (double s : list) {
            if (!std::isfinite(s)) {
                throw InputError("softmax_probabilities: non-finite score");
            }
            max_score = std::max(max_score, s);
        }
    }
    SoftmaxSplit out;
    out.chosen.reserve(chosen_scores.size());
    out.rejected.reserve(rejected_scores.size());
    std::vector<double> exps;
    exps.reserve(chosen_scores.size() + rejected_scores.size());
    for (double s : chosen_scores) {
        exps.push_back(std::exp(s - max_score));
    }
    for (double s : rejected_scores) {
        exps.push_back(std::exp(s - max_score));
    }
    const double z = stable_sum(exps);
    for (std::size_t i = 0; i < exps.size(); ++i) {
        (i < chosen_scores.size() ? out.chosen : out.rejected).push_back(exps[i] / z);
    }
    return out;
}

double hardness_delta(std::span<const double> chosen_probs, std::span<const double> rejected_probs) {
    return stable_sum(chosen_probs) - stable_sum(rejected_probs);
}

double hardness_delta_raw(std::span<const double> chosen_scores, std::span<const double> rejected_scores,
                          double epsilon) {
    if (!(epsilon > 0.0)) {
        throw InputError("hardness_delta_raw: epsilon must be positive");
    }
    const double numerator = stable_sum(chosen_scores);
    double denominator = stable_sum(rejected_scores);
    if (std::abs(denominator) < epsilon) {
        denominator = std::signbit(denominator) ? -epsilon : epsilon;
    }
    return numerator / denominator;
}

double alpha_data(double delta, double delta_bar) { return sigmoid(delta) / sigmoid(delta_bar); }

HardnessTable annotate_corpus(const std::vector<SimilarityRecord>& scores, HardnessMode mode, double epsilon) {
    if (scores.empty()) {
        throw InputError("annotate_corpus: no similarity records");
    }
    HardnessTable table;
    table.records.reserve(scores.size());
    std::vector<double> deltas;
    deltas.reserve(scores.size());
    for (const auto& rec : scores) {
        double delta = 0.0;
        try {
            if (mode == HardnessMode::probabilities) {
                auto probs = softmax_probabilities(rec.chosen_scores, rec.rejected_scores);
                delta = hardness_delta(probs.chosen, probs.rejected);
            } else {
                for (auto list : {&rec.chosen_scores, &rec.rejected_scores}) {
                    if (list->empty() || !std::all_of(list->begin(), list->end(),
                                                      [](double v) { return std::isfinite(v); })) {
                        throw InputError("scores must be non-empty and finite");
                    }
                }
                delta = hardness_delta_raw(rec.chosen_scores, rec.rejected_scores, epsilon);
            }
        } catch (const InputError& e) {
            throw InputError("instance '" + rec.instance_id + "': " + e.what());
        }
        deltas.push_back(delta);
        table.records.push_back({rec.instance_id, delta, 1.0});
    }
    table.summary.mode = mode;
    table.summary.count = deltas.size();
    table.summary.delta_bar = stable_mean(deltas);
    table.summary.sigmoid_delta_bar = sigmoid(table.summary.delta_bar);
    for (auto& r : table.records) {
        r.alpha_d = alpha_data(r.delta, table.summary.delta_bar);
    }
    return table;
}

void write_hardness(const std::filesystem::path& records_path, const std::filesystem::path& summary_path,
                    const HardnessTable& table) {
    std::ofstream rec(records_path, std::ios::binary | std::ios::trunc);
    if (!rec) {
        throw InputError("cannot write " + records_path.string());
    }
    for (const auto& r : table.records) {
        rec << json{{"instance_id", r.instance_id}, {"delta", r.delta}, {"alpha_d", r.alpha_d}}.dump() << '\n';
    }
    std::ofstream sum(summary_path, std::ios::binary | std::ios::trunc);
    if (!sum) {
        throw InputError("cannot write " + summary_path.string());
    }
    sum << json{{"delta_bar", table.summary.delta_bar},
                {"count", table.summary.count},
                {"mode", to_string(table.summary.mode)}}
               .dump(2)
        << '\n';
}

HardnessTable load_hardness(const std::filesystem::path& records_path, const std::filesystem::path& summary_path) {
    HardnessTable table;
    std::ifstream rec(records_path);
    if (!rec) {
        throw InputError("cannot open " + records_path.string());
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(rec, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            json j = json::parse(line);
            HardnessRecord r{j.at("instance_id").get<std::string>(), j.at("delta").get<double>(),
                             j.at("alpha_d").get<double>()};
            if (!std::isfinite(r.delta) || !(r.alpha_d > 0.0) || !std::isfinite(r.alpha_d)) {
                throw InputError("non-finite delta or non-positive alpha_d");
            }
            table.records.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw InputError(records_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const InputError& e) {
            throw InputError(records_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    std::ifstream sum(summary_path);
    if (!sum) {
        throw InputError("cannot open " + summary_path.string());
    }
    try {
        json j = json::parse(sum);
        table.summary.delta_bar = j.at("delta_bar").get<double>();
        table.summary.count = j.at("count").get<std::size_t>();
        table.summary.mode = parse_hardness_mode(j.at("mode").get<std::string>());
        table.summary.sigmoid_delta_bar = sigmoid(table.summary.delta_bar);
    } catch (const json::exception& e) {
        throw InputError(summary_path.string() + ": " + e.what());
    }
    if (table.summary.count != table.records.size()) {
        throw InputError(summary_path.string() + ": count " + std::to_string(table.summary.count) +
                         " does not match " + std::to_string(table.records.size()) + " hardness records");
    }
    return table;
}

}  // namespace dama
