#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dama/corpus.hpp"

namespace dama {

/// How per-instance hardness is derived from similarity scores.
enum class HardnessMode {
    probabilities,  ///< softmax over all sub-sentence scores, then chosen mass minus rejected mass
    raw_ratio,      ///< sum of chosen scores over sum of rejected scores
};

std::string to_string(HardnessMode mode);
HardnessMode parse_hardness_mode(const std::string& text);

struct HardnessRecord {
    std::string instance_id;
    double delta = 0.0;
    double alpha_d = 1.0;
};

struct HardnessSummary {
    double delta_bar = 0.0;
    std::size_t count = 0;
    HardnessMode mode = HardnessMode::probabilities;
    double sigmoid_delta_bar = 0.5;
};

struct HardnessTable {
    std::vector<HardnessRecord> records;
    HardnessSummary summary;
};

inline constexpr double kDefaultRatioEpsilon = 1e-8;

struct SoftmaxSplit {
    std::vector<double> chosen;
    std::vector<double> rejected;
};

/// Joint softmax over the concatenated chosen and rejected scores.
SoftmaxSplit softmax_probabilities(std::span<const double> chosen_scores, std::span<const double> rejected_scores);

/// Chosen probability mass minus rejected probability mass; lies in (-1, 1).
double hardness_delta(std::span<const double> chosen_probs, std::span<const double> rejected_probs);

/// Ratio of score sums with the denominator clamped away from zero to +/-epsilon.
double hardness_delta_raw(std::span<const double> chosen_scores, std::span<const double> rejected_scores,
                          double epsilon = kDefaultRatioEpsilon);

/// sigmoid(delta) / sigmoid(delta_bar).
double alpha_data(double delta, double delta_bar);

/// Computes every delta, their mean, then alpha_d per record. Output order
/// follows input order.
HardnessTable annotate_corpus(const std::vector<SimilarityRecord>& scores, HardnessMode mode,
                              double epsilon = kDefaultRatioEpsilon);

void write_hardness(const std::filesystem::path& records_path, const std::filesystem::path& summary_path,
                    const HardnessTable& table);
HardnessTable load_hardness(const std::filesystem::path& records_path, const std::filesystem::path& summary_path);

}  // namespace dama
