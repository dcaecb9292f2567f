#pragma once

#include <cstdint>
#include <vector>

#include "dama/corpus.hpp"

namespace dama {

/// Parameters for the desk-scale synthetic preference corpus.
struct SyntheticSpec {
    std::size_t pairs = 512;
    double easy_fraction = 0.5;
    /// Number of distinct words the generator may use (fillers plus object words).
    std::size_t vocab_size = 96;
    /// Similarity drop, as a fraction of `scale`, for a sentence with hallucinated objects.
    double gap_strength = 0.6;
    std::uint64_t seed = 0;
    std::size_t images = 16;
    std::size_t sentences = 3;
    double scale = 5.0;

    void validate() const;
};

struct SyntheticCorpus {
    std::vector<PreferenceInstance> corpus;
    std::vector<SimilarityRecord> scores;
};

/// Every pair describes one of `images` scenes. The chosen response names only
/// objects present in the scene, each with the scene's attribute word. Easy
/// pairs replace both objects in all but one sentence with objects the scene is
/// prone to be confused with, and get a large similarity drop on those
/// sentences. Hard pairs get one wrong attribute word in one sentence and a
/// small drop. Each instance carries its bucket in the extra field "bucket".
SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec);

}  // namespace dama
