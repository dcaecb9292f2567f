#include "dama/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dama/error.hpp"

namespace dama {

namespace {

const std::vector<std::string> kFillers = {"a", "sits", "near", "in", "view."};
constexpr std::size_t kAttributes = 8;

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
    /// `k` distinct picks from [0, n).
    std::vector<std::size_t> distinct(std::size_t n, std::size_t k) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            std::swap(all[i], all[i + below(n - i)]);
        }
        all.resize(k);
        return all;
    }

private:
    std::mt19937_64 engine_;
};

struct Scene {
    std::vector<std::string> present;
    std::vector<std::string> confusable;
    std::size_t attribute = 0;
};

struct Sentence {
    std::size_t attribute = 0;
    std::string first;
    std::string second;
};

std::string render(const Sentence& s) {
    return "a c" + std::to_string(s.attribute) + " " + s.first + " sits near a " + s.second + " in view.";
}

}  // namespace

void SyntheticSpec::validate() const {
    if (pairs < 2) throw InputError("synthetic corpus needs at least 2 pairs");
    if (!(easy_fraction >= 0.0 && easy_fraction <= 1.0)) throw InputError("easy_fraction must lie in [0, 1]");
    if (vocab_size < kFillers.size() + kAttributes + 8) {
        throw InputError("vocab_size must be at least " + std::to_string(kFillers.size() + kAttributes + 8));
    }
    if (!(gap_strength > 0.0 && gap_strength <= 1.0)) throw InputError("gap_strength must lie in (0, 1]");
    if (images < 1) throw InputError("images must be at least 1");
    if (sentences < 2) throw InputError("sentences must be at least 2");
    if (!(scale > 0.0)) throw InputError("scale must be positive");
}

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    const std::size_t objects = spec.vocab_size - kFillers.size() - kAttributes;
    const std::size_t confusable_pool = std::max<std::size_t>(2, objects / 4);
    const std::size_t present_pool = objects - confusable_pool;
    const std::size_t present_per_scene = std::min<std::size_t>(6, present_pool);
    const std::size_t confusable_per_scene = std::min<std::size_t>(4, confusable_pool);

    std::vector<Scene> scenes(spec.images);
    for (auto& scene : scenes) {
        for (auto k : rng.distinct(present_pool, present_per_scene)) {
            scene.present.push_back("g" + std::to_string(k));
        }
        for (auto k : rng.distinct(confusable_pool, confusable_per_scene)) {
            scene.confusable.push_back("h" + std::to_string(k));
        }
        scene.attribute = rng.below(kAttributes);
    }

    const auto easy_count = static_cast<std::size_t>(std::llround(spec.easy_fraction * spec.pairs));
    std::vector<bool> is_easy(spec.pairs, false);
    std::fill(is_easy.begin(), is_easy.begin() + easy_count, true);
    for (std::size_t i = spec.pairs; i > 1; --i) {
        const std::size_t j = rng.below(i);
        const bool tmp = is_easy[i - 1];
        is_easy[i - 1] = is_easy[j];
        is_easy[j] = tmp;
    }

    const double noise = 0.02 * spec.scale;
    const double drop = spec.gap_strength * spec.scale;
    auto clamp = [&](double s) { return std::clamp(s, -spec.scale, spec.scale); };

    SyntheticCorpus out;
    out.corpus.reserve(spec.pairs);
    out.scores.reserve(spec.pairs);
    for (std::size_t k = 0; k < spec.pairs; ++k) {
        const std::size_t image = k % spec.images;
        const Scene& scene = scenes[image];
        char id[32];
        std::snprintf(id, sizeof(id), "pair-%05zu", k);

        std::vector<Sentence> chosen(spec.sentences);
        for (auto& c : chosen) {
            auto picks = rng.distinct(scene.present.size(), 2);
            c = {scene.attribute, scene.present[picks[0]], scene.present[picks[1]]};
        }
        auto rejected = chosen;
        std::vector<double> penalty(spec.sentences, 0.0);
        if (is_easy[k]) {
            // Every sentence but one loses both of its objects.
            for (auto s : rng.distinct(spec.sentences, spec.sentences - 1)) {
                auto picks = rng.distinct(scene.confusable.size(), 2);
                rejected[s].first = scene.confusable[picks[0]];
                rejected[s].second = scene.confusable[picks[1]];
                penalty[s] = drop;
            }
        } else {
            // A single wrong attribute in one sentence.
            const std::size_t s = rng.below(spec.sentences);
            rejected[s].attribute = (scene.attribute + 1 + rng.below(kAttributes - 1)) % kAttributes;
            penalty[s] = 0.1 * drop;
        }

        PreferenceInstance inst;
        inst.id = id;
        inst.prompt = "describe image " + std::to_string(image) + " in detail.";
        inst.image_ref = "img-" + std::to_string(image);
        SimilarityRecord rec;
        rec.instance_id = inst.id;
        const double base = spec.scale * (0.2 + 0.1 * rng.unit());
        for (std::size_t s = 0; s < spec.sentences; ++s) {
            inst.chosen += (s ? " " : "") + render(chosen[s]);
            inst.rejected += (s ? " " : "") + render(rejected[s]);
            rec.chosen_scores.push_back(clamp(base + noise * (2.0 * rng.unit() - 1.0)));
            rec.rejected_scores.push_back(clamp(base + noise * (2.0 * rng.unit() - 1.0) - penalty[s]));
        }
        inst.extra["bucket"] = is_easy[k] ? "easy" : "hard";
        out.corpus.push_back(std::move(inst));
        out.scores.push_back(std::move(rec));
    }
    return out;
}

}  // namespace dama
