#include "dama/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "dama/error.hpp"
#include "json.hpp"

namespace dama {

PolicyParams::PolicyParams(std::size_t context_count, std::size_t vocab_size, double fill)
    : context_count_(context_count), vocab_size_(vocab_size), logits_(context_count * vocab_size, fill) {
    if (context_count == 0 || vocab_size == 0) {
        throw InputError("policy shape must be positive in both dimensions");
    }
}

PolicyParams::PolicyParams(std::size_t context_count, std::size_t vocab_size, std::vector<double> logits)
    : context_count_(context_count), vocab_size_(vocab_size), logits_(std::move(logits)) {
    if (context_count == 0 || vocab_size == 0) {
        throw InputError("policy shape must be positive in both dimensions");
    }
    if (logits_.size() != context_count * vocab_size) {
        throw InputError("policy logits do not match the declared shape");
    }
    if (!std::all_of(logits_.begin(), logits_.end(), [](double v) { return std::isfinite(v); })) {
        throw InputError("policy logits must be finite");
    }
}

PolicyParams PolicyParams::random(std::size_t context_count, std::size_t vocab_size, std::uint64_t seed,
                                  double spread) {
    PolicyParams p(context_count, vocab_size);
    std::mt19937_64 rng(seed);
    for (double& v : p.logits_) {
        const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v = spread * (2.0 * unit - 1.0);
    }
    return p;
}

std::span<const double> PolicyParams::row(std::size_t context) const {
    return {logits_.data() + context * vocab_size_, vocab_size_};
}

std::span<double> PolicyParams::row(std::size_t context) {
    return {logits_.data() + context * vocab_size_, vocab_size_};
}

ReferenceSnapshot snapshot_reference(const PolicyParams& params) { return ReferenceSnapshot(params); }

namespace {

void check_ids(const PolicyParams& params, std::size_t context_id, std::span<const TokenId> tokens) {
    if (context_id >= params.context_count()) {
        throw InputError("context id " + std::to_string(context_id) + " out of range (" +
                         std::to_string(params.context_count()) + " contexts)");
    }
    if (tokens.empty()) {
        throw InputError("token sequence is empty");
    }
    for (TokenId t : tokens) {
        if (t >= params.vocab_size()) {
            throw InputError("token id " + std::to_string(t) + " out of range (vocabulary of " +
                             std::to_string(params.vocab_size()) + ")");
        }
    }
}

double log_sum_exp(std::span<const double> row) {
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) {
        s += std::exp(v - m);
    }
    return m + std::log(s);
}

}  // namespace

std::vector<double> row_softmax(const PolicyParams& params, std::size_t context_id) {
    auto row = params.row(context_id);
    const double lse = log_sum_exp(row);
    std::vector<double> p(row.size());
    for (std::size_t v = 0; v < row.size(); ++v) {
        p[v] = std::exp(row[v] - lse);
    }
    return p;
}

double log_prob(const PolicyParams& params, std::size_t context_id, std::span<const TokenId> tokens) {
    check_ids(params, context_id, tokens);
    auto row = params.row(context_id);
    const double lse = log_sum_exp(row);
    double total = 0.0;
    for (TokenId t : tokens) {
        total += row[t] - lse;
    }
    return total;
}

SparseRowGradient log_prob_gradient(const PolicyParams& params, std::size_t context_id,
                                    std::span<const TokenId> tokens) {
    check_ids(params, context_id, tokens);
    SparseRowGradient g;
    g.context_id = context_id;
    g.row = row_softmax(params, context_id);
    const double count = static_cast<double>(tokens.size());
    for (double& v : g.row) {
        v *= -count;
    }
    for (TokenId t : tokens) {
        g.row[t] += 1.0;
    }
    return g;
}

void apply_gradient(PolicyParams& params, std::span<const double> gradient, double learning_rate,
                    double clip_norm) {
    if (gradient.size() != params.logits().size()) {
        throw InputError("gradient shape does not match policy shape");
    }
    if (!(learning_rate > 0.0)) {
        throw InputError("learning rate must be positive");
    }
    double scale = learning_rate;
    if (clip_norm > 0.0) {
        double sq = 0.0;
        for (double g : gradient) {
            sq += g * g;
        }
        const double norm = std::sqrt(sq);
        if (norm > clip_norm) {
            scale *= clip_norm / norm;
        }
    }
    auto& logits = params.logits();
    for (std::size_t i = 0; i < logits.size(); ++i) {
        logits[i] -= scale * gradient[i];
    }
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& policy,
                     const ReferenceSnapshot& reference) {
    const auto& ref = reference.params();
    if (ref.context_count() != policy.context_count() || ref.vocab_size() != policy.vocab_size()) {
        throw InvariantError("reference and policy shapes differ");
    }
    nlohmann::json j = {{"context_count", policy.context_count()},
                        {"vocab_size", policy.vocab_size()},
                        {"logits", policy.logits()},
                        {"reference", ref.logits()}};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    try {
        auto j = nlohmann::json::parse(in);
        const auto contexts = j.at("context_count").get<std::size_t>();
        const auto vocab = j.at("vocab_size").get<std::size_t>();
        return {PolicyParams(contexts, vocab, j.at("logits").get<std::vector<double>>()),
                PolicyParams(contexts, vocab, j.at("reference").get<std::vector<double>>())};
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

}  // namespace dama
