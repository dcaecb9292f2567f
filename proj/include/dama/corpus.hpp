#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace dama {

/// One (prompt, chosen, rejected) preference record.
struct PreferenceInstance {
    std::string id;
    std::string prompt;
    std::string chosen;
    std::string rejected;
    std::optional<std::string> image_ref;
    /// Any additional fields found on the line (e.g. the generator's "bucket" label).
    nlohmann::json extra = nlohmann::json::object();

    bool operator==(const PreferenceInstance&) const = default;
};

struct SubSentences {
    std::string instance_id;
    std::vector<std::string> chosen_parts;
    std::vector<std::string> rejected_parts;

    bool operator==(const SubSentences&) const = default;
};

struct SimilarityRecord {
    std::string instance_id;
    std::vector<double> chosen_scores;
    std::vector<double> rejected_scores;

    bool operator==(const SimilarityRecord&) const = default;
};

using TokenId = std::uint32_t;

/// Id 0 is reserved for tokens outside the vocabulary.
inline constexpr TokenId kUnknownToken = 0;
inline constexpr const char* kUnknownText = "<unk>";

class Vocabulary {
public:
    Vocabulary() = default;
    /// `tokens[i]` gets id i. Throws InputError on duplicates.
    explicit Vocabulary(std::vector<std::string> tokens);

    /// Returns the id of `token`, or kUnknownToken.
    [[nodiscard]] TokenId lookup(const std::string& token) const;
    [[nodiscard]] bool contains(const std::string& token) const { return index_.contains(token); }
    /// Appends `token` if absent and returns its id.
    TokenId insert(const std::string& token);

    [[nodiscard]] std::size_t size() const { return tokens_.size(); }
    [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

struct TokenizedInstance {
    std::string instance_id;
    std::size_t context_id = 0;
    std::vector<TokenId> chosen_tokens;
    std::vector<TokenId> rejected_tokens;
};

// ---- ingestion ----

/// Parses corpus.jsonl. Blank lines are skipped but still counted for line numbers.
std::vector<PreferenceInstance> load_corpus(const std::filesystem::path& path);
std::vector<PreferenceInstance> parse_corpus(std::istream& in, const std::string& source_name);
void write_corpus(const std::filesystem::path& path, const std::vector<PreferenceInstance>& corpus);

std::vector<SubSentences> load_subsentences(const std::filesystem::path& path);
void write_subsentences(const std::filesystem::path& path, const std::vector<SubSentences>& parts);

std::vector<SimilarityRecord> load_scores(const std::filesystem::path& path);
void write_scores(const std::filesystem::path& path, const std::vector<SimilarityRecord>& scores);

Vocabulary load_vocabulary(const std::filesystem::path& path);
void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);

// ---- text processing ----

/// Splits on [.!?] followed by whitespace, then on "; ". Never yields empty parts.
std::vector<std::string> split_response(const std::string& text);
SubSentences split_sentences(const PreferenceInstance& instance);

/// Deterministic stand-in for an image-text similarity model. Each score is a
/// hash of (instance id, part index, part text, seed) mapped into [-scale, scale].
SimilarityRecord mock_similarity_scores(const PreferenceInstance& instance, const SubSentences& parts,
                                        double scale, std::uint64_t seed);

/// Stable prompt hash reduced modulo `context_count`.
std::size_t context_id_for(const std::string& prompt, std::size_t context_count);

struct TokenizeResult {
    std::vector<TokenizedInstance> instances;
    Vocabulary vocab;
};

/// Whitespace tokenization after ASCII lowercasing. Without a vocabulary one is
/// built from the corpus (id 0 reserved, then first-appearance order).
TokenizeResult tokenize(const std::vector<PreferenceInstance>& corpus, const std::optional<Vocabulary>& vocab,
                        std::size_t context_count);

std::vector<std::string> whitespace_tokens(const std::string& text);

}  // namespace dama
