#include "dama/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "dama/error.hpp"
#include "dama/numeric.hpp"

namespace dama {

namespace {

using nlohmann::json;

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    return out;
}

std::string where(const std::string& source, std::size_t line) {
    return source + ":" + std::to_string(line);
}

json parse_line(const std::string& line, const std::string& source, std::size_t line_no) {
    try {
        json j = json::parse(line);
        if (!j.is_object()) {
            throw InputError(where(source, line_no) + ": expected a JSON object");
        }
        return j;
    } catch (const json::parse_error& e) {
        throw InputError(where(source, line_no) + ": malformed JSON (" + e.what() + ")");
    }
}

std::string require_string(const json& j, const char* field, const std::string& source, std::size_t line_no) {
    auto it = j.find(field);
    if (it == j.end()) {
        throw InputError(where(source, line_no) + ": missing field '" + field + "'");
    }
    if (!it->is_string()) {
        throw InputError(where(source, line_no) + ": field '" + field + "' must be a string");
    }
    return it->get<std::string>();
}

template <typename T>
std::vector<T> require_array(const json& j, const char* field, const std::string& source, std::size_t line_no) {
    auto it = j.find(field);
    if (it == j.end()) {
        throw InputError(where(source, line_no) + ": missing field '" + field + "'");
    }
    if (!it->is_array()) {
        throw InputError(where(source, line_no) + ": field '" + field + "' must be an array");
    }
    try {
        return it->get<std::vector<T>>();
    } catch (const json::exception&) {
        throw InputError(where(source, line_no) + ": field '" + field + "' has elements of the wrong type");
    }
}

/// Calls `fn(json, line_no)` for every non-blank line.
template <typename Fn>
void for_each_record(std::istream& in, const std::string& source, Fn&& fn) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
            continue;
        }
        fn(parse_line(line, source, line_no), line_no);
    }
}

void write_lines(const std::filesystem::path& path, const std::vector<json>& rows) {
    auto out = open_output(path);
    for (const auto& row : rows) {
        out << row.dump() << '\n';
    }
    if (!out) {
        throw InputError("failed writing " + path.string());
    }
}

std::string trim(std::string_view s) {
    auto begin = s.find_first_not_of(" \t\r\n\f\v");
    if (begin == std::string_view::npos) {
        return {};
    }
    auto end = s.find_last_not_of(" \t\r\n\f\v");
    return std::string(s.substr(begin, end - begin + 1));
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
            throw InputError("duplicate vocabulary token '" + tokens_[i] + "'");
        }
    }
}

TokenId Vocabulary::lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnknownToken : it->second;
}

TokenId Vocabulary::insert(const std::string& token) {
    auto [it, inserted] = index_.emplace(token, static_cast<TokenId>(tokens_.size()));
    if (inserted) {
        tokens_.push_back(token);
    }
    return it->second;
}

// ---------------------------------------------------------------- corpus I/O

std::vector<PreferenceInstance> parse_corpus(std::istream& in, const std::string& source_name) {
    std::vector<PreferenceInstance> corpus;
    std::unordered_map<std::string, std::size_t> seen;
    for_each_record(in, source_name, [&](const json& j, std::size_t line_no) {
        PreferenceInstance inst;
        inst.id = require_string(j, "id", source_name, line_no);
        inst.prompt = require_string(j, "prompt", source_name, line_no);
        inst.chosen = require_string(j, "chosen", source_name, line_no);
        inst.rejected = require_string(j, "rejected", source_name, line_no);
        if (auto it = j.find("image_ref"); it != j.end() && !it->is_null()) {
            if (!it->is_string()) {
                throw InputError(where(source_name, line_no) + ": field 'image_ref' must be a string");
            }
            inst.image_ref = it->get<std::string>();
        }
        for (const auto& [key, value] : j.items()) {
            if (key != "id" && key != "prompt" && key != "chosen" && key != "rejected" && key != "image_ref") {
                inst.extra[key] = value;
            }
        }
        if (inst.id.empty()) {
            throw InputError(where(source_name, line_no) + ": field 'id' is empty");
        }
        if (inst.chosen.empty() || inst.rejected.empty()) {
            throw InputError(where(source_name, line_no) + ": chosen and rejected must be non-empty (id '" +
                             inst.id + "')");
        }
        if (inst.chosen == inst.rejected) {
            throw InputError(where(source_name, line_no) + ": chosen and rejected are identical (id '" + inst.id +
                             "')");
        }
        if (auto [it, inserted] = seen.emplace(inst.id, line_no); !inserted) {
            throw InputError(where(source_name, line_no) + ": duplicate id '" + inst.id + "' (first seen on line " +
                             std::to_string(it->second) + ")");
        }
        corpus.push_back(std::move(inst));
    });
    return corpus;
}

std::vector<PreferenceInstance> load_corpus(const std::filesystem::path& path) {
    auto in = open_input(path);
    return parse_corpus(in, path.string());
}

void write_corpus(const std::filesystem::path& path, const std::vector<PreferenceInstance>& corpus) {
    std::vector<json> rows;
    rows.reserve(corpus.size());
    for (const auto& inst : corpus) {
        json j = json::object();
        j["id"] = inst.id;
        j["prompt"] = inst.prompt;
        j["chosen"] = inst.chosen;
        j["rejected"] = inst.rejected;
        if (inst.image_ref) {
            j["image_ref"] = *inst.image_ref;
        }
        for (const auto& [key, value] : inst.extra.items()) {
            j[key] = value;
        }
        rows.push_back(std::move(j));
    }
    write_lines(path, rows);
}

std::vector<SubSentences> load_subsentences(const std::filesystem::path& path) {
    auto in = open_input(path);
    const std::string source = path.string();
    std::vector<SubSentences> out;
    for_each_record(in, source, [&](const json& j, std::size_t line_no) {
        SubSentences s;
        s.instance_id = require_string(j, "instance_id", source, line_no);
        s.chosen_parts = require_array<std::string>(j, "chosen_parts", source, line_no);
        s.rejected_parts = require_array<std::string>(j, "rejected_parts", source, line_no);
        if (s.chosen_parts.empty() || s.rejected_parts.empty()) {
            throw InputError(where(source, line_no) + ": sub-sentence lists must be non-empty");
        }
        out.push_back(std::move(s));
    });
    return out;
}

void write_subsentences(const std::filesystem::path& path, const std::vector<SubSentences>& parts) {
    std::vector<json> rows;
    for (const auto& s : parts) {
        rows.push_back({{"instance_id", s.instance_id},
                        {"chosen_parts", s.chosen_parts},
                        {"rejected_parts", s.rejected_parts}});
    }
    write_lines(path, rows);
}

std::vector<SimilarityRecord> load_scores(const std::filesystem::path& path) {
    auto in = open_input(path);
    const std::string source = path.string();
    std::vector<SimilarityRecord> out;
    for_each_record(in, source, [&](const json& j, std::size_t line_no) {
        SimilarityRecord r;
        r.instance_id = require_string(j, "instance_id", source, line_no);
        r.chosen_scores = require_array<double>(j, "chosen_scores", source, line_no);
        r.rejected_scores = require_array<double>(j, "rejected_scores", source, line_no);
        out.push_back(std::move(r));
    });
    return out;
}

void write_scores(const std::filesystem::path& path, const std::vector<SimilarityRecord>& scores) {
    std::vector<json> rows;
    for (const auto& r : scores) {
        rows.push_back({{"instance_id", r.instance_id},
                        {"chosen_scores", r.chosen_scores},
                        {"rejected_scores", r.rejected_scores}});
    }
    write_lines(path, rows);
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
    auto in = open_input(path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": malformed JSON (" + e.what() + ")");
    }
    auto it = j.find("tokens");
    if (it == j.end() || !it->is_array()) {
        throw InputError(path.string() + ": missing array field 'tokens'");
    }
    return Vocabulary(it->get<std::vector<std::string>>());
}

void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
    auto out = open_output(path);
    out << json{{"tokens", vocab.tokens()}}.dump() << '\n';
}

// ---------------------------------------------------------------- splitting

std::vector<std::string> split_response(const std::string& text) {
    std::vector<std::string> sentences;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if ((c == '.' || c == '!' || c == '?') && i + 1 < text.size() && is_space(text[i + 1])) {
            sentences.push_back(text.substr(start, i + 1 - start));
            start = i + 1;
        }
    }
    sentences.push_back(text.substr(start));

    std::vector<std::string> parts;
    for (const auto& sentence : sentences) {
        std::size_t from = 0;
        while (true) {
            const std::size_t at = sentence.find("; ", from);
            const std::string piece = trim(std::string_view(sentence).substr(from, at == std::string::npos
                                                                                        ? std::string::npos
                                                                                        : at - from));
            if (!piece.empty()) {
                parts.push_back(piece);
            }
            if (at == std::string::npos) {
                break;
            }
            from = at + 2;
        }
    }
    if (parts.empty()) {
        parts.push_back(text);
    }
    return parts;
}

SubSentences split_sentences(const PreferenceInstance& instance) {
    return {instance.id, split_response(instance.chosen), split_response(instance.rejected)};
}

// ---------------------------------------------------------------- mock scorer

SimilarityRecord mock_similarity_scores(const PreferenceInstance& instance, const SubSentences& parts, double scale,
                                        std::uint64_t seed) {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw InputError("mock similarity scale must be a positive finite number");
    }
    const std::uint64_t id_hash = fnv1a64(instance.id);
    auto score = [&](std::size_t index, const std::string& text) {
        std::uint64_t h = splitmix64(id_hash ^ splitmix64(seed));
        h = splitmix64(h ^ static_cast<std::uint64_t>(index));
        h = splitmix64(h ^ fnv1a64(text));
        const double unit = static_cast<double>(h >> 11) * 0x1.0p-53;  // [0, 1)
        return scale * (2.0 * unit - 1.0);
    };
    SimilarityRecord rec;
    rec.instance_id = instance.id;
    std::size_t index = 0;
    for (const auto& p : parts.chosen_parts) {
        rec.chosen_scores.push_back(score(index++, p));
    }
    for (const auto& p : parts.rejected_parts) {
        rec.rejected_scores.push_back(score(index++, p));
    }
    return rec;
}

// ---------------------------------------------------------------- tokenization

std::size_t context_id_for(const std::string& prompt, std::size_t context_count) {
    if (context_count == 0) {
        throw InputError("context_count must be positive");
    }
    return static_cast<std::size_t>(splitmix64(fnv1a64(prompt)) % context_count);
}

std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) {
        std::transform(tok.begin(), tok.end(), tok.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        out.push_back(std::move(tok));
    }
    return out;
}

TokenizeResult tokenize(const std::vector<PreferenceInstance>& corpus, const std::optional<Vocabulary>& vocab,
                        std::size_t context_count) {
    if (corpus.empty() && !vocab) {
        throw InputError("tokenize needs a non-empty corpus or a vocabulary");
    }
    TokenizeResult result;
    const bool build = !vocab.has_value();
    if (build) {
        result.vocab.insert(kUnknownText);
    } else {
        result.vocab = *vocab;
    }
    auto encode = [&](const std::string& text, const std::string& id) {
        std::vector<TokenId> ids;
        for (const auto& tok : whitespace_tokens(text)) {
            ids.push_back(build ? result.vocab.insert(tok) : result.vocab.lookup(tok));
        }
        if (ids.empty()) {
            throw InputError("instance '" + id + "' has a response with no tokens");
        }
        return ids;
    };
    result.instances.reserve(corpus.size());
    for (const auto& inst : corpus) {
        TokenizedInstance t;
        t.instance_id = inst.id;
        t.context_id = context_id_for(inst.prompt, context_count);
        t.chosen_tokens = encode(inst.chosen, inst.id);
        t.rejected_tokens = encode(inst.rejected, inst.id);
        result.instances.push_back(std::move(t));
    }
    return result;
}

}  // namespace dama
