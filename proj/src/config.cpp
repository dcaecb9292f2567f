#include "dama/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>

#include "dama/error.hpp"

namespace dama {

namespace {

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out)) {
        throw InputError("config key '" + key + "': not a finite number: '" + v + "'");
    }
    return out;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) {
        throw InputError("config key '" + key + "': not a non-negative integer: '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw InputError("config key '" + key + "': not a boolean: '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"base_beta", [](RunConfig& c, auto& k, auto& v) { c.train.base_beta = parse_double(k, v); }},
        {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = parse_unsigned(k, v); }},
        {"keep_k", [](RunConfig& c, auto& k, auto& v) { c.train.keep_k = parse_unsigned(k, v); }},
        {"gamma", [](RunConfig& c, auto& k, auto& v) { c.train.gamma = parse_double(k, v); }},
        {"epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = parse_unsigned(k, v); }},
        {"learning_rate", [](RunConfig& c, auto& k, auto& v) { c.train.learning_rate = parse_double(k, v); }},
        {"mode", [](RunConfig& c, auto&, auto& v) { c.train.mode = parse_train_mode(v); }},
        {"combine", [](RunConfig& c, auto&, auto& v) { c.train.combine = parse_combine_strategy(v); }},
        {"rho", [](RunConfig& c, auto& k, auto& v) { c.train.rho = parse_double(k, v); }},
        {"filter", [](RunConfig& c, auto&, auto& v) { c.train.filter = parse_filter_strategy(v); }},
        {"hardness_mode", [](RunConfig& c, auto&, auto& v) { c.train.hardness_mode = parse_hardness_mode(v); }},
        {"legacy_eq12_norm", [](RunConfig& c, auto& k, auto& v) { c.train.legacy_eq12_norm = parse_bool(k, v); }},
        {"filter_on_raw", [](RunConfig& c, auto& k, auto& v) { c.train.filter_on_raw = parse_bool(k, v); }},
        {"epsilon", [](RunConfig& c, auto& k, auto& v) { c.train.epsilon = parse_double(k, v); }},
        {"seed", [](RunConfig& c, auto& k, auto& v) { c.train.seed = parse_unsigned(k, v); }},
        {"context_count", [](RunConfig& c, auto& k, auto& v) { c.train.context_count = parse_unsigned(k, v); }},
        {"force_alpha_d_one",
         [](RunConfig& c, auto& k, auto& v) { c.train.force_alpha_d_one = parse_bool(k, v); }},
        {"force_alpha_m_one",
         [](RunConfig& c, auto& k, auto& v) { c.train.force_alpha_m_one = parse_bool(k, v); }},
        {"grad_clip", [](RunConfig& c, auto& k, auto& v) { c.train.grad_clip = parse_double(k, v); }},
        {"threads", [](RunConfig& c, auto& k, auto& v) { c.train.threads = parse_unsigned(k, v); }},
        {"corpus", [](RunConfig& c, auto&, auto& v) { c.corpus = v; }},
        {"hardness", [](RunConfig& c, auto&, auto& v) { c.hardness = v; }},
        {"hardness_summary", [](RunConfig& c, auto&, auto& v) { c.hardness_summary = v; }},
        {"out_dir", [](RunConfig& c, auto&, auto& v) { c.out_dir = v; }},
    };
    return table;
}

bool is_path_key(const std::string& key) {
    return key == "corpus" || key == "hardness" || key == "hardness_summary" || key == "out_dir";
}

std::string bare_key(const std::string& key) {
    auto dot = key.rfind('.');
    return dot == std::string::npos ? key : key.substr(dot + 1);
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& [k, _] : setters()) out.push_back(k);
        return out;
    }();
    return keys;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
    const std::string name = bare_key(key);
    auto it = setters().find(name);
    if (it == setters().end()) {
        throw InputError("unknown config key '" + key + "'");
    }
    it->second(config, name, value);
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides) {
    for (const auto& item : overrides) {
        auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw InputError("override '" + item + "' is not of the form key=value");
        }
        apply_setting(config, item.substr(0, eq), item.substr(eq + 1));
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw InputError(std::string("cannot read config: ") + e.what());
    }
    RunConfig config;
    const auto base = path.parent_path();
    auto apply = [&](const std::string& key, const std::string& value) {
        apply_setting(config, key, value);
        const std::string name = bare_key(key);
        if (is_path_key(name)) {
            std::filesystem::path p = value;
            if (p.is_relative()) {
                apply_setting(config, name, (base / p).string());
            }
        }
    };
    for (const auto& [key, node] : tree) {
        if (node.empty()) {
            apply(key, node.data());
        } else {
            for (const auto& [sub, leaf] : node) {
                apply(key + "." + sub, leaf.data());
            }
        }
    }
    return config;
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"base_beta", c.base_beta},
            {"batch_size", c.batch_size},
            {"keep_k", c.keep_k},
            {"gamma", c.gamma},
            {"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"mode", to_string(c.mode)},
            {"combine", to_string(c.combine)},
            {"rho", c.rho},
            {"filter", to_string(c.filter)},
            {"hardness_mode", to_string(c.hardness_mode)},
            {"legacy_eq12_norm", c.legacy_eq12_norm},
            {"filter_on_raw", c.filter_on_raw},
            {"epsilon", c.epsilon},
            {"seed", c.seed},
            {"context_count", c.context_count},
            {"force_alpha_d_one", c.force_alpha_d_one},
            {"force_alpha_m_one", c.force_alpha_m_one},
            {"grad_clip", c.grad_clip},
            {"threads", c.threads}};
}

nlohmann::json to_json(const RunConfig& c) {
    return {{"train", to_json(c.train)},
            {"data",
             {{"corpus", c.corpus.string()},
              {"hardness", c.hardness.string()},
              {"hardness_summary", c.hardness_summary.string()},
              {"out_dir", c.out_dir.string()}}}};
}

}  // namespace dama
