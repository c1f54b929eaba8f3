#include "surge/config.hpp"

#include "surge/error.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <sstream>

namespace surge {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw Error(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw Error(key + ": expected a number, got '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw Error(key + ": expected true or false, got '" + v + "'");
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

using Setter = std::function<void(TrainConfig&, const std::string&)>;
using Getter = std::function<std::string(const TrainConfig&)>;

struct Field {
    std::string key;
    bool required;
    Setter set;
    Getter get;
};

template <typename T>
Field size_field(std::string key, bool required, T TrainConfig::*member) {
    return {key, required,
            [key, member](TrainConfig& c, const std::string& v) { c.*member = static_cast<T>(parse_size(key, v)); },
            [member](const TrainConfig& c) { return std::to_string(c.*member); }};
}

Field double_field(std::string key, bool required, double TrainConfig::*member) {
    return {key, required, [key, member](TrainConfig& c, const std::string& v) { c.*member = parse_double(key, v); },
            [member](const TrainConfig& c) { return format_double(c.*member); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> all = {
        size_field("n_triplets", true, &TrainConfig::n_triplets),
        size_field("k_samples", true, &TrainConfig::k_samples),
        double_field("lr", true, &TrainConfig::lr),
        double_field("weight_decay", true, &TrainConfig::weight_decay),
        double_field("warmup_ratio", true, &TrainConfig::warmup_ratio),
        size_field("batch_size", true, &TrainConfig::batch_size),
        size_field("epochs", true, &TrainConfig::epochs),
        size_field("max_hist_len", true, &TrainConfig::max_hist_len),
        size_field("max_know_len", true, &TrainConfig::max_know_len),
        size_field("seed", true, &TrainConfig::seed),
        {"mode", true, [](TrainConfig& c, const std::string& v) { c.mode = parse_mode(v); },
         [](const TrainConfig& c) { return to_string(c.mode); }},
        size_field("d_model", false, &TrainConfig::d_model),
        size_field("n_heads", false, &TrainConfig::n_heads),
        size_field("n_enc_layers", false, &TrainConfig::n_enc_layers),
        size_field("n_dec_layers", false, &TrainConfig::n_dec_layers),
        size_field("ffn_width", false, &TrainConfig::ffn_width),
        size_field("max_positions", false, &TrainConfig::max_positions),
        size_field("gnn_layers", false, &TrainConfig::gnn_layers),
        size_field("max_resp_len", false, &TrainConfig::max_resp_len),
        {"khop", false,
         [](TrainConfig& c, const std::string& v) { c.khop = static_cast<int>(parse_size("khop", v)); },
         [](const TrainConfig& c) { return std::to_string(c.khop); }},
        size_field("max_candidates", false, &TrainConfig::max_candidates),
        double_field("clip_norm", false, &TrainConfig::clip_norm),
        double_field("tau_init", false, &TrainConfig::tau_init),
        {"exhaustive", false, [](TrainConfig& c, const std::string& v) { c.exhaustive = parse_bool("exhaustive", v); },
         [](const TrainConfig& c) { return std::string(c.exhaustive ? "true" : "false"); }},
        {"encoding", false,
         [](TrainConfig& c, const std::string& v) { c.encoding = encoding::parse_variant(v); },
         [](const TrainConfig& c) { return encoding::to_string(c.encoding); }},
        size_field("valid_limit", false, &TrainConfig::valid_limit),
    };
    return all;
}

}  // namespace

std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::Unsupervised:
            return "unsupervised";
        case TrainMode::SemiSupervised:
            return "semi_supervised";
        case TrainMode::Contrastive:
            return "contrastive";
    }
    return "unknown";
}

TrainMode parse_mode(std::string_view name) {
    if (name == "unsupervised") return TrainMode::Unsupervised;
    if (name == "semi_supervised") return TrainMode::SemiSupervised;
    if (name == "contrastive") return TrainMode::Contrastive;
    throw Error("unknown mode: " + std::string(name) + " (expected unsupervised, semi_supervised or contrastive)");
}

void TrainConfig::validate() const {
    if (n_triplets == 0) throw Error("n_triplets must be positive");
    if (k_samples == 0) throw Error("k_samples must be positive");
    if (batch_size == 0) throw Error("batch_size must be positive");
    if (lr < 0.0) throw Error("lr must be non-negative");
    if (weight_decay < 0.0) throw Error("weight_decay must be non-negative");
    if (warmup_ratio < 0.0 || warmup_ratio > 1.0) throw Error("warmup_ratio must lie in [0, 1]");
    if (max_hist_len == 0) throw Error("max_hist_len must be positive");
    if (khop < 1) throw Error("khop must be at least 1");
    if (max_candidates == 0) throw Error("max_candidates must be positive");
    if (clip_norm <= 0.0) throw Error("clip_norm must be positive");
    if (tau_init <= 0.0) throw Error("tau_init must be positive");
    if (max_resp_len == 0) throw Error("max_resp_len must be positive");
    if (max_hist_len + max_know_len > max_positions) {
        throw Error("max_hist_len + max_know_len exceeds max_positions");
    }
}

TrainConfig parse_config(std::istream& in) {
    std::map<std::string, const Field*> by_key;
    for (const auto& f : fields()) {
        by_key[f.key] = &f;
    }
    TrainConfig config;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        if (trim(line).empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("expected 'key = value'", line_no);
        }
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        const auto it = by_key.find(key);
        if (it == by_key.end()) {
            throw ParseError("unknown config key '" + key + "'", line_no);
        }
        if (!seen.insert(key).second) {
            throw ParseError("duplicate config key '" + key + "'", line_no);
        }
        try {
            it->second->set(config, value);
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    for (const auto& f : fields()) {
        if (f.required && !seen.contains(f.key)) {
            throw Error("missing required config key '" + f.key + "'");
        }
    }
    config.validate();
    return config;
}

TrainConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open config " + path.string());
    }
    return parse_config(in);
}

std::string config_snapshot(const TrainConfig& config) {
    std::string out;
    for (const auto& f : fields()) {
        out += f.key + " = " + f.get(config) + "\n";
    }
    return out;
}

}  // namespace surge
