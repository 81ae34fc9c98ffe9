#include "rfs/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace rfs {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

double parse_real(const std::string& text, const std::string& key) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(v)) {
        throw ConfigError(key, "expected a finite real, got '" + text + "'");
    }
    return v;
}

long long parse_integer(const std::string& text, const std::string& key) {
    const std::string t = trim(text);
    long long v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw ConfigError(key, "expected an integer, got '" + text + "'");
    }
    return v;
}

const ConfigKey& schema_entry(const std::string& key) {
    const auto& schema = config_schema();
    const auto it = std::find_if(schema.begin(), schema.end(), [&](const ConfigKey& k) { return k.key == key; });
    if (it == schema.end()) throw ConfigError(key, "unknown configuration key");
    return *it;
}

void check_value(const ConfigKey& k, const std::string& value) {
    switch (k.type) {
        case ValueType::Real: parse_real(value, k.key); break;
        case ValueType::Integer: parse_integer(value, k.key); break;
        case ValueType::Bool:
            if (value != "true" && value != "false") throw ConfigError(k.key, "expected true or false");
            break;
        case ValueType::Text: break;
        case ValueType::Reals: parse_reals(value, k.key); break;
        case ValueType::Rows:
            for (const auto& row : split(value, ';')) parse_reals(row, k.key);
            break;
        case ValueType::Choice:
            if (std::find(k.choices.begin(), k.choices.end(), value) == k.choices.end()) {
                std::string allowed;
                for (const auto& c : k.choices) allowed += (allowed.empty() ? "" : "|") + c;
                throw ConfigError(k.key, "expected one of " + allowed + ", got '" + value + "'");
            }
            break;
    }
}

}  // namespace

std::vector<double> parse_reals(const std::string& text, const std::string& key) {
    std::vector<double> out;
    for (const auto& part : split(text, ',')) out.push_back(parse_real(part, key));
    if (out.empty()) throw ConfigError(key, "expected a comma-separated list of reals");
    return out;
}

const std::vector<ConfigKey>& config_schema() {
    using V = ValueType;
    static const std::vector<ConfigKey> schema = {
        {"run.seed", V::Integer, "1", "artifact", "base seed; RF_SEED overrides", {}},
        {"run.workers", V::Integer, "1", "artifact", "seed-parallel worker threads", {}},

        {"task.means", V::Rows, "1.5,1.0;0.5,1.5", "pilot-tuned", "class means, rows separated by ';'", {}},
        {"task.vars", V::Reals, "0.1,0.5", "pilot-tuned", "isotropic class variances", {}},
        {"task.priors", V::Reals, "0.5,0.5", "artifact", "class prior weights", {}},
        {"task.temperature", V::Real, "1.0", "artifact", "soft embedding map temperature", {}},

        {"field.kind", V::Choice, "mlp", "artifact", "velocity field used for sampling", {"mlp", "gm", "gm-soft"}},
        {"field.checkpoint", V::Text, "model.rfck", "artifact", "trained network for field.kind = mlp", {}},

        {"train.seed", V::Integer, "1", "artifact", "initialisation and batch seed", {}},
        {"train.iterations", V::Integer, "5000", "artifact", "Adam iterations", {}},
        {"train.batch_size", V::Integer, "256", "artifact", "pairs per batch", {}},
        {"train.learning_rate", V::Real, "0.002", "artifact", "Adam step size", {}},
        {"train.beta1", V::Real, "0.9", "artifact", "Adam first-moment decay", {}},
        {"train.beta2", V::Real, "0.999", "artifact", "Adam second-moment decay", {}},
        {"train.eps", V::Real, "1e-8", "artifact", "Adam epsilon", {}},
        {"train.hidden", V::Reals, "64,64", "artifact", "hidden layer widths", {}},
        {"train.p_uncond", V::Real, "0.1", "artifact", "probability of training on the null embedding", {}},
        {"train.log_every", V::Integer, "100", "artifact", "iterations per loss sample", {}},

        {"sampler.steps", V::Integer, "20", "pilot-tuned", "Euler steps T", {}},
        {"sampler.rf_fraction", V::Real, "1.0", "artifact", "leading fraction of steps that reflect", {}},

        {"guidance.s_high", V::Real, "4", "pilot-tuned", "amplifying weight of the denoising state", {}},
        {"guidance.beta_high", V::Real, "0.7", "published", "interpolation weight of the denoising state", {}},
        {"guidance.s_low", V::Real, "-1", "published", "amplifying weight of the inversion state", {}},
        {"guidance.beta_low", V::Real, "0.3", "published", "interpolation weight of the inversion state", {}},
        {"guidance.gamma", V::Real, "0.5", "published", "merge ratio", {}},
        {"guidance.alpha", V::Integer, "1", "published", "Euler steps per excursion", {}},
        {"guidance.w", V::Real, "1", "artifact", "standard guidance scale (inert for these fields)", {}},

        {"probe.means", V::Rows, "0.5,0;-0.5,0", "artifact", "mixture used by verify-first-order", {}},
        {"probe.vars", V::Reals, "1,1", "artifact", "probe mixture variances", {}},
        {"probe.priors", V::Reals, "0.5,0.5", "artifact", "probe mixture priors", {}},
        {"probe.temperature", V::Real, "1.0", "pilot-tuned", "soft map temperature for the remainder check", {}},
        {"probe.steps", V::Integer, "400", "pilot-tuned", "Euler steps T for first-order probes", {}},
        {"probe.s_high", V::Real, "9", "published", "s_high for first-order probes", {}},
        {"probe.s_low", V::Real, "-1", "published", "s_low for first-order probes", {}},
    };
    return schema;
}

Config Config::defaults() {
    Config c;
    for (const auto& k : config_schema()) c.values_[k.key] = k.default_value;
    return c;
}

Config Config::parse(std::string_view text) {
    Config c = defaults();
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("", "line " + std::to_string(lineno) + ": expected key = value");
        }
        c.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    }
    c.validate();
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void Config::set(const std::string& key, const std::string& value) {
    check_value(schema_entry(key), value);
    values_[key] = value;
}

void Config::apply_env() {
    if (const char* env = std::getenv("RF_SEED"); env && *env) {
        try {
            set("run.seed", env);
        } catch (const ConfigError&) {
            throw ConfigError("RF_SEED", std::string("expected an integer, got '") + env + "'");
        }
    }
}

void Config::validate() const {
    for (const auto& k : config_schema()) check_value(k, raw(k.key));
}

const std::string& Config::raw(const std::string& key) const {
    schema_entry(key);
    return values_.at(key);
}

double Config::real(const std::string& key) const { return parse_real(raw(key), key); }

long long Config::integer(const std::string& key) const { return parse_integer(raw(key), key); }

std::uint64_t Config::unsigned_integer(const std::string& key) const {
    const long long v = integer(key);
    if (v < 0) throw ConfigError(key, "must be non-negative");
    return static_cast<std::uint64_t>(v);
}

bool Config::flag(const std::string& key) const { return raw(key) == "true"; }

std::vector<double> Config::reals(const std::string& key) const { return parse_reals(raw(key), key); }

std::vector<std::vector<double>> Config::rows(const std::string& key) const {
    std::vector<std::vector<double>> out;
    for (const auto& row : split(raw(key), ';')) out.push_back(parse_reals(row, key));
    return out;
}

std::vector<std::pair<std::string, std::string>> Config::entries() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : config_schema()) out.emplace_back(k.key, raw(k.key));
    return out;
}

std::string Config::to_text(bool with_provenance) const {
    std::ostringstream out;
    std::string section;
    for (const auto& k : config_schema()) {
        const std::string sec = k.key.substr(0, k.key.find('.'));
        if (with_provenance && sec != section) {
            if (!section.empty()) out << '\n';
            section = sec;
        }
        if (with_provenance) out << "# " << k.help << " [" << k.provenance << "]\n";
        out << k.key << " = " << raw(k.key) << '\n';
    }
    return out.str();
}

}  // namespace rfs
