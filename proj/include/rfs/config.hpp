#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rfs {

inline constexpr const char* kArtifactVersion = "rfs 0.1.0";

/// Raised for malformed or unknown configuration; names the offending key.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string key, const std::string& what)
        : std::invalid_argument(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

enum class ValueType { Real, Integer, Bool, Text, Reals, Rows, Choice };

struct ConfigKey {
    std::string key;
    ValueType type;
    std::string default_value;
    /// Where the default comes from: "published", "pilot-tuned" or "artifact".
    std::string provenance;
    std::string help;
    std::vector<std::string> choices;
};

const std::vector<ConfigKey>& config_schema();

/// Flat dotted key=value configuration, e.g. `guidance.beta_high = 0.7`.
/// '#' starts a comment. Every key has a default; unknown keys are errors.
class Config {
public:
    static Config defaults();
    /// Overlays the text on the defaults and validates every value.
    static Config parse(std::string_view text);
    static Config load(const std::string& path);

    void set(const std::string& key, const std::string& value);
    /// Applies RF_SEED to run.seed when the variable is set.
    void apply_env();
    /// Type-checks every entry in schema order; the first bad key is named.
    void validate() const;

    const std::string& raw(const std::string& key) const;
    double real(const std::string& key) const;
    long long integer(const std::string& key) const;
    std::uint64_t unsigned_integer(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<double> reals(const std::string& key) const;
    /// Rows separated by ';', entries by ','.
    std::vector<std::vector<double>> rows(const std::string& key) const;

    /// Resolved entries in schema order.
    std::vector<std::pair<std::string, std::string>> entries() const;
    /// `key = value` lines; with provenance, each key is preceded by a
    /// comment giving its help text and origin.
    std::string to_text(bool with_provenance = false) const;

private:
    std::map<std::string, std::string> values_;
};

std::vector<double> parse_reals(const std::string& text, const std::string& key = "");

}  // namespace rfs
