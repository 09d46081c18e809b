#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace heatflow {

/// Flat key-value store parsed from INI-style text. Sections become key
/// prefixes ("[flow]" + "rel_tol" -> "flow.rel_tol"). Lookups go through
/// typed getters that record the resolved value, including applied defaults,
/// so a run can write back exactly the configuration it used.
class ExperimentConfig {
public:
    ExperimentConfig() = default;

    /// Parses config text. Throws ParseError with a line number on malformed
    /// input (missing '=', unterminated section, duplicate key).
    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig parse_file(const std::string& path);

    /// Applies a "key=value" override on top of parsed content.
    void set_override(const std::string& assignment);

    bool has(const std::string& key) const;

    double get_double(const std::string& key, std::optional<double> def = std::nullopt) const;
    std::int64_t get_int(const std::string& key,
                         std::optional<std::int64_t> def = std::nullopt) const;
    bool get_bool(const std::string& key, std::optional<bool> def = std::nullopt) const;
    std::string get_string(const std::string& key,
                           std::optional<std::string> def = std::nullopt) const;
    std::vector<double> get_double_list(const std::string& key) const;

    /// Throws InvalidInputError naming every stored key that was never read.
    void assert_all_consumed() const;

    /// Key-sorted "key = value" lines of every resolved lookup.
    std::string serialize_resolved() const;

private:
    const std::string* find(const std::string& key) const;
    void record(const std::string& key, const std::string& value) const;

    std::map<std::string, std::string> values_;
    mutable std::map<std::string, std::string> resolved_;
    mutable std::set<std::string> consumed_;
};

}  // namespace heatflow
