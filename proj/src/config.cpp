#include "heatflow/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "heatflow/errors.hpp"

namespace heatflow {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

[[noreturn]] void fail(int line, const std::string& what) {
    throw ParseError("config line " + std::to_string(line) + ": " + what);
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(lineno, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) fail(lineno, "empty section name");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) fail(lineno, "expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(lineno, "empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (cfg.values_.count(full)) fail(lineno, "duplicate key '" + full + "'");
        cfg.values_[full] = value;
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void ExperimentConfig::set_override(const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ParseError("override must look like key=value: " + assignment);
    const std::string key = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    if (key.empty()) throw ParseError("override with empty key: " + assignment);
    values_[key] = value;
    consumed_.erase(key);
    resolved_.erase(key);
}

bool ExperimentConfig::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string* ExperimentConfig::find(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    consumed_.insert(key);
    return &it->second;
}

void ExperimentConfig::record(const std::string& key, const std::string& value) const {
    resolved_[key] = value;
}

double ExperimentConfig::get_double(const std::string& key, std::optional<double> def) const {
    const std::string* raw = find(key);
    if (!raw) {
        if (!def) throw InvalidInputError("config: missing required key '" + key + "'");
        std::ostringstream os;
        os << *def;
        record(key, os.str());
        return *def;
    }
    try {
        std::size_t pos = 0;
        const double v = std::stod(*raw, &pos);
        if (pos != raw->size()) throw std::invalid_argument("trailing characters");
        record(key, *raw);
        return v;
    } catch (const std::exception&) {
        throw ParseError("config: key '" + key + "' is not a number: " + *raw);
    }
}

std::int64_t ExperimentConfig::get_int(const std::string& key,
                                       std::optional<std::int64_t> def) const {
    const std::string* raw = find(key);
    if (!raw) {
        if (!def) throw InvalidInputError("config: missing required key '" + key + "'");
        record(key, std::to_string(*def));
        return *def;
    }
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(raw->data(), raw->data() + raw->size(), v);
    if (ec != std::errc() || ptr != raw->data() + raw->size())
        throw ParseError("config: key '" + key + "' is not an integer: " + *raw);
    record(key, *raw);
    return v;
}

bool ExperimentConfig::get_bool(const std::string& key, std::optional<bool> def) const {
    const std::string* raw = find(key);
    if (!raw) {
        if (!def) throw InvalidInputError("config: missing required key '" + key + "'");
        record(key, *def ? "true" : "false");
        return *def;
    }
    if (*raw == "true" || *raw == "1" || *raw == "yes") {
        record(key, "true");
        return true;
    }
    if (*raw == "false" || *raw == "0" || *raw == "no") {
        record(key, "false");
        return false;
    }
    throw ParseError("config: key '" + key + "' is not a boolean: " + *raw);
}

std::string ExperimentConfig::get_string(const std::string& key,
                                         std::optional<std::string> def) const {
    const std::string* raw = find(key);
    if (!raw) {
        if (!def) throw InvalidInputError("config: missing required key '" + key + "'");
        record(key, *def);
        return *def;
    }
    record(key, *raw);
    return *raw;
}

std::vector<double> ExperimentConfig::get_double_list(const std::string& key) const {
    const std::string* raw = find(key);
    if (!raw) throw InvalidInputError("config: missing required key '" + key + "'");
    std::vector<double> out;
    std::istringstream in(*raw);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw ParseError("config: key '" + key + "' has a non-numeric entry: " + tok);
        }
    }
    if (out.empty()) throw ParseError("config: key '" + key + "' is an empty list");
    record(key, *raw);
    return out;
}

void ExperimentConfig::assert_all_consumed() const {
    std::vector<std::string> unknown;
    for (const auto& [key, value] : values_)
        if (!consumed_.count(key)) unknown.push_back(key);
    if (unknown.empty()) return;
    std::string msg = "config: unknown key(s):";
    for (const auto& k : unknown) msg += " '" + k + "'";
    throw InvalidInputError(msg);
}

std::string ExperimentConfig::serialize_resolved() const {
    std::ostringstream os;
    for (const auto& [key, value] : resolved_) os << key << " = " << value << "\n";
    return os.str();
}

}  // namespace heatflow
