#include "etcsim/config.hpp"

#include "etcsim/table_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>

namespace etcsim {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

int line_of_offset(const std::string& content, size_t offset) {
    int line = 1;
    for (size_t i = 0; i < offset && i < content.size(); ++i)
        if (content[i] == '\n') ++line;
    return line;
}

void flatten_json(const nlohmann::json& node, const std::string& prefix, ConfigMap& map) {
    if (node.is_object()) {
        for (const auto& [key, value] : node.items()) {
            flatten_json(value, prefix.empty() ? key : prefix + "." + key, map);
        }
        return;
    }
    std::string text;
    if (node.is_string()) {
        text = node.get<std::string>();
    } else if (node.is_boolean()) {
        text = node.get<bool>() ? "true" : "false";
    } else if (node.is_number()) {
        text = format_double(node.get<double>());
    } else if (node.is_array()) {
        std::ostringstream out;
        for (size_t k = 0; k < node.size(); ++k) {
            if (k) out << ',';
            if (node[k].is_number())
                out << format_double(node[k].get<double>());
            else
                out << node[k].get<std::string>();
        }
        text = out.str();
    } else {
        throw ConfigError("unsupported JSON value at " + prefix, 0, prefix);
    }
    map.set(prefix, text, 0);
}

}  // namespace

void ConfigMap::set(const std::string& key, const std::string& value, int line) {
    entries_[key] = Entry{value, line};
}

bool ConfigMap::has(const std::string& key) const { return entries_.count(key) > 0; }

std::optional<std::string> ConfigMap::get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.value;
}

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) const {
    auto v = get(key);
    return v ? *v : fallback;
}

int ConfigMap::line_of(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
}

namespace {

double parse_number(const std::string& text, const std::string& key, int line) {
    const std::string t = trim(text);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end == t.c_str() || *end != '\0')
        throw ConfigError("expected a number for '" + key + "', got '" + t + "'", line, key);
    return v;
}

}  // namespace

double ConfigMap::get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    return parse_number(*v, key, line_of(key));
}

double ConfigMap::require_double(const std::string& key) const {
    auto v = get(key);
    if (!v) throw ConfigError("missing required key '" + key + "'", 0, key);
    return parse_number(*v, key, line_of(key));
}

long ConfigMap::get_long(const std::string& key, long fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    return static_cast<long>(parse_number(*v, key, line_of(key)));
}

std::vector<double> ConfigMap::get_doubles(const std::string& key) const {
    std::vector<double> out;
    auto v = get(key);
    if (!v) return out;
    std::stringstream ss(*v);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (trim(cell).empty()) continue;
        out.push_back(parse_number(cell, key, line_of(key)));
    }
    return out;
}

std::vector<std::string> ConfigMap::keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    const std::string full = prefix + ".";
    for (const auto& [key, entry] : entries_) {
        if (key.rfind(full, 0) == 0) out.push_back(key.substr(full.size()));
    }
    return out;
}

ConfigMap parse_config(const std::string& content) {
    ConfigMap map;

    const size_t first = content.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && content[first] == '{') {
        try {
            flatten_json(nlohmann::json::parse(content), "", map);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(std::string("JSON parse error: ") + e.what(),
                              line_of_offset(content, e.byte));
        }
        return map;
    }

    std::istringstream in(content);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("unterminated section header", lineno);
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty()) throw ConfigError("empty section name", lineno);
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected 'key = value', got '" + t + "'", lineno);
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key", lineno);
        map.set(section.empty() ? key : section + "." + key, value, lineno);
    }
    return map;
}

ConfigMap parse_config_file(const std::string& path) {
    std::string content;
    try {
        content = read_file(path);
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what(), 0, path);
    }
    return parse_config(content);
}

}  // namespace etcsim
