#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace etcsim {

/// Configuration error with source position, surfaced by the CLI as exit
/// code 2 plus a machine-readable diagnostic line.
class ConfigError : public std::runtime_error {
  public:
    ConfigError(std::string message, int line = 0, std::string field = "")
        : std::runtime_error(message), line_(line), field_(std::move(field)) {}

    [[nodiscard]] int line() const { return line_; }
    [[nodiscard]] const std::string& field() const { return field_; }

  private:
    int line_;
    std::string field_;
};

/// Flat "section.key -> value" view of a config file. Two input formats
/// parse to the same map: INI-style sections with key = value lines, and a
/// JSON object of objects.
class ConfigMap {
  public:
    struct Entry {
        std::string value;
        int line = 0;
    };

    void set(const std::string& key, const std::string& value, int line = 0);

    [[nodiscard]] bool has(const std::string& key) const;
    [[nodiscard]] std::optional<std::string> get(const std::string& key) const;
    [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const;
    [[nodiscard]] double get_double(const std::string& key, double fallback) const;
    [[nodiscard]] long get_long(const std::string& key, long fallback) const;
    [[nodiscard]] std::vector<double> get_doubles(const std::string& key) const;  // comma list
    [[nodiscard]] int line_of(const std::string& key) const;

    /// Keys under `prefix.` (prefix excluded from the result keys).
    [[nodiscard]] std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

    [[nodiscard]] const std::map<std::string, Entry>& entries() const { return entries_; }

    /// Requires the double at `key`; throws ConfigError naming the field.
    [[nodiscard]] double require_double(const std::string& key) const;

  private:
    std::map<std::string, Entry> entries_;
};

/// Detects the format (JSON when the first non-space byte is '{') and
/// parses. Throws ConfigError with a line diagnostic on malformed input.
[[nodiscard]] ConfigMap parse_config(const std::string& content);
[[nodiscard]] ConfigMap parse_config_file(const std::string& path);

}  // namespace etcsim
