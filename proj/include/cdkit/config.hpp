#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace cdkit {

/// `key = value` text configuration, one pair per line. Lines starting with
/// '#' and blank lines are ignored. Later assignments win, which is how flag
/// overrides are layered on top of a file.
class KvConfig {
public:
    static KvConfig parse_file(const std::string& path);
    static KvConfig parse_text(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;

    /// Canonical serialized form (sorted keys); dumped into the output
    /// directory of every run for provenance.
    std::string dump() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace cdkit
