#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace detfuse {

// Plain-text `key = value` file. Blank lines and lines starting with '#' are ignored.
// Later assignments to the same key override earlier ones.
class KeyValueFile {
public:
    KeyValueFile() = default;

    static KeyValueFile parse(const std::string& text, const std::string& origin = "<memory>");
    static KeyValueFile load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    std::optional<std::string> get(const std::string& key) const;

    // Throws DataError naming the file when the key is missing.
    std::string require(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long get_int(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    const std::string& origin() const { return origin_; }

    // Canonical text: keys sorted, one `key = value` per line.
    std::string to_string() const;

private:
    std::map<std::string, std::string> values_;
    std::string origin_;
};

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
double parse_double(std::string_view s, const std::string& what);
long parse_int(std::string_view s, const std::string& what);

// Fixed-point with six decimals, the record format for reals in corpus files.
std::string format_fixed6(double v);
// Round-trip exact decimal representation.
std::string format_exact(double v);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

// 64-bit FNV-1a, used for config hashes in run manifests.
std::uint64_t fnv1a64(std::string_view data);

}  // namespace detfuse
