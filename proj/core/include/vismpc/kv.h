#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vismpc {

// Ordered "key = value" text files: scene configs, benchmark tasks, resolved
// run-config snapshots. Lines starting with '#' are comments. Serialization
// is canonical (insertion order, single spaces) so a file hash identifies a
// configuration.
class KvFile {
public:
    void set(const std::string& key, const std::string& value);
    void set_int(const std::string& key, long long v);
    void set_double(const std::string& key, double v);
    void set_doubles(const std::string& key, const std::vector<double>& v);

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const; // throws if missing
    std::string get_or(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key) const;
    long long get_int_or(const std::string& key, long long fallback) const;
    double get_double(const std::string& key) const;
    double get_double_or(const std::string& key, double fallback) const;
    std::vector<double> get_doubles(const std::string& key) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    std::string serialize() const;
    static KvFile parse(const std::string& text);
    static KvFile load(const std::string& path);
    void save(const std::string& path) const;

    // FNV-1a over the canonical serialization
    uint64_t hash() const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
    std::map<std::string, size_t> index_;
};

uint64_t fnv1a64(const void* data, size_t len);
std::string hash_hex(uint64_t h);

} // namespace vismpc
