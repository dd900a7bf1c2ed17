#include "vismpc/kv.h"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vismpc {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void KvFile::set(const std::string& key, const std::string& value) {
    auto it = index_.find(key);
    if (it != index_.end()) {
        entries_[it->second].second = value;
    } else {
        index_[key] = entries_.size();
        entries_.emplace_back(key, value);
    }
}

void KvFile::set_int(const std::string& key, long long v) { set(key, std::to_string(v)); }
void KvFile::set_double(const std::string& key, double v) { set(key, format_double(v)); }

void KvFile::set_doubles(const std::string& key, const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ' ';
        s += format_double(v[i]);
    }
    set(key, s);
}

bool KvFile::has(const std::string& key) const { return index_.count(key) != 0; }

const std::string& KvFile::get(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw std::runtime_error("kv: missing key '" + key + "'");
    return entries_[it->second].second;
}

std::string KvFile::get_or(const std::string& key, const std::string& fallback) const {
    auto it = index_.find(key);
    return it == index_.end() ? fallback : entries_[it->second].second;
}

long long KvFile::get_int(const std::string& key) const { return std::stoll(get(key)); }
long long KvFile::get_int_or(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
}
double KvFile::get_double(const std::string& key) const { return std::stod(get(key)); }
double KvFile::get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

std::vector<double> KvFile::get_doubles(const std::string& key) const {
    std::istringstream in(get(key));
    std::vector<double> out;
    double v;
    while (in >> v) out.push_back(v);
    return out;
}

std::string KvFile::serialize() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

KvFile KvFile::parse(const std::string& text) {
    KvFile kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos) throw std::runtime_error("kv: malformed line: " + line);
        kv.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return kv;
}

KvFile KvFile::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("kv: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

void KvFile::save(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("kv: cannot write " + path);
    f << serialize();
}

uint64_t KvFile::hash() const {
    const std::string s = serialize();
    return fnv1a64(s.data(), s.size());
}

uint64_t fnv1a64(const void* data, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xCBF29CE484222325ull;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace vismpc
