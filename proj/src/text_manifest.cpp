#include "vtunet/text_manifest.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "vtunet/error.hpp"

namespace vtunet {

void TextManifest::set(const std::string& key, const std::string& value) {
    if (key.empty() || key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
        throw FormatError("invalid manifest entry '" + key + "'");
    }
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

void TextManifest::set_real(const std::string& key, double value) { set(key, format_real(value)); }

bool TextManifest::has(const std::string& key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return true;
    }
    return false;
}

const std::string& TextManifest::get(const std::string& key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return v;
    }
    throw FormatError(source_ + ": missing field '" + key + "'");
}

std::string TextManifest::get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
}

std::size_t TextManifest::get_size(const std::string& key) const {
    const std::string& text = get(key);
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) {
        throw FormatError(source_ + ": field '" + key + "' is not a non-negative integer: '" + text + "'");
    }
    return v;
}

std::int64_t TextManifest::get_int(const std::string& key) const {
    const std::string& text = get(key);
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) {
        throw FormatError(source_ + ": field '" + key + "' is not an integer: '" + text + "'");
    }
    return v;
}

double TextManifest::get_real(const std::string& key) const {
    const std::string& text = get(key);
    double v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) {
        throw FormatError(source_ + ": field '" + key + "' is not a number: '" + text + "'");
    }
    return v;
}

bool TextManifest::get_bool(const std::string& key) const {
    const std::string& text = get(key);
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw FormatError(source_ + ": field '" + key + "' is not a boolean: '" + text + "'");
}

std::string TextManifest::serialize() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

TextManifest TextManifest::parse(const std::string& text, const std::string& source) {
    TextManifest m;
    m.source_ = source;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError(source + ": line " + std::to_string(lineno) + " is not key=value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw FormatError(source + ": line " + std::to_string(lineno) + " has an empty key");
        m.set(key, trim(line.substr(eq + 1)));
    }
    return m;
}

TextManifest TextManifest::read_file(const std::string& path) { return parse(read_bytes(path), path); }

void TextManifest::write_file(const std::string& path) const { write_bytes(path, serialize()); }

std::string format_real(double value) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, p);
}

std::string format_extents(const std::vector<std::size_t>& extents) {
    std::string out;
    for (std::size_t i = 0; i < extents.size(); ++i) {
        if (i) out += 'x';
        out += std::to_string(extents[i]);
    }
    return out;
}

std::vector<std::size_t> parse_extents(const std::string& text, const std::string& what) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto next = text.find_first_of("x,", pos);
        const std::string part = text.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        std::size_t v = 0;
        auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (part.empty() || ec != std::errc() || p != part.data() + part.size() || v == 0) {
            throw FormatError(what + ": malformed extents '" + text + "'");
        }
        out.push_back(v);
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path);
}

}  // namespace vtunet
