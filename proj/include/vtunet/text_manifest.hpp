#pragma once

#include <string>
#include <utility>
#include <vector>

namespace vtunet {

/// Ordered `key=value` text records. Used for checkpoint manifests, volume
/// headers, run manifests and model config files. Blank lines and lines
/// starting with '#' are ignored on input; output order is insertion order,
/// so serialisation is deterministic.
class TextManifest {
public:
    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, const char* value) { set(key, std::string(value)); }
    template <typename T>
    void set(const std::string& key, T value) {
        set(key, std::to_string(value));
    }
    void set_real(const std::string& key, double value);

    bool has(const std::string& key) const;
    /// Throws FormatError naming the key when absent.
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;

    std::size_t get_size(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    double get_real(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    std::string serialize() const;
    static TextManifest parse(const std::string& text, const std::string& source = "manifest");

    static TextManifest read_file(const std::string& path);
    void write_file(const std::string& path) const;

    /// Name shown in error messages.
    const std::string& source() const { return source_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
    std::string source_ = "manifest";
};

/// Shortest decimal text that parses back to exactly `value`.
std::string format_real(double value);

/// "16x64x64" <-> {16, 64, 64}.
std::string format_extents(const std::vector<std::size_t>& extents);
std::vector<std::size_t> parse_extents(const std::string& text, const std::string& what);

/// Whole-file binary I/O.
std::string read_bytes(const std::string& path);
void write_bytes(const std::string& path, const std::string& bytes);

}  // namespace vtunet
