#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vtunet {

/// Buckets for multiply-accumulate counts.
enum class MacKind : std::size_t {
    qkv_projection = 0,
    out_projection,
    attention,
    mlp,
    other,
    count_
};

const char* mac_kind_name(MacKind kind);

struct MacTally {
    std::array<std::uint64_t, static_cast<std::size_t>(MacKind::count_)> by_kind{};

    std::uint64_t operator[](MacKind k) const { return by_kind[static_cast<std::size_t>(k)]; }
    std::uint64_t total() const;
};

/// Geometry of one attention sublayer, noted by the attention code while a
/// counter is active.
struct AttentionShape {
    std::uint64_t tokens = 0;    // tau
    std::uint64_t channels = 0;  // C
    std::uint64_t windows = 0;   // kappa
    std::uint64_t window_tokens = 0;
    std::uint64_t branches = 1;  // 2 for decoder sublayers (self + cross)
};

struct MacSection {
    std::string name;
    MacTally tally;
    bool has_attention = false;
    AttentionShape attention;
};

/// While alive, every matmul/linear on this thread adds its MAC count to the
/// current section. In dry-run mode those kernels skip the arithmetic and
/// return zeros, so counting a large configuration costs almost nothing.
class MacCounter {
public:
    explicit MacCounter(bool dry_run = true);
    ~MacCounter();
    MacCounter(const MacCounter&) = delete;
    MacCounter& operator=(const MacCounter&) = delete;

    static MacCounter* active();

    bool dry_run() const { return dry_run_; }
    void add(std::uint64_t macs);
    void note_attention(const AttentionShape& shape);

    const std::vector<MacSection>& sections() const { return sections_; }
    MacTally total() const;

private:
    friend class MacSectionScope;
    friend class MacKindScope;

    bool dry_run_;
    std::vector<MacSection> sections_;
    std::vector<std::size_t> stack_;
    MacKind kind_ = MacKind::other;
    MacCounter* previous_;
};

/// Opens a named section on the active counter (no-op without one).
class MacSectionScope {
public:
    explicit MacSectionScope(const std::string& name);
    ~MacSectionScope();
    MacSectionScope(const MacSectionScope&) = delete;
    MacSectionScope& operator=(const MacSectionScope&) = delete;

private:
    MacCounter* counter_;
};

/// Sets the bucket that subsequent MACs are charged to.
class MacKindScope {
public:
    explicit MacKindScope(MacKind kind);
    ~MacKindScope();
    MacKindScope(const MacKindScope&) = delete;
    MacKindScope& operator=(const MacKindScope&) = delete;

private:
    MacCounter* counter_;
    MacKind saved_ = MacKind::other;
};

}  // namespace vtunet
