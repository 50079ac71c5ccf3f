#include "vtunet/mac_counter.hpp"

namespace vtunet {

namespace {
thread_local MacCounter* g_active_counter = nullptr;
}

const char* mac_kind_name(MacKind kind) {
    switch (kind) {
        case MacKind::qkv_projection: return "qkv_projection";
        case MacKind::out_projection: return "out_projection";
        case MacKind::attention: return "attention";
        case MacKind::mlp: return "mlp";
        default: return "other";
    }
}

std::uint64_t MacTally::total() const {
    std::uint64_t t = 0;
    for (auto v : by_kind) t += v;
    return t;
}

MacCounter::MacCounter(bool dry_run) : dry_run_(dry_run), previous_(g_active_counter) {
    sections_.push_back(MacSection{"(unattributed)", {}, false, {}});
    g_active_counter = this;
}

MacCounter::~MacCounter() { g_active_counter = previous_; }

MacCounter* MacCounter::active() { return g_active_counter; }

void MacCounter::add(std::uint64_t macs) {
    const std::size_t idx = stack_.empty() ? 0 : stack_.back();
    sections_[idx].tally.by_kind[static_cast<std::size_t>(kind_)] += macs;
}

void MacCounter::note_attention(const AttentionShape& shape) {
    const std::size_t idx = stack_.empty() ? 0 : stack_.back();
    sections_[idx].has_attention = true;
    sections_[idx].attention = shape;
}

MacTally MacCounter::total() const {
    MacTally t;
    for (const auto& s : sections_) {
        for (std::size_t k = 0; k < t.by_kind.size(); ++k) t.by_kind[k] += s.tally.by_kind[k];
    }
    return t;
}

MacSectionScope::MacSectionScope(const std::string& name) : counter_(MacCounter::active()) {
    if (counter_ == nullptr) return;
    counter_->sections_.push_back(MacSection{name, {}, false, {}});
    counter_->stack_.push_back(counter_->sections_.size() - 1);
}

MacSectionScope::~MacSectionScope() {
    if (counter_ != nullptr) counter_->stack_.pop_back();
}

MacKindScope::MacKindScope(MacKind kind) : counter_(MacCounter::active()) {
    if (counter_ == nullptr) return;
    saved_ = counter_->kind_;
    counter_->kind_ = kind;
}

MacKindScope::~MacKindScope() {
    if (counter_ != nullptr) counter_->kind_ = saved_;
}

}  // namespace vtunet
