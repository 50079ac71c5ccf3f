#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vtunet/rng.hpp"
#include "vtunet/tensor.hpp"

namespace vtunet {

/// Named trainable tensors in registration order. Names are dotted paths
/// ("enc.0.blk.0.regular.attn.w_q") and are stable across runs.
class ParamStore {
public:
    /// Registers a leaf filled with U(-bound, bound) draws from rng.
    Tensor add_uniform(const std::string& name, Shape shape, double bound, Rng& rng);
    Tensor add_constant(const std::string& name, Shape shape, double value);
    /// Registers an existing tensor (used by checkpoint loading).
    Tensor add(const std::string& name, Tensor value);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

    /// Total number of scalar values.
    std::size_t value_count() const;

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace vtunet
