#include "vtunet/params.hpp"

#include "vtunet/error.hpp"

namespace vtunet {

Tensor ParamStore::add(const std::string& name, Tensor value) {
    if (contains(name)) throw ConfigError("duplicate parameter name " + name);
    if (!value.is_leaf()) throw ConfigError("parameter " + name + " must be a leaf tensor");
    value.impl()->requires_grad = true;
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, value);
    return value;
}

Tensor ParamStore::add_uniform(const std::string& name, Shape shape, double bound, Rng& rng) {
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = rng.uniform(-bound, bound);
    return add(name, Tensor::from(std::move(shape), std::move(values)));
}

Tensor ParamStore::add_constant(const std::string& name, Shape shape, double value) {
    return add(name, Tensor::full(std::move(shape), value));
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return entries_[it->second].second;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return entries_[it->second].second;
}

std::size_t ParamStore::value_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
}

}  // namespace vtunet
