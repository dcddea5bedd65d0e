#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cardiac/errors.hpp"
#include "cardiac/tensor.hpp"

namespace cardiac {

// Ordered named-parameter registry shared by the optimizer and checkpoints.
template <class T>
struct ParamMap {
  std::vector<std::pair<std::string, Tensor<T>>> items;

  void add(std::string name, Tensor<T> t) {
    for (auto& [n, _] : items)
      if (n == name) throw ConfigError("duplicate parameter name: " + name);
    items.emplace_back(std::move(name), std::move(t));
  }

  Tensor<T>* find(const std::string& name) {
    for (auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }

  size_t total_scalars() const {
    size_t n = 0;
    for (auto& [_, t] : items) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : items) t.zero_grad();
  }
};

}  // namespace cardiac
