// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "regioncap/tensor.hpp"

namespace regioncap {

/// Parameter groups that a training stage can freeze or unfreeze.
enum class Component {
  alpha_conv,
  lr_encoder_trunk,
  hr_encoder_1,
  hr_encoder_2,
  adapter,
  decoder,
};

inline constexpr std::array<Component, 6> kAllComponents = {
    Component::alpha_conv, Component::lr_encoder_trunk, Component::hr_encoder_1,
    Component::hr_encoder_2, Component::adapter, Component::decoder};

std::string_view to_string(Component c);
Component component_from_string(std::string_view name);

/// Owns every named parameter array of a model. Parameter addresses are
/// stable for the lifetime of the store.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  ad::Parameter& add(Component component, std::string name, Matrix init);

  ad::Parameter& get(const std::string& name);
  const ad::Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t size() const noexcept { return entries_.size(); }
  ad::Parameter& at(std::size_t i) { return *entries_[i].param; }
  const ad::Parameter& at(std::size_t i) const { return *entries_[i].param; }
  Component component_of(std::size_t i) const { return entries_[i].component; }

  void zero_grad();
  void set_trainable(Component c, bool trainable);
  std::size_t scalar_count(Component c) const;

  /// FNV-1a over the raw bytes of every array in the component, in
  /// registration order.
  std::uint64_t checksum(Component c) const;
  std::uint64_t checksum() const;

  /// Copies values by name; shapes must match.
  void copy_values_from(const ParamStore& other);

 private:
  struct Entry {
    Component component;
    std::unique_ptr<ad::Parameter> param;
  };
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Deterministic initializers.
Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev,
                     std::mt19937_64& rng);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 14695981039346656037ULL);
std::string hex64(std::uint64_t v);

}  // namespace regioncap
