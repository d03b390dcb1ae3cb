// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include "regioncap/params.hpp"

#include <cstdio>

#include "regioncap/errors.hpp"

namespace regioncap {

std::string_view to_string(Component c) {
  switch (c) {
    case Component::alpha_conv: return "alpha_conv";
    case Component::lr_encoder_trunk: return "lr_encoder_trunk";
    case Component::hr_encoder_1: return "hr_encoder_1";
    case Component::hr_encoder_2: return "hr_encoder_2";
    case Component::adapter: return "adapter";
    case Component::decoder: return "decoder";
  }
  return "unknown";
}

Component component_from_string(std::string_view name) {
  for (Component c : kAllComponents) {
    if (to_string(c) == name) return c;
  }
  throw ConfigError("unknown component '" + std::string(name) + "'");
}

ad::Parameter& ParamStore::add(Component component, std::string name, Matrix init) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  auto p = std::make_unique<ad::Parameter>();
  p->name = name;
  p->value = std::move(init);
  index_.emplace(std::move(name), entries_.size());
  entries_.push_back(Entry{component, std::move(p)});
  return *entries_.back().param;
}

ad::Parameter& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
  return *entries_[it->second].param;
}

const ad::Parameter& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
  return *entries_[it->second].param;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.param->zero_grad();
}

void ParamStore::set_trainable(Component c, bool trainable) {
  for (auto& e : entries_) {
    if (e.component == c) e.param->requires_grad = trainable;
  }
}

std::size_t ParamStore::scalar_count(Component c) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.component == c) n += e.param->value.size();
  }
  return n;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

std::uint64_t hash_param(const ad::Parameter& p, std::uint64_t h) {
  const auto& v = p.value.values();
  return fnv1a(std::string_view(reinterpret_cast<const char*>(v.data()),
                                v.size() * sizeof(double)),
               h);
}

}  // namespace

std::uint64_t ParamStore::checksum(Component c) const {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& e : entries_) {
    if (e.component == c) h = hash_param(*e.param, h);
  }
  return h;
}

std::uint64_t ParamStore::checksum() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& e : entries_) h = hash_param(*e.param, h);
  return h;
}

void ParamStore::copy_values_from(const ParamStore& other) {
  for (auto& e : entries_) {
    const ad::Parameter& src = other.get(e.param->name);
    if (src.value.rows() != e.param->value.rows() ||
        src.value.cols() != e.param->value.cols()) {
      throw ShapeError("parameter '" + e.param->name + "' shape mismatch");
    }
    e.param->value = src.value;
  }
}

Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev,
                     std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

}  // namespace regioncap
