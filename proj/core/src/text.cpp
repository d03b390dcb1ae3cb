// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include "regioncap/text.hpp"

#include <cctype>

namespace regioncap::text {

namespace {

bool alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    const auto uc = static_cast<unsigned char>(c);
    if (std::isspace(uc)) {
      flush();
    } else if (uc < 128 && std::ispunct(uc)) {
      const bool joiner = (c == '-' || c == '\'') && !cur.empty() && alnum(cur.back()) &&
                          i + 1 < s.size() && alnum(s[i + 1]);
      if (joiner) {
        cur.push_back(c);
      } else {
        flush();
        out.emplace_back(1, c);
      }
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> tokenize(std::string_view s) {
  auto words = split_words(s);
  for (auto& w : words) w = to_lower(w);
  return words;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  bool glue_next = true;
  for (const auto& t : tokens) {
    const bool closing = t.size() == 1 && std::string_view(".,;:!?)").find(t[0]) != std::string_view::npos;
    if (!glue_next && !closing) out.push_back(' ');
    out += t;
    glue_next = t == "(";
  }
  return out;
}

}  // namespace regioncap::text
