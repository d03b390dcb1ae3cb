// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace regioncap::text {

/// Splits on whitespace; every ASCII punctuation character becomes its own
/// token except '-' and '\'' between two alphanumerics ("45-50", "cat's").
/// Case is preserved.
std::vector<std::string> split_words(std::string_view s);

/// split_words followed by ASCII lowercasing; shared by every metric.
std::vector<std::string> tokenize(std::string_view s);

/// Joins with single spaces, without a space before . , ; : ! ? ) or after (.
std::string detokenize(std::span<const std::string> tokens);

std::string to_lower(std::string_view s);

}  // namespace regioncap::text
