// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace w2t::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitAssertion = 3;

/// Runs one w2t invocation. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses "name>=value" / "name<=value" / "name>value" / "name<value".
struct Assertion {
  std::string metric;
  std::string op;
  double value = 0.0;
};
Assertion parse_assertion(const std::string& text);

}  // namespace w2t::cli
