// Copyright 2026 The hrcdet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <vector>

namespace hrcdet::cli {

inline constexpr const char* kToolkitVersion = "0.1.0";

/// Entry point behind the `hrcdet` executable. Exit codes: 0 success,
/// 2 flag/usage errors, 3 missing or unreadable/corrupt input files,
/// 4 config file errors, 1 anything else.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  ///< args without argv[0]

}  // namespace hrcdet::cli
