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

#include <stdexcept>
#include <string>

namespace hrcdet {

/// A file could not be opened, read, or written.
struct FileError : std::runtime_error {
    explicit FileError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A file exists but its contents do not match the expected format
/// (bad magic, version, CRC, truncation, schema violation).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A configuration value or combination of values is unusable.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hrcdet
