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

#include "hrcdet/core.hpp"

namespace hrcdet {

/// Reads an 8-bit PNG into a 1-channel (grayscale) or 3-channel (RGB) grid
/// with values in [0,1]. Palette and 16-bit images are converted; alpha is
/// stripped.
TensorGrid read_png(const std::string& path);

/// Writes a 1- or 3-channel grid as an 8-bit PNG; values are clamped to [0,1].
void write_png(const std::string& path, const TensorGrid& image);

}  // namespace hrcdet
