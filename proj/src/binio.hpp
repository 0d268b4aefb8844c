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
//
// Little-endian binary serialization helpers shared by the checkpoint and
// tensor file writers.

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "hrcdet/errors.hpp"

namespace hrcdet::binio {

inline void put_u16(std::string& s, uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& s, uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& s, uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& s, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(s, v);
}

/// Bounds-checked little-endian reader over an in-memory file image.
struct Reader {
    const std::string& buf;
    size_t pos = 0;
    std::string path;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw FormatError("file truncated: " + path);
    }
    uint8_t u8() {
        need(1);
        return static_cast<uint8_t>(buf[pos++]);
    }
    uint16_t u16() {
        need(2);
        uint16_t v = 0;
        for (int i = 0; i < 2; ++i)
            v = static_cast<uint16_t>(v | static_cast<uint16_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i));
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    float f32() {
        const uint32_t v = u32();
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open file: " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot write file: " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw FileError("short write: " + path);
}

}  // namespace hrcdet::binio
