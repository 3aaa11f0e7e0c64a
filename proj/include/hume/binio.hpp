#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "hume/common.hpp"

namespace hume::io {

// Little-endian binary writer that tracks the byte offset so format errors
// can be reported precisely.  All hosts this project targets are
// little-endian; payloads are raw f32/u32 words.
struct ByteWriter {
    std::ofstream out;
    std::uint64_t offset = 0;

    explicit ByteWriter(const std::string& path) : out(path, std::ios::binary) {
        if (!out) throw MissingArtifactError("cannot open for writing: " + path);
    }
    void bytes(const void* p, std::size_t n) {
        out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        offset += n;
    }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void f32(float v) { bytes(&v, 4); }
    void f32s(const std::vector<float>& xs) { bytes(xs.data(), xs.size() * 4); }
};

struct ByteReader {
    std::ifstream in;
    std::uint64_t offset = 0;
    std::string path;

    explicit ByteReader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw MissingArtifactError("cannot open: " + p);
    }
    void bytes(void* p, std::size_t n) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw FormatError("truncated file " + path, offset);
        offset += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    float f32() {
        float v;
        bytes(&v, 4);
        return v;
    }
    void f32s(std::vector<float>& xs, std::size_t n) {
        xs.resize(n);
        bytes(xs.data(), n * 4);
    }
};

}  // namespace hume::io
