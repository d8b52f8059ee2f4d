#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

// Little-endian binary readers/writers for the model and embedding file
// formats, plus small filesystem helpers.

namespace adrc::io {

struct FileUnreadable : std::runtime_error {
    explicit FileUnreadable(const std::string& what) : std::runtime_error(what) {}
};

inline void write_bytes(std::ostream& os, const void* data, size_t n) {
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline void write_u16le(std::ostream& os, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    write_bytes(os, b, 2);
}

inline void write_u32le(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    write_bytes(os, b, 4);
}

inline void write_u64le(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    write_bytes(os, b, 8);
}

inline void write_i32le(std::ostream& os, int32_t v) { write_u32le(os, static_cast<uint32_t>(v)); }

inline void write_f32le(std::ostream& os, float v) { write_u32le(os, std::bit_cast<uint32_t>(v)); }

inline void write_f64le(std::ostream& os, double v) { write_u64le(os, std::bit_cast<uint64_t>(v)); }

inline void read_bytes(std::istream& is, void* data, size_t n, const char* what) {
    is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
        throw FileUnreadable(std::string("truncated input while reading ") + what);
}

inline uint16_t read_u16le(std::istream& is, const char* what = "u16") {
    unsigned char b[2];
    read_bytes(is, b, 2, what);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t read_u32le(std::istream& is, const char* what = "u32") {
    unsigned char b[4];
    read_bytes(is, b, 4, what);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline uint64_t read_u64le(std::istream& is, const char* what = "u64") {
    unsigned char b[8];
    read_bytes(is, b, 8, what);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline int32_t read_i32le(std::istream& is, const char* what = "i32") {
    return static_cast<int32_t>(read_u32le(is, what));
}

inline float read_f32le(std::istream& is, const char* what = "f32") {
    return std::bit_cast<float>(read_u32le(is, what));
}

inline double read_f64le(std::istream& is, const char* what = "f64") {
    return std::bit_cast<double>(read_u64le(is, what));
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileUnreadable("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileUnreadable("cannot open file for writing: " + path.string());
    out << content;
    if (!out) throw FileUnreadable("write failed: " + path.string());
}

}  // namespace adrc::io
