#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "hidsir/errors.hpp"

namespace hidsir {

// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw Error("format_double: conversion failed");
    return std::string(buf, ptr);
}

// Minimal CSV emitter: optional '#' comment lines, one header row, data rows
// in a fixed column order.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw Error("CsvWriter: cannot open " + path);
    }

    void comment(const std::string& text) { out_ << "# " << text << "\n"; }

    void header(std::span<const std::string> names) {
        for (std::size_t i = 0; i < names.size(); ++i)
            out_ << (i ? "," : "") << names[i];
        out_ << "\n";
    }
    void header(std::initializer_list<std::string> names) {
        header(std::span<const std::string>(names.begin(), names.size()));
    }

    void row(std::span<const double> values) {
        for (std::size_t i = 0; i < values.size(); ++i)
            out_ << (i ? "," : "") << format_double(values[i]);
        out_ << "\n";
    }
    void row(std::initializer_list<double> values) {
        row(std::span<const double>(values.begin(), values.size()));
    }

    // Mixed row: leading label cell followed by numeric cells.
    void row(const std::string& label, std::span<const double> values) {
        out_ << label;
        for (double v : values) out_ << "," << format_double(v);
        out_ << "\n";
    }

    void raw_line(const std::string& line) { out_ << line << "\n"; }

private:
    std::ofstream out_;
};

// FNV-1a 64-bit, used to stamp outputs with the originating config.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[h & 0xf];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

} // namespace hidsir
