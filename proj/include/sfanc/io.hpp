#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>

#include "sfanc/errors.hpp"

namespace sfanc {

/// Shortest round-trip decimal form, locale-independent. NaN prints as
/// "nan" so CSV output is byte-stable.
inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Writes a whole file via a temp-and-rename so failures never leave a
/// partial file behind.
inline void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
    const auto tmp = path.parent_path() /
                     (path.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw DataError("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace sfanc
