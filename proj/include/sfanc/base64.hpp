#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace sfanc {

namespace detail {
inline constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}
}  // namespace detail

inline std::string base64_encode(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (std::size_t i = 0; i < n; i += 3) {
        std::uint32_t v = static_cast<std::uint32_t>(p[i]) << 16;
        if (i + 1 < n) v |= static_cast<std::uint32_t>(p[i + 1]) << 8;
        if (i + 2 < n) v |= p[i + 2];
        out.push_back(detail::kB64Alphabet[(v >> 18) & 0x3f]);
        out.push_back(detail::kB64Alphabet[(v >> 12) & 0x3f]);
        out.push_back(i + 1 < n ? detail::kB64Alphabet[(v >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < n ? detail::kB64Alphabet[v & 0x3f] : '=');
    }
    return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& s) {
    if (s.size() % 4 != 0) throw std::invalid_argument("base64: bad length");
    std::vector<unsigned char> out;
    out.reserve(s.size() / 4 * 3);
    for (std::size_t i = 0; i < s.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = s[i + k];
            if (c == '=') {
                vals[k] = 0;
                ++pad;
            } else {
                vals[k] = detail::b64_value(c);
                if (vals[k] < 0 || pad > 0) {
                    throw std::invalid_argument("base64: bad character");
                }
            }
        }
        const std::uint32_t v = (static_cast<std::uint32_t>(vals[0]) << 18) |
                                (static_cast<std::uint32_t>(vals[1]) << 12) |
                                (static_cast<std::uint32_t>(vals[2]) << 6) |
                                static_cast<std::uint32_t>(vals[3]);
        out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<unsigned char>(v & 0xff));
    }
    return out;
}

/// Doubles as a base64 string of little-endian IEEE-754 bytes.
inline std::string doubles_to_b64(const std::vector<double>& v) {
    std::vector<unsigned char> bytes(v.size() * 8);
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &v[i], 8);
        for (int b = 0; b < 8; ++b) {
            bytes[i * 8 + static_cast<std::size_t>(b)] =
                static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
        }
    }
    return base64_encode(bytes.data(), bytes.size());
}

inline std::vector<double> b64_to_doubles(const std::string& s) {
    const auto bytes = base64_decode(s);
    if (bytes.size() % 8 != 0) {
        throw std::invalid_argument("base64: not a double array");
    }
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b) {
            bits = (bits << 8) | bytes[i * 8 + static_cast<std::size_t>(b)];
        }
        std::memcpy(&out[i], &bits, 8);
    }
    return out;
}

}  // namespace sfanc
