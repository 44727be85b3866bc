#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sfanc/errors.hpp"
#include "sfanc/signal.hpp"

namespace sfanc {

namespace detail {

inline std::uint16_t read_u16le(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t read_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_u16le(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace detail

/// Reads a RIFF PCM 16-bit WAV file. Stereo is averaged to mono.
inline Signal read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFoundError(path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t n = bytes.size();

    if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
        throw FormatError("not a RIFF/WAVE file: " + path.string());
    }

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::uint32_t data_len = 0;
    bool have_fmt = false;

    std::size_t off = 12;
    while (off + 8 <= n) {
        const char* id = bytes.data() + off;
        const std::uint32_t sz = detail::read_u32le(p + off + 4);
        off += 8;
        if (off + sz > n) throw FormatError("truncated chunk in " + path.string());
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (sz < 16) throw FormatError("short fmt chunk in " + path.string());
            format = detail::read_u16le(p + off);
            channels = detail::read_u16le(p + off + 2);
            rate = detail::read_u32le(p + off + 4);
            bits = detail::read_u16le(p + off + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = p + off;
            data_len = sz;
        }
        off += sz + (sz & 1);  // chunks are word-aligned
    }

    if (!have_fmt) throw FormatError("missing fmt chunk: " + path.string());
    if (format != 1 || bits != 16) {
        throw FormatError("unsupported encoding (PCM 16-bit only): " + path.string());
    }
    if (channels != 1 && channels != 2) {
        throw FormatError("unsupported channel count: " + path.string());
    }
    if (data == nullptr || data_len == 0) {
        throw EmptyDataError("no audio samples: " + path.string());
    }
    if (rate == 0) throw FormatError("zero sample rate: " + path.string());

    const std::size_t frames = data_len / (2u * channels);
    if (frames == 0) throw EmptyDataError("no audio samples: " + path.string());

    Signal sig;
    sig.sample_rate = static_cast<int>(rate);
    sig.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c) {
            const auto raw = static_cast<std::int16_t>(
                detail::read_u16le(data + 2 * (i * channels + c)));
            acc += static_cast<double>(raw) / 32768.0;
        }
        sig.samples[i] = acc / channels;
    }
    return sig;
}

/// Writes a mono 16-bit PCM WAV. Samples are clamped to [-1, 1]; the
/// write->read round trip is exact to one quantization step (2^-15).
inline void write_wav(const Signal& sig, const std::filesystem::path& path) {
    if (sig.samples.empty()) throw EmptyDataError("write_wav: empty signal");
    if (sig.sample_rate <= 0) throw std::invalid_argument("write_wav: bad rate");

    const auto frames = static_cast<std::uint32_t>(sig.samples.size());
    const std::uint32_t data_len = frames * 2;

    std::string out;
    out.reserve(44 + data_len);
    out.append("RIFF");
    detail::put_u32le(out, 36 + data_len);
    out.append("WAVE");
    out.append("fmt ");
    detail::put_u32le(out, 16);
    detail::put_u16le(out, 1);  // PCM
    detail::put_u16le(out, 1);  // mono
    detail::put_u32le(out, static_cast<std::uint32_t>(sig.sample_rate));
    detail::put_u32le(out, static_cast<std::uint32_t>(sig.sample_rate) * 2);
    detail::put_u16le(out, 2);
    detail::put_u16le(out, 16);
    out.append("data");
    detail::put_u32le(out, data_len);
    for (double x : sig.samples) {
        const auto q = static_cast<long>(
            std::lround(std::clamp(x, -1.0, 1.0) * 32768.0));
        detail::put_u16le(out, static_cast<std::uint16_t>(
                                   std::clamp<long>(q, -32768, 32767)));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("write_wav: cannot open " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("write_wav: write failed: " + path.string());
}

}  // namespace sfanc
