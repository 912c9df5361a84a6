#include "tvssm/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "tvssm/errors.hpp"

namespace tvssm {

namespace {

std::uint32_t le32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
std::uint16_t le16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

void put32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open WAV '" + path.string() + "'");
    const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto bad = [&](const std::string& why) { return IoError("WAV '" + path.string() + "': " + why); };
    if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw bad("not a RIFF/WAVE file");

    WavData w;
    bool have_fmt = false;
    std::size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const unsigned char* chunk = buf.data() + pos;
        const std::uint32_t size = le32(chunk + 4);
        if (pos + 8 + size > buf.size()) throw bad("truncated chunk");
        const unsigned char* body = chunk + 8;
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16) throw bad("short fmt chunk");
            const auto format = le16(body);
            const auto channels = le16(body + 2);
            const auto bits = le16(body + 14);
            if (format != 1) throw bad("only PCM is supported");
            if (channels != 1) throw bad("only mono is supported, got " + std::to_string(channels) + " channels");
            if (bits != 16) throw bad("only 16-bit samples are supported");
            w.sample_rate = le32(body + 4);
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            if (!have_fmt) throw bad("data chunk before fmt chunk");
            w.samples.resize(size / 2);
            for (std::size_t i = 0; i < w.samples.size(); ++i)
                w.samples[i] = static_cast<std::int16_t>(le16(body + 2 * i)) / 32768.0;
            return w;
        }
        pos += 8 + size + (size & 1);
    }
    throw bad("no data chunk");
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples, unsigned sample_rate) {
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    std::string out;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    put32(out, 36 + data_bytes);
    out += "WAVEfmt ";
    put32(out, 16);
    put16(out, 1);
    put16(out, 1);
    put32(out, sample_rate);
    put32(out, sample_rate * 2);
    put16(out, 2);
    put16(out, 16);
    out += "data";
    put32(out, data_bytes);
    for (double s : samples) {
        const double q = std::clamp(std::round(std::clamp(s, -1.0, 1.0) * 32768.0), -32768.0, 32767.0);
        put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write WAV '" + path.string() + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("failed writing WAV '" + path.string() + "'");
}

}  // namespace tvssm
