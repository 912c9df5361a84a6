#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace tvssm {

struct WavData {
    unsigned sample_rate = 48000;
    std::vector<double> samples;  // in [-1, 1)
};

// 16-bit PCM mono only; anything else raises IoError.
WavData read_wav(const std::filesystem::path& path);
// Samples are clipped to [-1, 1] before quantization.
void write_wav(const std::filesystem::path& path, std::span<const double> samples, unsigned sample_rate = 48000);

}  // namespace tvssm
