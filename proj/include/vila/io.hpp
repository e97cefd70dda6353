#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vila/dsp.hpp"

namespace vila::io {

// Mono PCM WAV, 16-bit integer or 32-bit float.
dsp::RawClip read_wav(const std::filesystem::path& path);
void write_wav_f32(const std::filesystem::path& path, const dsp::RawClip& clip);

// Single-column sample list with a `sample_rate_hz=<int>` header row.
dsp::RawClip read_sample_csv(const std::filesystem::path& path);
void write_sample_csv(const std::filesystem::path& path,
                      const dsp::RawClip& clip);

// SPEC1 container: little-endian {magic "SPEC1", u32 n_frames, u32 n_mels,
// f64 rate}, then row-major float32 values.
void write_spec1(const std::filesystem::path& path, const dsp::Spectrogram& s);
dsp::Spectrogram read_spec1(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_spec1(const dsp::Spectrogram& s);

// 8-bit binary PGM (P5); values scaled to [0,1].
Eigen::MatrixXd read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Eigen::MatrixXd& img);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& bytes);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     const std::string& text);

// FNV-1a 64 of a file's bytes as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace vila::io
