#include "vila/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vila/rng.hpp"

namespace vila::io {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_le(out, bits);
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_le(out, bits);
}

struct ByteReader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{buf[pos + i]} << (8 * i);
    pos += 4;
    return v;
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
    pos += 2;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{buf[pos + i]} << (8 * i);
    pos += 8;
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  std::string tag(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  void skip(std::size_t n) {
    need(n);
    pos += n;
  }
};

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string file_checksum(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::uint64_t h = fnv1a64(bytes.data(), bytes.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

dsp::RawClip read_wav(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r{bytes};
  if (r.tag(4) != "RIFF") throw std::runtime_error("not a WAV file: " + path.string());
  r.skip(4);
  if (r.tag(4) != "WAVE") throw std::runtime_error("not a WAV file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  dsp::RawClip clip;
  clip.source_id = path.stem().string();

  while (r.pos + 8 <= bytes.size()) {
    const std::string id = r.tag(4);
    const std::uint32_t size = r.u32();
    if (id == "fmt ") {
      format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.skip(6);  // byte rate + block align
      bits = r.u16();
      if (size > 16) r.skip(size - 16);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw std::runtime_error("WAV data before fmt chunk");
      if (channels != 1) throw std::runtime_error("WAV must be mono");
      if (format == 1 && bits == 16) {
        const std::size_t n = size / 2;
        clip.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          const auto v = static_cast<std::int16_t>(r.u16());
          clip.samples[i] = static_cast<double>(v) / 32768.0;
        }
      } else if (format == 3 && bits == 32) {
        const std::size_t n = size / 4;
        clip.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) clip.samples[i] = r.f32();
      } else {
        throw std::runtime_error("unsupported WAV encoding (need PCM16 or float32)");
      }
      clip.sample_rate_hz = static_cast<int>(rate);
      return clip;
    } else {
      r.skip(size + (size & 1));
    }
  }
  throw std::runtime_error("WAV file has no data chunk: " + path.string());
}

void write_wav_f32(const std::filesystem::path& path,
                   const dsp::RawClip& clip) {
  std::vector<std::uint8_t> out;
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(clip.samples.size() * 4);
  for (char c : {'R', 'I', 'F', 'F'}) out.push_back(c);
  put_le<std::uint32_t>(out, 36 + data_size);
  for (char c : {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '}) out.push_back(c);
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, 3);  // IEEE float
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * 4);
  put_le<std::uint16_t>(out, 4);
  put_le<std::uint16_t>(out, 32);
  for (char c : {'d', 'a', 't', 'a'}) out.push_back(c);
  put_le<std::uint32_t>(out, data_size);
  for (double s : clip.samples) put_f32(out, static_cast<float>(s));
  write_file(path, out);
}

dsp::RawClip read_sample_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty clip");
  const std::string prefix = "sample_rate_hz=";
  if (line.rfind(prefix, 0) != 0) {
    throw std::runtime_error("sample CSV missing sample_rate_hz header: " +
                             path.string());
  }
  dsp::RawClip clip;
  clip.sample_rate_hz = std::stoi(line.substr(prefix.size()));
  clip.source_id = path.stem().string();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    clip.samples.push_back(std::stod(line));
  }
  return clip;
}

void write_sample_csv(const std::filesystem::path& path,
                      const dsp::RawClip& clip) {
  std::ostringstream ss;
  ss << "sample_rate_hz=" << clip.sample_rate_hz << "\n";
  ss.precision(17);
  for (double s : clip.samples) ss << s << "\n";
  write_text_file(path, ss.str());
}

std::vector<std::uint8_t> encode_spec1(const dsp::Spectrogram& s) {
  std::vector<std::uint8_t> out;
  for (char c : {'S', 'P', 'E', 'C', '1'}) out.push_back(c);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.values.rows()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.values.cols()));
  put_f64(out, static_cast<double>(s.config.target_rate_hz));
  for (Eigen::Index r = 0; r < s.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.values.cols(); ++c) {
      put_f32(out, static_cast<float>(s.values(r, c)));
    }
  }
  return out;
}

void write_spec1(const std::filesystem::path& path,
                 const dsp::Spectrogram& s) {
  write_file(path, encode_spec1(s));
}

dsp::Spectrogram read_spec1(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r{bytes};
  if (r.tag(5) != "SPEC1") {
    throw std::runtime_error("bad SPEC1 magic: " + path.string());
  }
  const std::uint32_t n_frames = r.u32();
  const std::uint32_t n_mels = r.u32();
  const double rate = r.f64();

  dsp::Spectrogram s;
  s.config.target_rate_hz = static_cast<int>(rate);
  s.config.n_frames = static_cast<int>(n_frames);
  s.config.n_mels = static_cast<int>(n_mels);
  s.source_id = path.stem().string();
  s.values.resize(n_frames, n_mels);
  for (std::uint32_t i = 0; i < n_frames; ++i) {
    for (std::uint32_t j = 0; j < n_mels; ++j) {
      s.values(i, j) = static_cast<double>(r.f32());
    }
  }
  return s;
}

Eigen::MatrixXd read_pgm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) {
      tok.push_back(static_cast<char>(bytes[pos++]));
    }
    return tok;
  };
  if (next_token() != "P5") throw std::runtime_error("not a P5 PGM: " + path.string());
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (maxval <= 0 || maxval > 255) throw std::runtime_error("unsupported PGM maxval");
  ++pos;  // single whitespace after maxval
  if (pos + static_cast<std::size_t>(w) * h > bytes.size()) {
    throw std::runtime_error("truncated PGM: " + path.string());
  }
  Eigen::MatrixXd img(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      img(r, c) = static_cast<double>(bytes[pos++]) / maxval;
    }
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const Eigen::MatrixXd& img) {
  std::vector<std::uint8_t> out;
  const std::string header = "P5\n" + std::to_string(img.cols()) + " " +
                             std::to_string(img.rows()) + "\n255\n";
  out.insert(out.end(), header.begin(), header.end());
  for (Eigen::Index r = 0; r < img.rows(); ++r) {
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      const double v = std::min(1.0, std::max(0.0, img(r, c)));
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
  }
  write_file(path, out);
}

}  // namespace vila::io
