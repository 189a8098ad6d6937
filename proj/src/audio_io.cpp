#include "ambicodec/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "ambicodec/errors.hpp"
#include "ambicodec/rng.hpp"

namespace ambicodec::audio {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace

Wave read_wav(const std::string& path) {
  const std::vector<unsigned char> bytes = read_file(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError("malformed RIFF header: " + path);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  size_t data_offset = 0, data_size = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t chunk_size = read_u32(bytes.data() + pos + 4);
    const size_t body = pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (body + 16 > bytes.size() || chunk_size < 16)
        throw DataError("malformed RIFF header: truncated fmt chunk");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      sample_rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_offset = body;
      data_size = chunk_size;
      if (data_offset + data_size > bytes.size())
        throw DataError("truncated data chunk: " + path);
      break;
    }
    pos = body + chunk_size + (chunk_size % 2);  // chunks are word-aligned
  }
  if (!have_fmt || data_offset == 0)
    throw DataError("malformed RIFF header: missing fmt or data chunk");
  if (channels == 0 || sample_rate == 0)
    throw DataError("malformed RIFF header: empty format");

  int bytes_per_sample = 0;
  if (format == kFormatPcm && bits == 16) bytes_per_sample = 2;
  else if (format == kFormatPcm && bits == 24) bytes_per_sample = 3;
  else if (format == kFormatFloat && bits == 32) bytes_per_sample = 4;
  else
    throw DataError("unsupported codec tag or bit depth in " + path);

  const size_t frame_bytes = static_cast<size_t>(bytes_per_sample) * channels;
  const size_t frames = data_size / frame_bytes;

  Wave wave;
  wave.sample_rate = sample_rate;
  wave.samples.resize(channels, static_cast<Index>(frames));
  const unsigned char* d = bytes.data() + data_offset;
  for (size_t t = 0; t < frames; ++t) {
    for (int c = 0; c < channels; ++c) {
      const unsigned char* s = d + t * frame_bytes + static_cast<size_t>(c) * bytes_per_sample;
      double v = 0.0;
      if (bytes_per_sample == 2) {
        const std::int16_t i = static_cast<std::int16_t>(s[0] | (s[1] << 8));
        v = i / 32768.0;
      } else if (bytes_per_sample == 3) {
        std::int32_t i = s[0] | (s[1] << 8) | (s[2] << 16);
        if (i & 0x800000) i -= 0x1000000;
        v = i / 8388608.0;
      } else {
        float f;
        std::uint32_t u = read_u32(s);
        std::memcpy(&f, &u, 4);
        v = f;
      }
      wave.samples(c, static_cast<Index>(t)) = v;
    }
  }
  return wave;
}

void write_wav(const std::string& path, const Wave& wave, int bit_depth) {
  if (bit_depth != 16 && bit_depth != 24)
    throw DataError("write_wav supports 16 or 24 bit PCM");
  if (wave.samples.rows() == 0 || !(wave.sample_rate > 0.0))
    throw DataError("write_wav needs at least one channel and a sample rate");

  const int channels = static_cast<int>(wave.samples.rows());
  const Index frames = wave.samples.cols();
  const int bytes_per_sample = bit_depth / 8;
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(frames) * channels * bytes_per_sample;

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, static_cast<std::uint16_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(std::lround(wave.sample_rate)));
  put_u32(out, static_cast<std::uint32_t>(std::lround(wave.sample_rate)) *
                   channels * bytes_per_sample);
  put_u16(out, static_cast<std::uint16_t>(channels * bytes_per_sample));
  put_u16(out, static_cast<std::uint16_t>(bit_depth));
  out += "data";
  put_u32(out, data_size);

  const double scale = bit_depth == 16 ? 32768.0 : 8388608.0;
  const long lo = bit_depth == 16 ? -32768 : -8388608;
  const long hi = bit_depth == 16 ? 32767 : 8388607;
  for (Index t = 0; t < frames; ++t) {
    for (int c = 0; c < channels; ++c) {
      const double v = std::clamp(wave.samples(c, t), -1.0, 1.0);
      const long i = std::clamp(std::lround(v * scale), lo, hi);
      out.push_back(static_cast<char>(i & 0xff));
      out.push_back(static_cast<char>((i >> 8) & 0xff));
      if (bit_depth == 24) out.push_back(static_cast<char>((i >> 16) & 0xff));
    }
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing file: " + path);
}

std::vector<Mat> frame_excerpts(const Wave& wave, double seconds,
                                double hop_seconds) {
  if (!(seconds > 0.0) || !(hop_seconds > 0.0))
    throw DataError("excerpt length and hop must be positive");
  const Index n = static_cast<Index>(std::lround(seconds * wave.sample_rate));
  const Index hop = static_cast<Index>(std::lround(hop_seconds * wave.sample_rate));
  if (n <= 0 || hop <= 0) throw DataError("excerpt shorter than one frame");
  std::vector<Mat> out;
  for (Index start = 0; start + n <= wave.samples.cols(); start += hop)
    out.push_back(wave.samples.middleCols(start, n));
  return out;
}

std::vector<ManifestEntry> split_dataset(
    const std::vector<std::pair<std::string, std::string>>& scene_files,
    std::uint64_t seed) {
  if (scene_files.empty()) throw DataError("no files to split");
  std::map<std::string, std::vector<std::string>> by_scene;
  for (const auto& [scene, path] : scene_files) by_scene[scene].push_back(path);

  std::vector<ManifestEntry> entries;
  std::uint64_t scene_index = 0;
  for (auto& [scene, paths] : by_scene) {
    std::sort(paths.begin(), paths.end());
    if (paths.size() < 8)
      std::cerr << "warning: scene '" << scene << "' has only " << paths.size()
                << " files, split will be coarse\n";
    Rng rng = Rng::derive(seed, scene_index++);
    for (size_t i = paths.size(); i > 1; --i)
      std::swap(paths[i - 1], paths[rng.uniform_index(i)]);
    const size_t n_train = paths.size() * 7 / 8;
    for (size_t i = 0; i < paths.size(); ++i)
      entries.push_back({scene, paths[i], i < n_train});
  }
  return entries;
}

void save_manifest(const std::string& path,
                   const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path);
  for (const ManifestEntry& e : entries)
    out << e.scene << '\t' << e.path << '\t' << (e.train ? "train" : "heldout")
        << '\n';
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string split;
    if (!std::getline(ss, e.scene, '\t') || !std::getline(ss, e.path, '\t') ||
        !std::getline(ss, split))
      throw DataError("malformed manifest line " + std::to_string(line_no));
    if (split == "train") e.train = true;
    else if (split == "heldout") e.train = false;
    else
      throw DataError("manifest split must be train or heldout, line " +
                      std::to_string(line_no));
    entries.push_back(e);
  }
  if (entries.empty()) throw DataError("manifest is empty: " + path);
  return entries;
}

}  // namespace ambicodec::audio
