#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ambicodec/types.hpp"

namespace ambicodec::audio {

// Interleaved multichannel audio decoded to doubles in [-1, 1].
struct Wave {
  double sample_rate = 0.0;
  Mat samples;  // [channels x frames]
};

// Reads a RIFF/WAVE file. Supported sample formats: 16/24-bit PCM
// (format tag 1) and 32-bit float (format tag 3).
Wave read_wav(const std::string& path);

// Writes integer PCM (bit_depth 16 or 24). Values are clamped to [-1, 1]
// and rounded half away from zero, so read_wav(write_wav(x)) is bit-exact
// for values that came from the same bit depth.
void write_wav(const std::string& path, const Wave& wave, int bit_depth = 16);

// Cuts a wave into fixed-length excerpts of `seconds`, starting every
// `hop_seconds`. Excerpts that would run past the end are dropped.
std::vector<Mat> frame_excerpts(const Wave& wave, double seconds,
                                double hop_seconds);

struct ManifestEntry {
  std::string scene;
  std::string path;
  bool train = true;
};

// Deterministic 7/8 train split per scene: each scene's files are
// shuffled by a seed-derived stream and floor(7n/8) of them marked train.
// Scenes with fewer than 8 files get a stderr warning.
std::vector<ManifestEntry> split_dataset(
    const std::vector<std::pair<std::string, std::string>>& scene_files,
    std::uint64_t seed);

// Manifest rows are "scene<TAB>path<TAB>train|heldout".
void save_manifest(const std::string& path,
                   const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> load_manifest(const std::string& path);

}  // namespace ambicodec::audio
