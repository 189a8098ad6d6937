#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ambicodec/audio_io.hpp"
#include "ambicodec/generator.hpp"
#include "ambicodec/types.hpp"

namespace ambicodec::codec {

// Fixed-size header of the AMBS stream container. All integers are
// little-endian on disk.
struct StreamHeader {
  std::uint16_t version = 1;
  std::uint32_t sample_rate = 0;
  std::uint16_t n_channels = 0;
  std::uint8_t ambisonics_order = 0;
  std::uint32_t total_stride = 0;
  std::uint16_t n_codebooks = 0;
  std::uint32_t codebook_size = 0;
  std::uint64_t n_frames = 0;
  // Sample count of the original audio, so decoding can trim the
  // padding the encoder added to fill the last frame.
  std::uint64_t n_original_frames = 0;
  std::array<std::uint8_t, 32> model_digest{};
};

inline constexpr std::size_t kHeaderBytes = 71;

void validate(const StreamHeader& header);

// Exact log2 of the codebook size, which must be a power of two >= 2.
int bits_per_index(std::uint32_t codebook_size);

// (sample_rate / total_stride) * n_codebooks * bits_per_index.
double bitrate_bps(const StreamHeader& header);

// Code payload layout: frame-major then codebook-major, each index in
// bits_per_index bits, most significant bit first, zero-padded to a byte
// boundary at the end of the stream only.
std::vector<std::uint8_t> pack_indices(const MatI& codes, int bits);
MatI unpack_indices(const std::vector<std::uint8_t>& bytes,
                    std::uint64_t n_frames, int n_codebooks, int bits);

struct EncodedStream {
  StreamHeader header;
  MatI codes;  // [n_codebooks x n_frames]
};

void write_stream(const std::string& path, const EncodedStream& stream);
// Total: any byte string either parses or throws DataError.
EncodedStream read_stream(const std::string& path);

std::array<std::uint8_t, 32> file_sha256(const std::string& path);

// In-memory halves of the codec. The digest binds a stream to the model
// checkpoint file it was produced with.
EncodedStream encode_wave(nn::Generator& generator, const audio::Wave& wave,
                          const std::array<std::uint8_t, 32>& model_digest);
audio::Wave decode_stream(nn::Generator& generator,
                          const EncodedStream& stream,
                          const std::array<std::uint8_t, 32>& model_digest);

// File-level paths used by the command line tool.
void encode_file(const std::string& wav_path,
                 const std::string& checkpoint_path,
                 const std::string& out_path);
void decode_file(const std::string& stream_path,
                 const std::string& checkpoint_path,
                 const std::string& out_path, int bit_depth = 16);

}  // namespace ambicodec::codec
