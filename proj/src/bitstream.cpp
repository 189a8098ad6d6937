#include "ambicodec/bitstream.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "ambicodec/errors.hpp"

namespace ambicodec::codec {

namespace {

constexpr char kMagic[4] = {'A', 'M', 'B', 'S'};

bool is_power_of_two(std::uint64_t v) { return v >= 1 && (v & (v - 1)) == 0; }

void put_bytes(std::string& out, std::uint64_t v, int n_bytes) {
  for (int i = 0; i < n_bytes; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// Bounds-checked little-endian cursor over a byte buffer.
struct Reader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;

  std::uint64_t take(int n_bytes) {
    if (size - pos < static_cast<std::size_t>(n_bytes))
      throw DataError("truncated stream");
    std::uint64_t v = 0;
    for (int i = 0; i < n_bytes; ++i)
      v |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
    pos += static_cast<std::size_t>(n_bytes);
    return v;
  }
};

std::uint64_t payload_bytes(const StreamHeader& h) {
  const auto bits = static_cast<std::uint64_t>(bits_per_index(h.codebook_size));
  return (h.n_frames * h.n_codebooks * bits + 7) / 8;
}

}  // namespace

void validate(const StreamHeader& header) {
  if (header.version != 1)
    throw DataError("unknown stream version " +
                    std::to_string(header.version));
  if (header.sample_rate == 0) throw DataError("stream sample rate is zero");
  const auto side = static_cast<std::uint32_t>(header.ambisonics_order) + 1;
  if (header.n_channels != side * side)
    throw DataError("stream channel count does not match its order");
  if (header.total_stride == 0) throw DataError("stream stride is zero");
  if (header.n_codebooks == 0) throw DataError("stream has no codebooks");
  if (!is_power_of_two(header.codebook_size) || header.codebook_size < 2)
    throw DataError("codebook size must be a power of two >= 2");
  // Keeps payload arithmetic far from overflow even for hostile headers.
  if (header.n_frames > (std::uint64_t{1} << 40))
    throw DataError("implausible frame count");
  const auto coded = static_cast<unsigned __int128>(header.n_frames) *
                     header.total_stride;
  if (static_cast<unsigned __int128>(header.n_original_frames) > coded)
    throw DataError("original length exceeds the coded length");
}

int bits_per_index(std::uint32_t codebook_size) {
  if (!is_power_of_two(codebook_size) || codebook_size < 2)
    throw DataError("codebook size must be a power of two >= 2");
  int bits = 0;
  while ((std::uint32_t{1} << bits) < codebook_size) ++bits;
  return bits;
}

double bitrate_bps(const StreamHeader& header) {
  validate(header);
  return static_cast<double>(header.sample_rate) / header.total_stride *
         header.n_codebooks * bits_per_index(header.codebook_size);
}

std::vector<std::uint8_t> pack_indices(const MatI& codes, int bits) {
  if (bits < 1 || bits > 32) throw DataError("bits per index out of range");
  const std::uint64_t limit = std::uint64_t{1} << bits;
  std::vector<std::uint8_t> out;
  out.reserve((static_cast<std::size_t>(codes.size()) * bits + 7) / 8);
  std::uint32_t acc = 0;
  int acc_bits = 0;
  for (Index f = 0; f < codes.cols(); ++f) {
    for (Index q = 0; q < codes.rows(); ++q) {
      const auto v = static_cast<std::uint64_t>(codes(q, f));
      if (codes(q, f) < 0 || v >= limit)
        throw DataError("code index out of range for the bit width");
      for (int b = bits - 1; b >= 0; --b) {
        acc = (acc << 1) | static_cast<std::uint32_t>((v >> b) & 1);
        if (++acc_bits == 8) {
          out.push_back(static_cast<std::uint8_t>(acc));
          acc = 0;
          acc_bits = 0;
        }
      }
    }
  }
  if (acc_bits > 0)
    out.push_back(static_cast<std::uint8_t>(acc << (8 - acc_bits)));
  return out;
}

MatI unpack_indices(const std::vector<std::uint8_t>& bytes,
                    std::uint64_t n_frames, int n_codebooks, int bits) {
  if (bits < 1 || bits > 32) throw DataError("bits per index out of range");
  if (n_codebooks < 1) throw DataError("codebook count must be >= 1");
  if (n_frames > (std::uint64_t{1} << 40))
    throw DataError("implausible frame count");
  const std::uint64_t total_bits =
      n_frames * static_cast<std::uint64_t>(n_codebooks) * bits;
  if (bytes.size() < (total_bits + 7) / 8)
    throw DataError("code payload shorter than the header promises");
  MatI codes(n_codebooks, static_cast<Index>(n_frames));
  std::uint64_t bit_pos = 0;
  for (Index f = 0; f < codes.cols(); ++f) {
    for (Index q = 0; q < codes.rows(); ++q) {
      std::uint64_t v = 0;
      for (int b = 0; b < bits; ++b, ++bit_pos) {
        const std::uint8_t byte = bytes[bit_pos >> 3];
        v = (v << 1) | ((byte >> (7 - (bit_pos & 7))) & 1);
      }
      codes(q, f) = static_cast<MatI::Scalar>(v);
    }
  }
  return codes;
}

void write_stream(const std::string& path, const EncodedStream& stream) {
  validate(stream.header);
  const StreamHeader& h = stream.header;
  if (stream.codes.rows() != h.n_codebooks ||
      static_cast<std::uint64_t>(stream.codes.cols()) != h.n_frames)
    throw DataError("code matrix does not match the stream header");
  std::string buf;
  buf.append(kMagic, 4);
  put_bytes(buf, h.version, 2);
  put_bytes(buf, h.sample_rate, 4);
  put_bytes(buf, h.n_channels, 2);
  put_bytes(buf, h.ambisonics_order, 1);
  put_bytes(buf, h.total_stride, 4);
  put_bytes(buf, h.n_codebooks, 2);
  put_bytes(buf, h.codebook_size, 4);
  put_bytes(buf, h.n_frames, 8);
  put_bytes(buf, h.n_original_frames, 8);
  buf.append(reinterpret_cast<const char*>(h.model_digest.data()),
             h.model_digest.size());
  const auto payload =
      pack_indices(stream.codes, bits_per_index(h.codebook_size));
  buf.append(reinterpret_cast<const char*>(payload.data()), payload.size());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write stream file " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw DataError("failed while writing stream file " + path);
}

EncodedStream read_stream(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read stream file " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  Reader r{bytes.data(), bytes.size()};
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.take(1));
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(path + ": not an AMBS stream");
  EncodedStream stream;
  StreamHeader& h = stream.header;
  h.version = static_cast<std::uint16_t>(r.take(2));
  h.sample_rate = static_cast<std::uint32_t>(r.take(4));
  h.n_channels = static_cast<std::uint16_t>(r.take(2));
  h.ambisonics_order = static_cast<std::uint8_t>(r.take(1));
  h.total_stride = static_cast<std::uint32_t>(r.take(4));
  h.n_codebooks = static_cast<std::uint16_t>(r.take(2));
  h.codebook_size = static_cast<std::uint32_t>(r.take(4));
  h.n_frames = r.take(8);
  h.n_original_frames = r.take(8);
  for (auto& b : h.model_digest) b = static_cast<std::uint8_t>(r.take(1));
  validate(h);
  const std::uint64_t expected = payload_bytes(h);
  if (bytes.size() - r.pos != expected)
    throw DataError(path + ": payload size does not match the header");
  std::vector<std::uint8_t> payload(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                                    bytes.end());
  stream.codes = unpack_indices(payload, h.n_frames, h.n_codebooks,
                                bits_per_index(h.codebook_size));
  return stream;
}

std::array<std::uint8_t, 32> file_sha256(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw DataError("sha256 initialization failed");
  }
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof(buf));
    const std::streamsize got = f.gcount();
    if (got > 0 &&
        EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(got)) != 1) {
      EVP_MD_CTX_free(ctx);
      throw DataError("sha256 update failed");
    }
  }
  std::array<std::uint8_t, 32> digest{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx, digest.data(), &len) != 1 || len != 32) {
    EVP_MD_CTX_free(ctx);
    throw DataError("sha256 finalization failed");
  }
  EVP_MD_CTX_free(ctx);
  return digest;
}

EncodedStream encode_wave(nn::Generator& generator, const audio::Wave& wave,
                          const std::array<std::uint8_t, 32>& model_digest) {
  const auto& cfg = generator.config();
  if (wave.samples.rows() != cfg.io_channels)
    throw DataError("input has " + std::to_string(wave.samples.rows()) +
                    " channels, the model wants " +
                    std::to_string(cfg.io_channels));
  if (wave.sample_rate != cfg.sample_rate)
    throw DataError("input sample rate does not match the model");
  int order = 0;
  while ((order + 1) * (order + 1) < cfg.io_channels) ++order;
  if ((order + 1) * (order + 1) != cfg.io_channels)
    throw DataError("stream container needs a square channel count");
  EncodedStream stream;
  stream.codes = generator.encode(wave.samples);
  StreamHeader& h = stream.header;
  h.sample_rate = static_cast<std::uint32_t>(cfg.sample_rate);
  h.n_channels = static_cast<std::uint16_t>(cfg.io_channels);
  h.ambisonics_order = static_cast<std::uint8_t>(order);
  h.total_stride = static_cast<std::uint32_t>(nn::total_stride(cfg));
  h.n_codebooks = static_cast<std::uint16_t>(cfg.n_codebooks);
  h.codebook_size = static_cast<std::uint32_t>(cfg.codebook_size);
  h.n_frames = static_cast<std::uint64_t>(stream.codes.cols());
  h.n_original_frames = static_cast<std::uint64_t>(wave.samples.cols());
  h.model_digest = model_digest;
  validate(h);
  return stream;
}

audio::Wave decode_stream(nn::Generator& generator,
                          const EncodedStream& stream,
                          const std::array<std::uint8_t, 32>& model_digest) {
  validate(stream.header);
  const StreamHeader& h = stream.header;
  if (h.model_digest != model_digest)
    throw DataError("stream was encoded with a different model checkpoint");
  const auto& cfg = generator.config();
  if (h.n_channels != cfg.io_channels ||
      h.sample_rate != static_cast<std::uint32_t>(cfg.sample_rate) ||
      h.total_stride != static_cast<std::uint32_t>(nn::total_stride(cfg)) ||
      h.n_codebooks != static_cast<std::uint16_t>(cfg.n_codebooks) ||
      h.codebook_size != static_cast<std::uint32_t>(cfg.codebook_size))
    throw DataError("stream header does not match the model configuration");
  audio::Wave wave;
  wave.sample_rate = cfg.sample_rate;
  wave.samples = generator.decode(
      stream.codes, static_cast<Index>(h.n_original_frames));
  return wave;
}

void encode_file(const std::string& wav_path,
                 const std::string& checkpoint_path,
                 const std::string& out_path) {
  const auto digest = file_sha256(checkpoint_path);
  nn::Generator generator =
      nn::generator_from_checkpoint(nn::load_checkpoint(checkpoint_path));
  const audio::Wave wave = audio::read_wav(wav_path);
  const EncodedStream stream = encode_wave(generator, wave, digest);
  write_stream(out_path, stream);
}

void decode_file(const std::string& stream_path,
                 const std::string& checkpoint_path,
                 const std::string& out_path, int bit_depth) {
  const auto digest = file_sha256(checkpoint_path);
  nn::Generator generator =
      nn::generator_from_checkpoint(nn::load_checkpoint(checkpoint_path));
  const EncodedStream stream = read_stream(stream_path);
  const audio::Wave wave = decode_stream(generator, stream, digest);
  audio::write_wav(out_path, wave, bit_depth);
}

}  // namespace ambicodec::codec
