// SPDX-License-Identifier: Apache-2.0
#include "qigen/weight_file.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "qigen/error.hpp"

namespace qigen {

namespace {

constexpr char kMagic[4] = {'Q', 'I', 'G', 'W'};

std::size_t align_up(std::size_t v, std::size_t a) { return (v + a - 1) / a * a; }

std::size_t zero_code_count(const QuantConfig& config, std::size_t params) {
  const std::size_t unit = codes_per_unit(config.bits);
  return (params + unit - 1) / unit * unit;
}

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  template <class T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
  }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void pad_to(std::size_t size) { out_.resize(size, 0); }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > in_.size()) throw TruncatedError("weight file truncated");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  void seek(std::size_t pos) { pos_ = pos; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large payloads in chunks.
  constexpr std::size_t kChunk = 1U << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t len = std::min(kChunk, bytes.size() - off);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(len));
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

SectionLayout section_layout(const QuantConfig& config, std::size_t n, std::size_t m) {
  SectionLayout s;
  const std::size_t params = config.groups(n) * m;
  s.scales_offset = 0;
  s.scales_bytes = params * 4;
  s.zeros_offset = align_up(s.scales_offset + s.scales_bytes, kSectionAlign);
  s.zeros_bytes = config.zero_mode == ZeroMode::kQuantized
                      ? zero_code_count(config, params) * static_cast<std::size_t>(config.bits) / 8
                      : params * 4;
  s.words_offset = align_up(s.zeros_offset + s.zeros_bytes, kSectionAlign);
  s.words_bytes = n * static_cast<std::size_t>(config.bits) / 32 * m * 4;
  s.payload_bytes = s.words_offset + s.words_bytes;
  return s;
}

std::vector<std::uint8_t> serialize_weights(const PackedMatrix& pm) {
  pm.validate();
  const SectionLayout s = section_layout(pm.config, pm.n, pm.m);

  std::vector<std::uint8_t> payload;
  payload.reserve(s.payload_bytes);
  Writer pw(payload);
  for (float v : pm.scales) pw.put_f32(v);
  pw.pad_to(s.zeros_offset);
  if (pm.config.zero_mode == ZeroMode::kQuantized) {
    std::vector<std::uint8_t> codes(zero_code_count(pm.config, pm.zeros.size()), 0);
    for (std::size_t i = 0; i < pm.zeros.size(); ++i) codes[i] = static_cast<std::uint8_t>(pm.zeros[i]);
    for (auto w : pack_words(codes, pm.config.bits)) pw.put(w);
  } else {
    for (float v : pm.zeros) pw.put_f32(v);
  }
  pw.pad_to(s.words_offset);
  for (auto w : pm.words) pw.put(w);

  std::vector<std::uint8_t> out;
  out.reserve(kWeightHeaderBytes + payload.size());
  Writer hw(out);
  for (char c : kMagic) hw.put(static_cast<std::uint8_t>(c));
  hw.put(kWeightFileVersion);
  hw.put(static_cast<std::uint8_t>(pm.config.bits));
  hw.put(static_cast<std::uint8_t>(pm.config.zero_mode));
  hw.put(static_cast<std::uint64_t>(pm.n));
  hw.put(static_cast<std::uint64_t>(pm.m));
  hw.put(static_cast<std::uint64_t>(pm.config.group_size));
  hw.put(static_cast<std::uint8_t>(pm.layout));
  if (pm.plan.m_b > std::numeric_limits<std::uint32_t>::max() || pm.plan.t_b > std::numeric_limits<std::uint32_t>::max() ||
      pm.plan.m_u > 0xFFFF || pm.plan.t_u > 0xFFFF) {
    throw ConfigError("tile plan does not fit the weight file header");
  }
  hw.put(static_cast<std::uint32_t>(pm.plan.m_b));
  hw.put(static_cast<std::uint32_t>(pm.plan.t_b));
  hw.put(static_cast<std::uint16_t>(pm.plan.m_u));
  hw.put(static_cast<std::uint16_t>(pm.plan.t_u));
  hw.put(static_cast<std::uint64_t>(payload.size()));
  hw.put(crc_of(payload));
  hw.pad_to(kWeightHeaderBytes);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

WeightFileHeader parse_weight_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw BadMagicError("not a QIGW weight file (bad magic)");
  }
  if (bytes.size() < kWeightHeaderBytes) throw TruncatedError("weight file header truncated");
  Reader r(bytes);
  r.seek(sizeof(kMagic));
  WeightFileHeader h;
  h.version = r.get<std::uint16_t>();
  if (h.version != kWeightFileVersion) {
    throw VersionError("unsupported weight file version " + std::to_string(h.version) + " (expected " +
                       std::to_string(kWeightFileVersion) + ")");
  }
  h.config.bits = r.get<std::uint8_t>();
  h.config.zero_mode = static_cast<ZeroMode>(r.get<std::uint8_t>());
  h.n = r.get<std::uint64_t>();
  h.m = r.get<std::uint64_t>();
  h.config.group_size = r.get<std::uint64_t>();
  h.layout = static_cast<Layout>(r.get<std::uint8_t>());
  h.plan.m_b = r.get<std::uint32_t>();
  h.plan.t_b = r.get<std::uint32_t>();
  h.plan.m_u = r.get<std::uint16_t>();
  h.plan.t_u = r.get<std::uint16_t>();
  h.payload_bytes = r.get<std::uint64_t>();
  h.crc32 = r.get<std::uint32_t>();
  if (h.layout != Layout::kRowSequential && h.layout != Layout::kZCurve) throw FormatError("unknown layout tag");
  try {
    h.config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("weight file header: ") + e.what());
  }
  return h;
}

PackedMatrix deserialize_weights(std::span<const std::uint8_t> bytes, const ReadOptions& opts) {
  const WeightFileHeader h = parse_weight_header(bytes);
  const auto payload = bytes.subspan(kWeightHeaderBytes);
  if (payload.size() < h.payload_bytes) {
    throw TruncatedError("weight payload truncated: " + std::to_string(payload.size()) + " of " +
                         std::to_string(h.payload_bytes) + " bytes");
  }
  const auto body = payload.first(h.payload_bytes);
  if (opts.verify_checksum && crc_of(body) != h.crc32) throw ChecksumError("weight payload checksum mismatch");

  const SectionLayout s = section_layout(h.config, h.n, h.m);
  if (s.payload_bytes != h.payload_bytes) throw FormatError("payload length disagrees with the header dimensions");

  PackedMatrix pm;
  pm.n = h.n;
  pm.m = h.m;
  pm.config = h.config;
  pm.plan = h.plan;
  pm.layout = h.layout;
  const std::size_t params = h.config.groups(h.n) * h.m;
  Reader r(body);
  pm.scales.resize(params);
  for (auto& v : pm.scales) v = r.get_f32();
  r.seek(s.zeros_offset);
  pm.zeros.resize(params);
  if (h.config.zero_mode == ZeroMode::kQuantized) {
    std::vector<std::uint32_t> zw(s.zeros_bytes / 4);
    for (auto& w : zw) w = r.get<std::uint32_t>();
    const auto codes = unpack_words(zw, h.config.bits);
    for (std::size_t i = 0; i < params; ++i) pm.zeros[i] = static_cast<float>(codes[i]);
  } else {
    for (auto& v : pm.zeros) v = r.get_f32();
  }
  r.seek(s.words_offset);
  pm.words.resize(s.words_bytes / 4);
  for (auto& w : pm.words) w = r.get<std::uint32_t>();
  try {
    pm.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("inconsistent weight file: ") + e.what());
  }
  return pm;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot create '" + path + "'");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write to '" + path + "' failed");
}

void write_weight_file(const PackedMatrix& pm, const std::string& path) {
  write_file_bytes(path, serialize_weights(pm));
}

PackedMatrix read_weight_file(const std::string& path, const ReadOptions& opts) {
  return deserialize_weights(read_file_bytes(path), opts);
}

WeightFileHeader read_weight_header(const std::string& path) { return parse_weight_header(read_file_bytes(path)); }

}  // namespace qigen
