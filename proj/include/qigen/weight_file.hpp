// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qigen/pack.hpp"

namespace qigen {

// On-disk weight format, all little-endian:
//   "QIGW" | u16 version | u8 bits | u8 zero_mode | u64 n | u64 m | u64 group_size (0 = full column)
//   | u8 layout | u32 m_b | u32 t_b | u16 m_u | u16 t_u | u64 payload length | u32 CRC32(payload)
// padded to 64 bytes, then the scales, zeros and packed-word sections, each starting on a
// 64-byte boundary. Quantized zeros are bit-packed like the weights.
inline constexpr std::uint16_t kWeightFileVersion = 1;
inline constexpr std::size_t kWeightHeaderBytes = 64;
inline constexpr std::size_t kSectionAlign = 64;

struct WeightFileHeader {
  std::uint16_t version = kWeightFileVersion;
  QuantConfig config;
  std::size_t n = 0;
  std::size_t m = 0;
  Layout layout = Layout::kZCurve;
  TilePlan plan;
  std::uint64_t payload_bytes = 0;
  std::uint32_t crc32 = 0;
};

struct SectionLayout {
  std::size_t scales_offset = 0;  // relative to the payload start
  std::size_t scales_bytes = 0;
  std::size_t zeros_offset = 0;
  std::size_t zeros_bytes = 0;
  std::size_t words_offset = 0;
  std::size_t words_bytes = 0;
  std::size_t payload_bytes = 0;
};

SectionLayout section_layout(const QuantConfig& config, std::size_t n, std::size_t m);

std::vector<std::uint8_t> serialize_weights(const PackedMatrix& pm);

struct ReadOptions {
  bool verify_checksum = true;
};

PackedMatrix deserialize_weights(std::span<const std::uint8_t> bytes, const ReadOptions& opts = {});

// Header only; validates magic and version.
WeightFileHeader parse_weight_header(std::span<const std::uint8_t> bytes);

void write_weight_file(const PackedMatrix& pm, const std::string& path);
PackedMatrix read_weight_file(const std::string& path, const ReadOptions& opts = {});
WeightFileHeader read_weight_header(const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace qigen
