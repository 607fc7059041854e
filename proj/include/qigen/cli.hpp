// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "qigen/quant.hpp"

namespace qigen::cli {

enum ExitCode : int {
  kOk = 0,
  kVerifyFailed = 1,
  kUsage = 2,
  kIo = 3,
};

enum class ReportFormat { kText, kRecords };

enum class Command { kQuantize, kPlan, kGenerate, kVerify, kBench, kInfo };

struct RunConfig {
  Command command = Command::kInfo;
  std::string input;
  std::string output;
  std::string codes_input;
  QuantConfig quant;
  std::string hw_path;
  int threads = 0;  // 0: take the hardware descriptor's thread count
  std::uint64_t seed = 0;
  int trials = 10;
  int repeats = 10;
  ReportFormat format = ReportFormat::kText;
};

// Raw float matrix: u64 n, u64 m, then n*m row-major f32, all little-endian.
struct FloatMatrix {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<float> values;
};

FloatMatrix read_float_matrix(const std::string& path);
void write_float_matrix(const std::string& path, const FloatMatrix& mat);

// Externally quantized codes: "QIGC" | u8 bits | u8 zero_mode | u64 n | u64 m | u64 group_size
// | n*m u8 codes (row-major) | groups*m f32 scales | groups*m f32 zeros (group-row major).
CodeMatrix read_codes_file(const std::string& path);
void write_codes_file(const std::string& path, const CodeMatrix& cm);

// Runs the command line; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qigen::cli
