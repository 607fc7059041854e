// SPDX-License-Identifier: Apache-2.0
#include "qigen/cli.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <ostream>
#include <random>

#include "CLI11.hpp"
#include "qigen/error.hpp"
#include "qigen/kernelgen.hpp"
#include "qigen/perfmodel.hpp"
#include "qigen/runtime.hpp"
#include "qigen/weight_file.hpp"

namespace qigen::cli {

namespace {

constexpr double kVerifyTolerance = 1e-5;
constexpr int kWarmups = 2;

std::uint64_t get_u64(const std::vector<std::uint8_t>& b, std::size_t off) {
  if (off + 8 > b.size()) throw TruncatedError("file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[off + i]) << (8 * i);
  return v;
}

float get_f32(const std::vector<std::uint8_t>& b, std::size_t off) {
  if (off + 4 > b.size()) throw TruncatedError("file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return std::bit_cast<float>(v);
}

void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& b, float f) {
  const auto v = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

// Emits one report line, either as prose or as a key=value record.
class Report {
 public:
  Report(std::ostream& out, ReportFormat format) : out_(out), format_(format) {}

  void record(const std::string& type, const std::vector<std::pair<std::string, std::string>>& fields) {
    if (format_ == ReportFormat::kRecords) {
      out_ << "record=" << type;
      for (const auto& [k, v] : fields) out_ << ' ' << k << '=' << v;
      out_ << '\n';
      return;
    }
    out_ << type << ':';
    for (const auto& [k, v] : fields) out_ << "\n  " << k << ": " << v;
    out_ << '\n';
  }

 private:
  std::ostream& out_;
  ReportFormat format_;
};

std::string num(double v) { return fmt::format("{:.6g}", v); }

HardwareSpec resolve_hardware(const std::string& flag_path) {
  if (const char* env = std::getenv("QIGEN_HW"); env != nullptr && *env != '\0') return load_hardware_spec(env);
  if (!flag_path.empty()) return load_hardware_spec(flag_path);
  return {};
}

std::size_t parse_group(const std::string& s) {
  if (s == "fc" || s == "full" || s == "0") return kFullColumn;
  std::size_t pos = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty()) throw ConfigError("group size must be a positive integer or 'fc', got '" + s + "'");
  return v;
}

void report_memory(Report& rep, const PackedMatrix& pm) {
  const MemoryReport mr = memory_report(pm);
  rep.record("memory", {{"weight_bits", std::to_string(mr.payload.weights)},
                        {"scale_bits", std::to_string(mr.payload.scales)},
                        {"zero_bits", std::to_string(mr.payload.zeros)},
                        {"payload_bits", std::to_string(mr.payload.total())},
                        {"dense_bits", std::to_string(mr.dense_bits)},
                        {"ratio", num(mr.ratio)}});
}

void report_plan(Report& rep, const TilePlan& p, const HardwareSpec& hw, int bits) {
  const PlanCheck c = check_plan(p, hw, bits);
  rep.record("plan", {{"m_u", std::to_string(p.m_u)},
                      {"t_u", std::to_string(p.t_u)},
                      {"m_b", std::to_string(p.m_b)},
                      {"t_b", std::to_string(p.t_b)},
                      {"register_use", fmt::format("{}/{}", register_pressure(p.m_u, p.t_u), hw.vregs)},
                      {"register_slack", std::to_string(c.register_slack)},
                      {"cache_use_bits", fmt::format("{}/{}", block_footprint_bits(p.m_b, p.t_b, bits), hw.l1_bits)},
                      {"cache_slack_bits", std::to_string(c.cache_slack)},
                      {"m_b_mod_m_u", std::to_string(p.m_b % static_cast<std::size_t>(p.m_u))},
                      {"t_b_mod_t_u", std::to_string(p.t_b % static_cast<std::size_t>(p.t_u))},
                      {"satisfied", c.ok() ? "yes" : "no"}});
}

std::vector<float> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> dist(-1.0F, 1.0F);
  std::vector<float> x(n);
  for (auto& v : x) v = dist(rng);
  return x;
}

double relative_error(std::span<const float> got, std::span<const float> want) {
  double diff = 0.0;
  double mag = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(got[i]) - want[i]));
    mag = std::max(mag, std::abs(static_cast<double>(want[i])));
  }
  return diff / (1.0 + mag);
}

struct RateStats {
  double median = 0.0;
  double iqr = 0.0;
};

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

template <class Fn>
RateStats measure(int repeats, Fn&& fn) {
  for (int i = 0; i < kWarmups; ++i) fn();
  std::vector<double> rates;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    rates.push_back(1.0 / std::max(dt.count(), 1e-9));
  }
  return {quantile(rates, 0.5), quantile(rates, 0.75) - quantile(rates, 0.25)};
}

int cmd_quantize(const RunConfig& rc, Report& rep, std::ostream& err, Layout layout) {
  const HardwareSpec hw = resolve_hardware(rc.hw_path);
  CodeMatrix cm;
  if (!rc.codes_input.empty()) {
    cm = read_codes_file(rc.codes_input);
  } else {
    if (rc.input.empty()) {
      err << "quantize: an input matrix (or --codes) is required\n";
      return kUsage;
    }
    const FloatMatrix w = read_float_matrix(rc.input);
    cm = quantize_matrix(w.values, w.n, w.m, rc.quant);
  }
  const TilePlan p = plan(hw, cm.config, cm.n, cm.m);
  const PackedMatrix pm = lay_out_blocks(cm, p, layout);
  write_weight_file(pm, rc.output);
  rep.record("quantize", {{"output", rc.output},
                          {"n", std::to_string(pm.n)},
                          {"m", std::to_string(pm.m)},
                          {"bits", std::to_string(pm.config.bits)},
                          {"group_size", std::to_string(pm.config.group_size)}});
  report_plan(rep, p, hw, pm.config.bits);
  report_memory(rep, pm);
  return kOk;
}

int cmd_plan(const RunConfig& rc, Report& rep, std::size_t rows, std::size_t cols) {
  const HardwareSpec hw = resolve_hardware(rc.hw_path);
  const TilePlan p = plan(hw, rc.quant, rows, cols);
  rep.record("hardware", {{"l1_bits", std::to_string(hw.l1_bits)},
                          {"vregs", std::to_string(hw.vregs)},
                          {"lanes", std::to_string(hw.lanes)},
                          {"threads", std::to_string(hw.threads)}});
  report_plan(rep, p, hw, rc.quant.bits);
  return kOk;
}

int cmd_generate(const RunConfig& rc, Report& rep, const std::vector<int>& bits,
                 const std::vector<std::string>& groups) {
  const HardwareSpec hw = resolve_hardware(rc.hw_path);
  const RegisterTile tile = select_register_tile(hw);
  std::vector<KernelDescriptor> descs;
  for (int b : bits) {
    for (const auto& g : groups) {
      descs.push_back(make_descriptor(b, parse_group(g), tile.m_u, tile.t_u, hw.lanes, hw.vregs));
    }
  }
  write_kernel_set(descs, rc.output, false);
  for (const auto& d : descs) {
    rep.record("kernel", {{"name", d.name},
                          {"file", (std::filesystem::path(rc.output) / (d.name + ".gen.cpp")).string()},
                          {"bits", std::to_string(d.bits)},
                          {"group_size", std::to_string(d.group_size)},
                          {"m_u", std::to_string(d.m_u)},
                          {"t_u", std::to_string(d.t_u)},
                          {"lanes", std::to_string(d.lanes)}});
  }
  rep.record("manifest", {{"file", (std::filesystem::path(rc.output) / "manifest.json").string()},
                          {"kernels", std::to_string(descs.size())}});
  return kOk;
}

int cmd_verify(const RunConfig& rc, Report& rep, std::ostream& err, long fault_word) {
  const PackedMatrix pm = read_weight_file(rc.input);
  const int threads = rc.threads > 0 ? rc.threads : 1;
  if (rc.trials <= 0) {
    err << "warning: verify ran 0 trials; nothing was checked\n";
    rep.record("verify", {{"trials", "0"}, {"max_rel_err", "0"}, {"tolerance", num(kVerifyTolerance)},
                          {"status", "pass"}});
    return kOk;
  }
  // Test hook: corrupt one word of the optimized path's copy only.
  PackedMatrix optimized = pm;
  if (fault_word >= 0) {
    if (static_cast<std::size_t>(fault_word) >= optimized.words.size()) throw ConfigError("--fault-word out of range");
    optimized.words[static_cast<std::size_t>(fault_word)] ^= 0xFFFFFFFFU;
  }
  const KernelEntry& kernel = find_kernel(pm);
  std::mt19937_64 rng(rc.seed);
  double worst = 0.0;
  for (int t = 0; t < rc.trials; ++t) {
    const auto x = random_vector(pm.n, rng);
    const auto sums = input_sums(x, pm.config.group_size);
    const auto want = qgemv_reference(pm, x);
    const auto got = qgemv_with(kernel, optimized, x, sums, threads);
    worst = std::max(worst, relative_error(got, want));
  }
  const bool pass = worst <= kVerifyTolerance;
  rep.record("verify", {{"kernel", kernel.name},
                        {"trials", std::to_string(rc.trials)},
                        {"max_rel_err", num(worst)},
                        {"tolerance", num(kVerifyTolerance)},
                        {"status", pass ? "pass" : "fail"}});
  return pass ? kOk : kVerifyFailed;
}

int cmd_bench(const RunConfig& rc, Report& rep) {
  const HardwareSpec hw = resolve_hardware(rc.hw_path);
  const PackedMatrix pm = read_weight_file(rc.input);
  const int threads = rc.threads > 0 ? rc.threads : hw.threads;
  const int repeats = std::max(rc.repeats, 1);
  std::mt19937_64 rng(rc.seed);
  const auto x = random_vector(pm.n, rng);
  const KernelEntry& kernel = find_kernel(pm, hw.lanes);
  std::vector<float> sink;
  const RateStats opt = measure(repeats, [&] {
    const auto sums = input_sums(x, pm.config.group_size);
    sink = qgemv_with(kernel, pm, x, sums, threads);
  });
  const RateStats ref = measure(repeats, [&] { sink = qgemv_reference(pm, x); });
  rep.record("bench", {{"path", "optimized"}, {"kernel", kernel.name}, {"threads", std::to_string(threads)},
                       {"repeats", std::to_string(repeats)}, {"median_per_s", num(opt.median)},
                       {"iqr_per_s", num(opt.iqr)}});
  rep.record("bench", {{"path", "reference"}, {"kernel", "scalar"}, {"threads", "1"},
                       {"repeats", std::to_string(repeats)}, {"median_per_s", num(ref.median)},
                       {"iqr_per_s", num(ref.iqr)}});
  return kOk;
}

int cmd_info(const RunConfig& rc, Report& rep) {
  const WeightFileHeader h = read_weight_header(rc.input);
  rep.record("info", {{"version", std::to_string(h.version)},
                      {"bits", std::to_string(h.config.bits)},
                      {"zero_mode", h.config.zero_mode == ZeroMode::kQuantized ? "quantized" : "real32"},
                      {"n", std::to_string(h.n)},
                      {"m", std::to_string(h.m)},
                      {"group_size", std::to_string(h.config.group_size)},
                      {"layout", h.layout == Layout::kZCurve ? "zcurve" : "row"},
                      {"m_b", std::to_string(h.plan.m_b)},
                      {"t_b", std::to_string(h.plan.t_b)},
                      {"m_u", std::to_string(h.plan.m_u)},
                      {"t_u", std::to_string(h.plan.t_u)},
                      {"payload_bytes", std::to_string(h.payload_bytes)},
                      {"crc32", fmt::format("{:08x}", h.crc32)}});
  return kOk;
}

}  // namespace

FloatMatrix read_float_matrix(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  FloatMatrix mat;
  mat.n = get_u64(bytes, 0);
  mat.m = get_u64(bytes, 8);
  if (mat.n == 0 || mat.m == 0) throw FormatError("float matrix '" + path + "' has a zero dimension");
  if (bytes.size() != 16 + mat.n * mat.m * 4) {
    throw FormatError(fmt::format("float matrix '{}': expected {} bytes for {}x{}, found {}", path,
                                  16 + mat.n * mat.m * 4, mat.n, mat.m, bytes.size()));
  }
  mat.values.resize(mat.n * mat.m);
  for (std::size_t i = 0; i < mat.values.size(); ++i) mat.values[i] = get_f32(bytes, 16 + 4 * i);
  return mat;
}

void write_float_matrix(const std::string& path, const FloatMatrix& mat) {
  std::vector<std::uint8_t> b;
  b.reserve(16 + mat.values.size() * 4);
  put_u64(b, mat.n);
  put_u64(b, mat.m);
  for (float v : mat.values) put_f32(b, v);
  write_file_bytes(path, b);
}

CodeMatrix read_codes_file(const std::string& path) {
  const auto b = read_file_bytes(path);
  if (b.size() < 30 || std::memcmp(b.data(), "QIGC", 4) != 0) throw BadMagicError("'" + path + "' is not a QIGC codes file");
  CodeMatrix cm;
  cm.config.bits = b[4];
  cm.config.zero_mode = static_cast<ZeroMode>(b[5]);
  cm.n = get_u64(b, 6);
  cm.m = get_u64(b, 14);
  cm.config.group_size = get_u64(b, 22);
  cm.config.validate_rows(cm.n);
  const std::size_t params = cm.config.groups(cm.n) * cm.m;
  const std::size_t expect = 30 + cm.n * cm.m + params * 8;
  if (b.size() != expect) throw FormatError(fmt::format("codes file '{}': expected {} bytes, found {}", path, expect, b.size()));
  cm.codes.resize(cm.n * cm.m);
  for (std::size_t i = 0; i < cm.n; ++i) {
    for (std::size_t j = 0; j < cm.m; ++j) cm.codes[j * cm.n + i] = b[30 + i * cm.m + j];
  }
  cm.params.resize(params);
  const std::size_t s_off = 30 + cm.n * cm.m;
  for (std::size_t p = 0; p < params; ++p) {
    cm.params[p].scale = get_f32(b, s_off + 4 * p);
    cm.params[p].zero = get_f32(b, s_off + 4 * (params + p));
  }
  cm.validate();
  return cm;
}

void write_codes_file(const std::string& path, const CodeMatrix& cm) {
  cm.validate();
  std::vector<std::uint8_t> b{'Q', 'I', 'G', 'C', static_cast<std::uint8_t>(cm.config.bits),
                              static_cast<std::uint8_t>(cm.config.zero_mode)};
  put_u64(b, cm.n);
  put_u64(b, cm.m);
  put_u64(b, cm.config.group_size);
  for (std::size_t i = 0; i < cm.n; ++i) {
    for (std::size_t j = 0; j < cm.m; ++j) b.push_back(cm.code(i, j));
  }
  for (const auto& p : cm.params) put_f32(b, p.scale);
  for (const auto& p : cm.params) put_f32(b, p.zero);
  write_file_bytes(path, b);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"qigen: quantized GEMV kernels for CPUs"};
  app.require_subcommand(1);

  RunConfig rc;
  std::string format = "text";
  std::string group = "fc";
  std::string zero_mode = "real32";
  std::string layout = "zcurve";
  std::size_t rows = 4096;
  std::size_t cols = 4096;
  long fault_word = -1;
  std::vector<int> gen_bits{2, 3, 4};
  std::vector<std::string> gen_groups{"fc", "64"};

  auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", format, "Report format")->check(CLI::IsMember({"text", "records"}));
  };
  auto add_quant = [&](CLI::App* sub) {
    sub->add_option("--bits", rc.quant.bits, "Bits per weight (2, 3 or 4)");
    sub->add_option("--group-size", group, "Rows per group, or 'fc' for one group per column");
    sub->add_option("--zero-mode", zero_mode, "Zero-point storage")->check(CLI::IsMember({"real32", "quantized"}));
  };
  auto add_hw = [&](CLI::App* sub) {
    sub->add_option("--hw", rc.hw_path, "Hardware descriptor file (QIGEN_HW overrides)");
  };

  auto* quantize = app.add_subcommand("quantize", "Quantize a float matrix into a QIGW weight file");
  quantize->add_option("input", rc.input, "Raw float matrix (u64 n, u64 m, row-major f32)");
  quantize->add_option("--codes", rc.codes_input, "Import externally quantized codes (QIGC file) instead");
  quantize->add_option("-o,--output", rc.output, "Output weight file")->required();
  quantize->add_option("--layout", layout, "Block layout")->check(CLI::IsMember({"zcurve", "row"}));
  add_quant(quantize);
  add_hw(quantize);
  add_format(quantize);

  auto* plan_cmd = app.add_subcommand("plan", "Print the tile plan for a matrix shape");
  plan_cmd->add_option("--rows", rows, "Matrix rows n (input length)");
  plan_cmd->add_option("--cols", cols, "Matrix columns m (output length)");
  add_quant(plan_cmd);
  add_hw(plan_cmd);
  add_format(plan_cmd);

  auto* generate = app.add_subcommand("generate", "Write kernel sources and a manifest");
  generate->add_option("-o,--out", rc.output, "Output directory")->required();
  generate->add_option("--bits", gen_bits, "Bit widths")->delimiter(',');
  generate->add_option("--group-size", gen_groups, "Groupings ('fc' or sizes)")->delimiter(',');
  add_hw(generate);
  add_format(generate);

  auto* verify = app.add_subcommand("verify", "Check the optimized kernel against the scalar oracle");
  verify->add_option("input", rc.input, "Weight file")->required();
  verify->add_option("--seed", rc.seed, "Random seed");
  verify->add_option("--trials", rc.trials, "Random input vectors");
  verify->add_option("--threads", rc.threads, "Worker threads");
  verify->add_option("--fault-word", fault_word, "Test hook: flip one word in the optimized path")->group("");
  add_format(verify);

  auto* bench = app.add_subcommand("bench", "Measure qGEMV throughput");
  bench->add_option("input", rc.input, "Weight file")->required();
  bench->add_option("--threads", rc.threads, "Worker threads (default: descriptor's)");
  bench->add_option("--repeats", rc.repeats, "Timed repetitions");
  bench->add_option("--seed", rc.seed, "Random seed");
  add_hw(bench);
  add_format(bench);

  auto* info = app.add_subcommand("info", "Print a weight file header");
  info->add_option("input", rc.input, "Weight file")->required();
  add_format(info);

  std::vector<std::string> argv_store{"qigen"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    rc.format = format == "records" ? ReportFormat::kRecords : ReportFormat::kText;
    rc.quant.group_size = parse_group(group);
    rc.quant.zero_mode = zero_mode == "quantized" ? ZeroMode::kQuantized : ZeroMode::kReal32;
    Report rep(out, rc.format);
    if (*quantize) {
      rc.command = Command::kQuantize;
      return cmd_quantize(rc, rep, err, layout == "row" ? Layout::kRowSequential : Layout::kZCurve);
    }
    if (*plan_cmd) {
      rc.command = Command::kPlan;
      return cmd_plan(rc, rep, rows, cols);
    }
    if (*generate) {
      rc.command = Command::kGenerate;
      return cmd_generate(rc, rep, gen_bits, gen_groups);
    }
    if (*verify) {
      rc.command = Command::kVerify;
      return cmd_verify(rc, rep, err, fault_word);
    }
    if (*bench) {
      rc.command = Command::kBench;
      return cmd_bench(rc, rep);
    }
    rc.command = Command::kInfo;
    return cmd_info(rc, rep);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace qigen::cli
