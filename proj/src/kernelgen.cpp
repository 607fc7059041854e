// SPDX-License-Identifier: Apache-2.0
#include "qigen/kernelgen.hpp"

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "qigen/error.hpp"

namespace qigen {

namespace {

// Accumulates indented source lines.
class Emitter {
 public:
  template <class... Args>
  void line(fmt::format_string<Args...> f, Args&&... args) {
    out_.append(static_cast<std::size_t>(indent_) * 2, ' ');
    out_ += fmt::format(f, std::forward<Args>(args)...);
    out_ += '\n';
  }
  void blank() { out_ += '\n'; }
  void raw(const std::string& s) { out_ += s; }
  void in() { ++indent_; }
  void out() { --indent_; }
  std::string str() const { return out_; }

 private:
  std::string out_;
  int indent_ = 0;
};

int mask_of(int bits) { return (1 << bits) - 1; }

// Extraction of code k from a packed unit. word(i) names the vector holding word i of the unit;
// for 3-bit codes that straddle two words, prev(i) names word i when it is not register resident.
template <class WordName, class PrevName>
std::string extract_expr(int bits, int k, WordName word, PrevName prev) {
  const int bit = k * bits;
  const int w = bit / 32;
  const int shift = bit % 32;
  std::string value;
  if (shift + bits <= 32) {
    value = fmt::format("simd::srli<{}>({})", shift, word(w));
  } else {
    value = fmt::format("simd::or_(simd::srli<{}>({}), simd::slli<{}>({}))", shift, prev(w), 32 - shift, word(w + 1));
  }
  return fmt::format("simd::cvt_int_float(simd::and_({}, {}U))", value, mask_of(bits));
}

// Word of the unit that holds the last bit of code k (3-bit codes are consumed word by word).
int phase_of(int bits, int k) { return (k * bits + bits - 1) / 32; }

enum class GroupMode { kFullColumn, kWide, kNarrow };

struct Shape {
  int bits;
  int unit;   // codes per packed unit
  int wpu;    // words per packed unit
  int lanes;
  int m_u;
  int t_u;
  GroupMode mode;
  std::size_t group;
  std::size_t gu = 0;   // units per group (wide)
  std::size_t gpu = 0;  // groups per unit (narrow)
};

Shape shape_of(const KernelDescriptor& d) {
  Shape s{d.bits,
          static_cast<int>(codes_per_unit(d.bits)),
          static_cast<int>(words_per_unit(d.bits)),
          d.lanes,
          d.m_u,
          d.t_u,
          GroupMode::kFullColumn,
          d.group_size};
  if (!d.full_column()) {
    if (d.group_size >= static_cast<std::size_t>(s.unit)) {
      s.mode = GroupMode::kWide;
      s.gu = d.group_size / static_cast<std::size_t>(s.unit);
    } else {
      s.mode = GroupMode::kNarrow;
      s.gpu = static_cast<std::size_t>(s.unit) / d.group_size;
    }
  }
  return s;
}

std::string flush_call(const Shape& s, const std::string& group_index) {
  std::string accs;
  for (int t = 0; t < s.t_u; ++t) accs += fmt::format("y{}, ", t);
  return fmt::format("flush_tile({}scales + ({}) * m, y);", accs, group_index);
}

// Body of one step over `rows` packed units starting at unit u.
void emit_step(Emitter& e, const Shape& s, int rows) {
  const int L = s.lanes;
  for (int p = 0; p < s.wpu; ++p) {
    for (int r = 0; r < rows; ++r) {
      for (int t = 0; t < s.t_u; ++t) {
        e.line("w{}_{} = VU::load(w + ((u + {}) * {} + {}) * ld + {});", r, t, r, s.wpu, p, t * L);
      }
    }
    for (int k = 0; k < s.unit; ++k) {
      if (phase_of(s.bits, k) != p) continue;
      for (int r = 0; r < rows; ++r) {
        e.line("x{} = VF::broadcast(x[(u + {}) * {} + {}]);", r, r, s.unit, k);
        for (int t = 0; t < s.t_u; ++t) {
          auto word = [&](int) { return fmt::format("w{}_{}", r, t); };
          auto prev = [&](int wi) { return fmt::format("VU::load(w + ((u + {}) * {} + {}) * ld + {})", r, s.wpu, wi, t * L); };
          e.line("y{} = simd::fmadd(x{}, {}, y{});", t, r, extract_expr(s.bits, k, word, prev), t);
        }
        if (s.mode == GroupMode::kNarrow && (k + 1) % static_cast<int>(s.group) == 0) {
          const int h = (k + 1) / static_cast<int>(s.group) - 1;
          e.line("{}", flush_call(s, fmt::format("(unit0 + u + {}) * {} + {}", r, s.gpu, h)));
        }
      }
    }
  }
}

void emit_flush_helper(Emitter& e, const Shape& s) {
  std::string params;
  for (int t = 0; t < s.t_u; ++t) params += fmt::format("VF& y{}, ", t);
  e.line("// Adds the scaled group accumulators to the output and clears them.");
  e.line("inline void flush_tile({}const float* s, float* out) {{", params);
  e.in();
  e.line("QIGEN_ON_FLUSH();");
  for (int t = 0; t < s.t_u; ++t) {
    e.line("simd::fmadd(VF::load(s + {0}), y{1}, VF::load(out + {0})).store(out + {0});", t * s.lanes, t);
    e.line("y{} = VF::zero();", t);
  }
  e.out();
  e.line("}}");
}

}  // namespace

void KernelDescriptor::validate() const {
  QuantConfig{bits, group_size}.validate();
  if (lanes < 1) throw ConfigError("kernel lanes must be >= 1");
  if (m_u < 1 || t_u < 1) throw ConfigError("register tile sides must be >= 1");
  if (register_pressure(m_u, t_u) > vregs) {
    throw ConfigError(fmt::format("register tile {}x{} needs {} vector registers, only {} available", m_u, t_u,
                                  register_pressure(m_u, t_u), vregs));
  }
  const std::size_t unit = codes_per_unit(bits);
  if (group_size != kFullColumn) {
    const bool ok = group_size >= unit ? group_size % unit == 0 : unit % group_size == 0;
    if (!ok) {
      throw ConfigError(fmt::format("group size {} is incompatible with the {}-code packing unit", group_size, unit));
    }
  }
  if (name.empty()) throw ConfigError("kernel descriptor has no name");
}

std::string kernel_name(int bits, std::size_t group_size, int m_u, int t_u, int lanes) {
  std::string g = group_size == kFullColumn ? "fc" : fmt::format("g{}", group_size);
  std::string name = fmt::format("q{}_{}_{}x{}", bits, g, m_u, t_u);
  if (lanes != 8) name += fmt::format("_l{}", lanes);
  return name;
}

KernelDescriptor make_descriptor(int bits, std::size_t group_size, int m_u, int t_u, int lanes, int vregs) {
  KernelDescriptor d{bits, group_size, m_u, t_u, lanes, vregs, kernel_name(bits, group_size, m_u, t_u, lanes)};
  d.validate();
  return d;
}

std::string generate_unpack(int bits, int lanes) {
  QuantConfig{bits}.validate();
  if (lanes < 1) throw ConfigError("kernel lanes must be >= 1");
  const int unit = static_cast<int>(codes_per_unit(bits));
  const int wpu = static_cast<int>(words_per_unit(bits));
  Emitter e;
  e.line("// Unpacks {} {}-bit codes ({} lane{}): shift right, mask, convert.", unit, bits, lanes, lanes == 1 ? "" : "s");
  std::string words;
  for (int w = 0; w < wpu; ++w) words += fmt::format("const simd::u32x<{}>& v{}, ", lanes, w);
  e.line("inline void unpack({}simd::f32x<{}>* l) {{", words, lanes);
  e.in();
  e.line("const simd::u32x<{}> mask = simd::u32x<{}>::broadcast({});", lanes, lanes, mask_of(bits));
  for (int k = 0; k < unit; ++k) {
    const int bit = k * bits;
    const int w = bit / 32;
    const int shift = bit % 32;
    std::string value;
    if (shift + bits <= 32) {
      value = fmt::format("simd::srli<{}>(v{})", shift, w);
    } else {
      value = fmt::format("simd::or_(simd::srli<{}>(v{}), simd::slli<{}>(v{}))", shift, w, 32 - shift, w + 1);
    }
    e.line("l[{}] = simd::cvt_int_float(simd::and_({}, mask));", k, value);
  }
  e.out();
  e.line("}}");
  return e.str();
}

std::string generate_micro_kernel(const KernelDescriptor& desc) {
  desc.validate();
  const Shape s = shape_of(desc);
  Emitter e;
  e.line("// Register tile {}x{}: {} broadcast, {} weight and {} accumulator vectors.", s.m_u, s.t_u, s.m_u,
         s.m_u * s.t_u, s.t_u);
  e.line("inline void micro_tile(const std::uint32_t* w, std::size_t ld, const float* x, std::size_t units,");
  e.line("                       std::size_t unit0, const float* scales, std::size_t m, float* y) {{");
  e.in();
  if (s.mode == GroupMode::kFullColumn) e.line("(void)unit0, (void)scales, (void)m;");
  for (int t = 0; t < s.t_u; ++t) {
    if (s.mode == GroupMode::kFullColumn) {
      e.line("VF y{} = VF::load(y + {});", t, t * s.lanes);
    } else {
      e.line("VF y{} = VF::zero();", t);
    }
  }
  const int step_rows = s.mode == GroupMode::kNarrow ? 1 : s.m_u;
  for (int r = 0; r < step_rows; ++r) e.line("VF x{};", r);
  for (int r = 0; r < step_rows; ++r) {
    for (int t = 0; t < s.t_u; ++t) e.line("VU w{}_{};", r, t);
  }

  auto full_steps = [&](const std::string& end) {
    if (step_rows > 1) {
      e.line("for (; u + {} <= {}; u += {}) {{", step_rows, end, step_rows);
      e.in();
      e.line("// step begin");
      emit_step(e, s, step_rows);
      e.line("// step end");
      e.out();
      e.line("}}");
    }
    e.line("for (; u < {}; ++u) {{", end);
    e.in();
    if (step_rows == 1) e.line("// step begin");
    emit_step(e, s, 1);
    if (step_rows == 1) e.line("// step end");
    e.out();
    e.line("}}");
  };

  switch (s.mode) {
    case GroupMode::kFullColumn:
      e.line("std::size_t u = 0;");
      full_steps("units");
      for (int t = 0; t < s.t_u; ++t) e.line("y{}.store(y + {});", t, t * s.lanes);
      break;
    case GroupMode::kWide:
      e.line("// Blocks start on group boundaries; each group is reduced then flushed once.");
      e.line("for (std::size_t gs = 0; gs < units; gs += {}) {{", s.gu);
      e.in();
      e.line("const std::size_t ge = gs + {} < units ? gs + {} : units;", s.gu, s.gu);
      e.line("std::size_t u = gs;");
      full_steps("ge");
      e.line("{}", flush_call(s, fmt::format("(unit0 + gs) / {}", s.gu)));
      e.out();
      e.line("}}");
      break;
    case GroupMode::kNarrow:
      e.line("// {} groups per packed unit: flushed inside the unit.", s.gpu);
      e.line("std::size_t u = 0;");
      full_steps("units");
      break;
  }
  e.out();
  e.line("}}");
  return e.str();
}

KernelSource generate_qgemv(const KernelDescriptor& desc) {
  desc.validate();
  const Shape s = shape_of(desc);
  const int L = s.lanes;
  Emitter e;
  e.line("// Generated by qigen kernelgen; do not edit.");
  e.line("// kernel {}: bits={} group={} tile={}x{} lanes={}", desc.name, desc.bits,
         desc.full_column() ? std::string("full-column") : std::to_string(desc.group_size), desc.m_u, desc.t_u, L);
  e.line("#include <algorithm>");
  e.line("#include <cstddef>");
  e.line("#include <cstdint>");
  e.blank();
  e.line("#include \"qigen/kernel_abi.hpp\"");
  e.line("#include \"qigen/simd.hpp\"");
  e.blank();
  e.line("#ifndef QIGEN_ON_FLUSH");
  e.line("#define QIGEN_ON_FLUSH() ((void)0)");
  e.line("#endif");
  e.blank();
  e.line("namespace qigen::kernels {{");
  e.line("namespace {{");
  e.blank();
  e.line("using VF = simd::f32x<{}>;", L);
  e.line("using VU = simd::u32x<{}>;", L);
  e.line("constexpr std::size_t kUnit = {};", s.unit);
  e.line("constexpr std::size_t kWordsPerUnit = {};", s.wpu);
  e.blank();
  e.raw(generate_unpack(desc.bits, L));
  if (L != 1) {
    e.blank();
    e.raw(generate_unpack(desc.bits, 1));
  }
  e.blank();
  if (s.mode != GroupMode::kFullColumn) {
    emit_flush_helper(e, s);
    e.blank();
  }
  e.raw(generate_micro_kernel(desc));
  e.blank();

  // Single column vector (or single lane): the plain unpack-then-accumulate loop.
  e.line("template <class VFn, class VUn>");
  e.line("inline void column_vector(const std::uint32_t* w, std::size_t ld, const float* x, std::size_t units,");
  e.line("                          std::size_t unit0, const float* scales, std::size_t m, float* y) {{");
  e.in();
  if (s.mode == GroupMode::kFullColumn) {
    e.line("(void)unit0, (void)scales, (void)m;");
    e.line("VFn acc = VFn::load(y);");
  } else {
    e.line("VFn acc = VFn::zero();");
  }
  e.line("VFn l[kUnit];");
  e.line("for (std::size_t u = 0; u < units; ++u) {{");
  e.in();
  std::string args;
  for (int wi = 0; wi < s.wpu; ++wi) {
    e.line("const VUn v{} = VUn::load(w + (u * kWordsPerUnit + {}) * ld);", wi, wi);
    args += fmt::format("v{}, ", wi);
  }
  e.line("unpack({}l);", args);
  e.line("for (std::size_t k = 0; k < kUnit; ++k) {{");
  e.in();
  e.line("acc = simd::fmadd(VFn::broadcast(x[u * kUnit + k]), l[k], acc);");
  if (s.mode == GroupMode::kNarrow) {
    e.line("if ((k + 1) % {} == 0) {{", s.group);
    e.in();
    e.line("QIGEN_ON_FLUSH();");
    e.line("const float* sg = scales + ((unit0 + u) * {} + k / {}) * m;", s.gpu, s.group);
    e.line("simd::fmadd(VFn::load(sg), acc, VFn::load(y)).store(y);");
    e.line("acc = VFn::zero();");
    e.out();
    e.line("}}");
  }
  e.out();
  e.line("}}");
  if (s.mode == GroupMode::kWide) {
    e.line("if ((u + 1) % {} == 0 || u + 1 == units) {{", s.gu);
    e.in();
    e.line("QIGEN_ON_FLUSH();");
    e.line("const float* sg = scales + ((unit0 + u) / {}) * m;", s.gu);
    e.line("simd::fmadd(VFn::load(sg), acc, VFn::load(y)).store(y);");
    e.line("acc = VFn::zero();");
    e.out();
    e.line("}}");
  }
  e.out();
  e.line("}}");
  if (s.mode == GroupMode::kFullColumn) e.line("acc.store(y);");
  e.out();
  e.line("}}");
  e.blank();
  e.line("}}  // namespace");
  e.blank();

  e.line("void {}(const std::uint32_t* words, const float* scales, const float* zeros, const float* x,", desc.name);
  e.line("    const float* sums, float* y, std::size_t n, std::size_t m, const BlockDesc* blocks,");
  e.line("    std::size_t block_count) {{");
  e.in();
  e.line("using V1 = simd::f32x<1>;");
  e.line("using U1 = simd::u32x<1>;");
  e.line("for (std::size_t b = 0; b < block_count; ++b) {{");
  e.in();
  e.line("if (blocks[b].row0 == 0) std::fill_n(y + blocks[b].col0, blocks[b].cols, 0.0F);");
  e.out();
  e.line("}}");
  e.line("// Blocks arrive in Z-curve storage order.");
  e.line("for (std::size_t b = 0; b < block_count; ++b) {{");
  e.in();
  e.line("const BlockDesc& d = blocks[b];");
  e.line("const std::uint32_t* wb = words + d.word_offset;");
  e.line("const std::size_t units = d.rows / kUnit;");
  e.line("const std::size_t unit0 = d.row0 / kUnit;");
  e.line("const float* xb = x + d.row0;");
  e.line("const float* sb = scales + d.col0;");
  e.line("float* yb = y + d.col0;");
  e.line("std::size_t c = 0;");
  e.line("for (; c + {} <= d.cols; c += {}) micro_tile(wb + c, d.ld, xb, units, unit0, sb + c, m, yb + c);",
         s.t_u * L, s.t_u * L);
  if (L != 1) {
    e.line("for (; c + {} <= d.cols; c += {}) column_vector<VF, VU>(wb + c, d.ld, xb, units, unit0, sb + c, m, yb + c);",
           L, L);
  }
  e.line("for (; c < d.cols; ++c) column_vector<V1, U1>(wb + c, d.ld, xb, units, unit0, sb + c, m, yb + c);");
  e.out();
  e.line("}}");
  e.line("// Scale and zero-point correction, once per column.");
  if (s.mode == GroupMode::kFullColumn) {
    e.line("(void)n;");
    e.line("const float xhat = sums[0];");
  } else {
    e.line("const std::size_t groups = n / {};", desc.group_size);
  }
  e.line("for (std::size_t b = 0; b < block_count; ++b) {{");
  e.in();
  e.line("if (blocks[b].row0 != 0) continue;");
  e.line("for (std::size_t j = blocks[b].col0; j < blocks[b].col0 + blocks[b].cols; ++j) {{");
  e.in();
  if (s.mode == GroupMode::kFullColumn) {
    e.line("y[j] = scales[j] * (y[j] - zeros[j] * xhat);");
  } else {
    e.line("float corr = 0.0F;");
    e.line("for (std::size_t g = 0; g < groups; ++g) corr += scales[g * m + j] * zeros[g * m + j] * sums[1 + g];");
    e.line("y[j] -= corr;");
  }
  e.out();
  e.line("}}");
  e.out();
  e.line("}}");
  e.out();
  e.line("}}");
  e.blank();
  e.line("}}  // namespace qigen::kernels");

  KernelSource ks;
  ks.source_text = e.str();
  ks.entry_symbol = desc.name;
  ks.file_name = desc.name + ".gen.cpp";
  ks.descriptor = desc;
  return ks;
}

std::string generate_registry(std::span<const KernelDescriptor> descs) {
  Emitter e;
  e.line("// Generated by qigen kernelgen; do not edit.");
  e.line("#include <cstddef>");
  e.line("#include <cstdint>");
  e.line("#include <span>");
  e.blank();
  e.line("#include \"qigen/kernel_abi.hpp\"");
  e.line("#include \"qigen/kernels.hpp\"");
  e.blank();
  e.line("namespace qigen::kernels {{");
  e.blank();
  for (const auto& d : descs) {
    e.line("void {}(const std::uint32_t*, const float*, const float*, const float*, const float*, float*,", d.name);
    e.line("    std::size_t, std::size_t, const BlockDesc*, std::size_t);");
  }
  e.blank();
  e.line("std::span<const KernelEntry> registry() {{");
  e.in();
  if (descs.empty()) {
    e.line("return {{}};");
  } else {
    e.line("static constexpr KernelEntry kTable[] = {{");
    e.in();
    for (const auto& d : descs) {
      e.line("{{{}, {}, {}, {}, {}, \"{}\", &{}}},", d.bits, d.group_size, d.m_u, d.t_u, d.lanes, d.name, d.name);
    }
    e.out();
    e.line("}};");
    e.line("return kTable;");
  }
  e.out();
  e.line("}}");
  e.blank();
  e.line("}}  // namespace qigen::kernels");
  return e.str();
}

std::string generate_manifest(std::span<const KernelDescriptor> descs) {
  nlohmann::json kernels = nlohmann::json::array();
  for (const auto& d : descs) {
    kernels.push_back({{"name", d.name},
                       {"file", d.name + ".gen.cpp"},
                       {"bits", d.bits},
                       {"grouping", d.full_column() ? std::string("full_column") : std::string("grouped")},
                       {"group_size", d.group_size},
                       {"m_u", d.m_u},
                       {"t_u", d.t_u},
                       {"lanes", d.lanes},
                       {"vregs", d.vregs}});
  }
  nlohmann::json doc{{"generator", "qigen"}, {"kernels", kernels}};
  return doc.dump(2) + "\n";
}

std::vector<std::string> write_kernel_set(std::span<const KernelDescriptor> descs, const std::string& dir,
                                          bool with_registry) {
  namespace fs = std::filesystem;
  std::set<std::string> names;
  for (const auto& d : descs) {
    if (!names.insert(d.name).second) throw ConfigError("duplicate kernel " + d.name);
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());

  std::vector<std::string> written;
  // Unchanged files are left alone so the build does not recompile them.
  auto emit = [&](const std::string& file, const std::string& text) {
    const fs::path path = fs::path(dir) / file;
    {
      std::ifstream in(path, std::ios::binary);
      if (in) {
        std::string old((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (old == text) {
          written.push_back(path.string());
          return;
        }
      }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    written.push_back(path.string());
  };
  for (const auto& d : descs) {
    const KernelSource ks = generate_qgemv(d);
    emit(ks.file_name, ks.source_text);
  }
  if (with_registry) emit("kernel_registry.gen.cpp", generate_registry(descs));
  emit("manifest.json", generate_manifest(descs));
  return written;
}

}  // namespace qigen
