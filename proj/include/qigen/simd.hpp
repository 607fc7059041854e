// SPDX-License-Identifier: Apache-2.0
#pragma once

// Vector-operation layer used by generated kernels: load, store, broadcast, fmadd,
// reduce_add, srli, and_, cvt_int_float (plus slli/or_ for 3-bit reassembly).
// The generic template is a portable scalar implementation; 8 lanes map onto AVX2+FMA
// when the compiler targets it.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define QIGEN_SIMD_AVX2 1
#else
#define QIGEN_SIMD_AVX2 0
#endif

namespace qigen::simd {

template <int L>
struct f32x {
  static constexpr int kLanes = L;
  std::array<float, L> v;

  static f32x load(const float* p) {
    f32x r;
    std::memcpy(r.v.data(), p, sizeof(float) * L);
    return r;
  }
  static f32x broadcast(float a) {
    f32x r;
    r.v.fill(a);
    return r;
  }
  static f32x zero() { return broadcast(0.0F); }
  void store(float* p) const { std::memcpy(p, v.data(), sizeof(float) * L); }
};

template <int L>
struct u32x {
  static constexpr int kLanes = L;
  std::array<std::uint32_t, L> v;

  static u32x load(const std::uint32_t* p) {
    u32x r;
    std::memcpy(r.v.data(), p, sizeof(std::uint32_t) * L);
    return r;
  }
  static u32x broadcast(std::uint32_t a) {
    u32x r;
    r.v.fill(a);
    return r;
  }
};

template <int L>
inline f32x<L> fmadd(const f32x<L>& a, const f32x<L>& b, const f32x<L>& c) {
  f32x<L> r;
  for (int i = 0; i < L; ++i) r.v[i] = std::fma(a.v[i], b.v[i], c.v[i]);
  return r;
}

template <int L>
inline float reduce_add(const f32x<L>& a) {
  float s = 0.0F;
  for (int i = 0; i < L; ++i) s += a.v[i];
  return s;
}

template <int S, int L>
inline u32x<L> srli(const u32x<L>& a) {
  u32x<L> r;
  for (int i = 0; i < L; ++i) r.v[i] = a.v[i] >> S;
  return r;
}

template <int S, int L>
inline u32x<L> slli(const u32x<L>& a) {
  u32x<L> r;
  for (int i = 0; i < L; ++i) r.v[i] = a.v[i] << S;
  return r;
}

template <int L>
inline u32x<L> and_(const u32x<L>& a, std::uint32_t mask) {
  u32x<L> r;
  for (int i = 0; i < L; ++i) r.v[i] = a.v[i] & mask;
  return r;
}

template <int L>
inline u32x<L> and_(const u32x<L>& a, const u32x<L>& mask) {
  u32x<L> r;
  for (int i = 0; i < L; ++i) r.v[i] = a.v[i] & mask.v[i];
  return r;
}

template <int L>
inline u32x<L> or_(const u32x<L>& a, const u32x<L>& b) {
  u32x<L> r;
  for (int i = 0; i < L; ++i) r.v[i] = a.v[i] | b.v[i];
  return r;
}

template <int L>
inline f32x<L> cvt_int_float(const u32x<L>& a) {
  f32x<L> r;
  for (int i = 0; i < L; ++i) r.v[i] = static_cast<float>(static_cast<std::int32_t>(a.v[i]));
  return r;
}

#if QIGEN_SIMD_AVX2

template <>
struct f32x<8> {
  static constexpr int kLanes = 8;
  __m256 v;

  static f32x load(const float* p) { return {_mm256_loadu_ps(p)}; }
  static f32x broadcast(float a) { return {_mm256_set1_ps(a)}; }
  static f32x zero() { return {_mm256_setzero_ps()}; }
  void store(float* p) const { _mm256_storeu_ps(p, v); }
};

template <>
struct u32x<8> {
  static constexpr int kLanes = 8;
  __m256i v;

  static u32x load(const std::uint32_t* p) { return {_mm256_loadu_si256(reinterpret_cast<const __m256i*>(p))}; }
  static u32x broadcast(std::uint32_t a) { return {_mm256_set1_epi32(static_cast<int>(a))}; }
};

template <>
inline f32x<8> fmadd(const f32x<8>& a, const f32x<8>& b, const f32x<8>& c) {
  return {_mm256_fmadd_ps(a.v, b.v, c.v)};
}

template <>
inline float reduce_add(const f32x<8>& a) {
  alignas(32) float t[8];
  _mm256_store_ps(t, a.v);
  float s = 0.0F;
  for (float x : t) s += x;
  return s;
}

template <int S>
inline u32x<8> srli(const u32x<8>& a) {
  return {_mm256_srli_epi32(a.v, S)};
}

template <int S>
inline u32x<8> slli(const u32x<8>& a) {
  return {_mm256_slli_epi32(a.v, S)};
}

template <>
inline u32x<8> and_(const u32x<8>& a, std::uint32_t mask) {
  return {_mm256_and_si256(a.v, _mm256_set1_epi32(static_cast<int>(mask)))};
}

template <>
inline u32x<8> and_(const u32x<8>& a, const u32x<8>& mask) {
  return {_mm256_and_si256(a.v, mask.v)};
}

template <>
inline u32x<8> or_(const u32x<8>& a, const u32x<8>& b) {
  return {_mm256_or_si256(a.v, b.v)};
}

template <>
inline f32x<8> cvt_int_float(const u32x<8>& a) {
  return {_mm256_cvtepi32_ps(a.v)};
}

#endif

}  // namespace qigen::simd
