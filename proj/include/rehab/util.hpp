#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

namespace rehab {

using Rng = std::mt19937_64;

// 64-bit FNV-1a, used for stream keys and checkpoint checksums.
inline std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                           std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::uint64_t fnv1a(std::string_view text,
                           std::uint64_t hash = 0xcbf29ce484222325ULL) {
  return fnv1a(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()), hash);
}

// Independent generator for (seed, stream...) so results never depend on the
// order in which workers pick up episodes.
inline Rng make_rng(std::initializer_list<std::uint64_t> keys) {
  std::seed_seq::result_type words[16];
  std::size_t n = 0;
  for (std::uint64_t k : keys) {
    if (n + 2 > std::size(words)) break;
    words[n++] = static_cast<std::seed_seq::result_type>(k & 0xffffffffULL);
    words[n++] = static_cast<std::seed_seq::result_type>(k >> 32);
  }
  std::seed_seq seq(words, words + n);
  return Rng(seq);
}

inline std::int64_t round_half_up(double x) {
  return static_cast<std::int64_t>(std::floor(x + 0.5));
}

// Fixed-point text for CSV output; identical inputs give identical bytes.
inline std::string fixed(double value, int precision = 6) {
  char buf[64];
  if (value == 0.0) value = 0.0;  // drop negative zero
  auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed, precision);
  if (res.ec != std::errc{}) return "nan";
  return std::string(buf, res.ptr);
}

// Runs fn(i) for i in [0, count) on up to `workers` threads. Each index is
// handled exactly once; callers write results into per-index slots.
template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  const std::size_t w = std::min<std::size_t>(workers < 1 ? 1 : workers, count);
  if (w <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(w);
  {
    std::vector<std::jthread> pool;
    pool.reserve(w);
    for (std::size_t t = 0; t < w; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < count; i += w) fn(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace rehab
