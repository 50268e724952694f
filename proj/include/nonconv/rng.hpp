/*
   Copyright 2026 The nonconv Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <array>
#include <cstdint>

namespace nonconv {

/// Philox4x32-10 block function (Salmon et al. 2011). Stateless: the output
/// is a pure function of (counter, key).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr std::uint32_t M0 = 0xD2511F53u;
  static constexpr std::uint32_t M1 = 0xCD9E8D57u;
  static constexpr std::uint32_t W0 = 0x9E3779B9u;
  static constexpr std::uint32_t W1 = 0xBB67AE85u;

  static constexpr const char* name = "philox4x32-10";

  static constexpr Counter apply(Counter c, Key k) noexcept {
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        k[0] += W0;
        k[1] += W1;
      }
      const std::uint64_t p0 = std::uint64_t{M0} * c[0];
      const std::uint64_t p1 = std::uint64_t{M1} * c[2];
      c = Counter{static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0],
                  static_cast<std::uint32_t>(p1),
                  static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1],
                  static_cast<std::uint32_t>(p0)};
    }
    return c;
  }
};

/// splitmix64 finalizer, used to derive child seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seed for replicate r of a run keyed by master.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::uint64_t r) noexcept {
  return splitmix64(splitmix64(master) ^ splitmix64(r + 0x5851F42D4C957F2Dull));
}

/// A uniform on the open interval (0,1) held as a 52-bit integer j, with
/// u = (j + 1/2) 2^-52. Both u and 1-u are exact doubles; complement() is
/// computed from the integer form, so tiny upper-tail probabilities keep
/// full relative precision.
struct OpenUniform {
  std::uint64_t j;

  static constexpr double scale = 1.0 / 4503599627370496.0;  // 2^-52

  constexpr double value() const noexcept {
    return (static_cast<double>(j) + 0.5) * scale;
  }
  constexpr double complement() const noexcept {
    return (static_cast<double>((std::uint64_t{1} << 52) - j) - 0.5) * scale;
  }
};

/// Streams keep independent uses of one seed apart.
enum class Stream : std::uint32_t {
  sequence = 0,     // X_n of a simulated path
  moments = 1,      // Monte Carlo moments and group constants
  centering = 2,    // Monte Carlo truncated means
  reference = 3,    // stable reference draws
  permutation = 4,  // permutation tests
  cluster = 5,      // independent blocks for cluster estimates
  variable = 16     // variable j of a product gets variable + j
};

/// Counter-addressed generator: (seed, stream, index) -> four words.
class CounterRng {
public:
  constexpr CounterRng(std::uint64_t seed, std::uint32_t stream) noexcept
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  constexpr CounterRng(std::uint64_t seed, Stream s) noexcept
      : CounterRng(seed, static_cast<std::uint32_t>(s)) {}

  constexpr Philox4x32::Counter block(std::uint64_t index,
                                      std::uint32_t sub = 0) const noexcept {
    return Philox4x32::apply(
        Philox4x32::Counter{static_cast<std::uint32_t>(index),
                            static_cast<std::uint32_t>(index >> 32), stream_,
                            sub},
        key_);
  }

  /// First uniform of the block at index.
  constexpr OpenUniform uniform(std::uint64_t index) const noexcept {
    const auto b = block(index);
    return pack(b[0], b[1]);
  }

  /// Both uniforms of the block at index.
  constexpr std::array<OpenUniform, 2> uniform_pair(
      std::uint64_t index) const noexcept {
    const auto b = block(index);
    return {pack(b[0], b[1]), pack(b[2], b[3])};
  }

  constexpr std::uint32_t stream() const noexcept { return stream_; }

private:
  static constexpr OpenUniform pack(std::uint32_t hi,
                                    std::uint32_t lo) noexcept {
    return OpenUniform{((std::uint64_t{hi} << 32) | lo) >> 12};
  }

  Philox4x32::Key key_;
  std::uint32_t stream_;
};

}  // namespace nonconv
