#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace magc {

inline constexpr int kCdfPrecision = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfPrecision;
inline constexpr int kDefaultSupportRadius = 64;

// Static frequency table for one Gaussian element. Slots 0..2r cover
// symbols round(mu)-r .. round(mu)+r; slot 2r+1 is the escape for anything
// outside, which is followed by the symbol as a raw 32-bit value.
struct QuantizedCdf {
  std::int64_t center = 0;
  int radius = 0;
  std::vector<std::uint32_t> cum;  // slots()+1 entries, cum[0]=0, back()=2^16

  std::size_t slots() const { return cum.size() - 1; }
  std::size_t escape_slot() const { return slots() - 1; }
  std::uint32_t freq(std::size_t slot) const { return cum[slot + 1] - cum[slot]; }
  std::int64_t symbol_min() const { return center - radius; }
  std::int64_t symbol_max() const { return center + radius; }
};

// Frequencies are round(p * 2^16) for the Gaussian bin masses, raised to at
// least 1, with the total corrected on the largest slot (the bin nearest
// the centre on ties; the escape slot when it outweighs every bin). Pure
// double arithmetic: equal (mu, sigma) give equal tables.
void build_cdf(double mu, double sigma, int radius, QuantizedCdf& out);
QuantizedCdf build_cdf(double mu, double sigma, int radius = kDefaultSupportRadius);

// Byte-oriented range coder with a 56-bit window over 64-bit registers and
// carry propagation through a cached byte plus a run of pending 0xFF bytes.
class RangeEncoder {
 public:
  // Codes the interval [cum, cum + freq) out of 2^16.
  void encode(std::uint32_t cum, std::uint32_t freq);
  void encode_symbol(const QuantizedCdf& cdf, std::int64_t symbol);
  // Flushes the window; the encoder must not be used afterwards.
  std::vector<std::uint8_t> finish();

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint64_t range_ = (std::uint64_t{1} << 56) - 1;
  std::uint8_t cache_ = 0;
  std::uint64_t pending_ = 0;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  // Throws a format error if |bytes| is too short to hold a stream.
  explicit RangeDecoder(std::span<const std::uint8_t> bytes);

  std::int64_t decode_symbol(const QuantizedCdf& cdf);
  // Target frequency in [0, 2^16) followed by consuming the chosen interval.
  std::uint32_t peek() const;
  void consume(std::uint32_t cum, std::uint32_t freq);

  std::size_t position() const { return pos_; }

 private:
  std::uint8_t next_byte();

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint64_t code_ = 0;
  std::uint64_t range_ = (std::uint64_t{1} << 56) - 1;
};

// Codes |symbols| against per-element (mu, sigma).
std::vector<std::uint8_t> encode_symbols(std::span<const std::int32_t> symbols, std::span<const double> mu,
                                         std::span<const double> sigma, int radius = kDefaultSupportRadius);

// Yields (mu, sigma) for element i, in order.
using FieldProvider = std::function<std::pair<double, double>(std::size_t)>;

std::vector<std::int32_t> decode_symbols(std::span<const std::uint8_t> bytes, std::size_t count,
                                         const FieldProvider& provider, int radius = kDefaultSupportRadius);

}  // namespace magc
