#include "magc/coding/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "magc/error.hpp"

namespace magc {
namespace {

constexpr int kWindowBits = 56;
constexpr std::uint64_t kWindowMask = (std::uint64_t{1} << kWindowBits) - 1;
constexpr std::uint64_t kRenormBound = std::uint64_t{1} << 48;
constexpr std::uint64_t kCarryThreshold = std::uint64_t{0xFF} << 48;
constexpr std::size_t kInitBytes = 8;

constexpr double kInvSqrt2 = 0.70710678118654752440;
// Bins whose nearest edge lies this many sigmas past the mean carry
// less than one count in 2^16 and go straight to the minimum frequency.
constexpr double kNegligibleSigmas = 9.0;

// Upper-tail mass Q(|t|) of the standard normal.
double tail(double t) { return 0.5 * std::erfc(std::abs(t) * kInvSqrt2); }

// Mass of N(mu, sigma) on [a, b], a < b, without cancellation.
double interval_mass(double a, double b, double mu, double sigma) {
  const double ta = (a - mu) / sigma;
  const double tb = (b - mu) / sigma;
  if (ta >= 0.0) return tail(ta) - tail(tb);
  if (tb <= 0.0) return tail(tb) - tail(ta);
  return 1.0 - tail(ta) - tail(tb);
}

std::uint32_t to_freq(double p) {
  const double scaled = std::nearbyint(p * static_cast<double>(kCdfTotal));
  return std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::min(scaled, double(kCdfTotal))));
}

}  // namespace

void build_cdf(double mu, double sigma, int radius, QuantizedCdf& out) {
  check(sigma > 0.0 && std::isfinite(sigma) && std::isfinite(mu), "build_cdf: invalid Gaussian parameters",
        ErrorCode::kNumeric);
  check(radius >= 1, "build_cdf: support radius must be positive");
  constexpr double kCenterLimit = 1e9;
  const auto center = static_cast<std::int64_t>(std::round(std::clamp(mu, -kCenterLimit, kCenterLimit)));
  const std::size_t bins = 2 * static_cast<std::size_t>(radius) + 1;
  out.center = center;
  out.radius = radius;
  out.cum.resize(bins + 2);

  std::vector<std::uint32_t>& f = out.cum;  // frequencies in [1..], prefix-summed below
  const double reach = kNegligibleSigmas * sigma + 1.0;
  std::uint64_t total = 0;
  std::size_t largest = 1;
  for (std::size_t k = 0; k < bins; ++k) {
    const double s = static_cast<double>(center - radius + static_cast<std::int64_t>(k));
    std::uint32_t fk = 1;
    if (std::abs(s - mu) - 0.5 <= reach) fk = to_freq(interval_mass(s - 0.5, s + 0.5, mu, sigma));
    f[k + 1] = fk;
    total += fk;
    const auto off = [&](std::size_t slot) { return std::abs(static_cast<long>(slot) - 1 - radius); };
    if (fk > f[largest] || (fk == f[largest] && off(k + 1) < off(largest))) largest = k + 1;
  }
  const double lo_edge = static_cast<double>(center - radius) - 0.5;
  const double hi_edge = static_cast<double>(center + radius) + 0.5;
  const double escape_mass = (lo_edge <= mu ? tail((lo_edge - mu) / sigma) : 1.0 - tail((lo_edge - mu) / sigma)) +
                             (hi_edge >= mu ? tail((hi_edge - mu) / sigma) : 1.0 - tail((hi_edge - mu) / sigma));
  f[bins + 1] = to_freq(escape_mass);
  total += f[bins + 1];
  if (f[bins + 1] > f[largest]) largest = bins + 1;

  const std::int64_t fixed = static_cast<std::int64_t>(f[largest]) + static_cast<std::int64_t>(kCdfTotal) -
                             static_cast<std::int64_t>(total);
  check(fixed >= 1, "build_cdf: cannot normalize table", ErrorCode::kNumeric);
  f[largest] = static_cast<std::uint32_t>(fixed);

  f[0] = 0;
  for (std::size_t k = 1; k < f.size(); ++k) f[k] += f[k - 1];
}

QuantizedCdf build_cdf(double mu, double sigma, int radius) {
  QuantizedCdf cdf;
  build_cdf(mu, sigma, radius, cdf);
  return cdf;
}

void RangeEncoder::shift_low() {
  if (low_ < kCarryThreshold || low_ > kWindowMask) {
    const auto carry = static_cast<std::uint8_t>(low_ >> kWindowBits);
    out_.push_back(static_cast<std::uint8_t>(cache_ + carry));
    for (; pending_ > 0; --pending_) out_.push_back(static_cast<std::uint8_t>(0xFF + carry));
    cache_ = static_cast<std::uint8_t>(low_ >> (kWindowBits - 8));
  } else {
    ++pending_;
  }
  low_ = (low_ << 8) & kWindowMask;
}

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq) {
  const std::uint64_t r = range_ >> kCdfPrecision;
  low_ += r * cum;
  range_ = r * freq;
  while (range_ < kRenormBound) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::encode_symbol(const QuantizedCdf& cdf, std::int64_t symbol) {
  if (symbol >= cdf.symbol_min() && symbol <= cdf.symbol_max()) {
    const auto slot = static_cast<std::size_t>(symbol - cdf.symbol_min());
    encode(cdf.cum[slot], cdf.freq(slot));
    return;
  }
  check(symbol >= std::numeric_limits<std::int32_t>::min() && symbol <= std::numeric_limits<std::int32_t>::max(),
        "range coder: symbol " + std::to_string(symbol) + " exceeds the 32-bit escape range", ErrorCode::kNumeric);
  const std::size_t esc = cdf.escape_slot();
  encode(cdf.cum[esc], cdf.freq(esc));
  const auto raw = static_cast<std::uint32_t>(static_cast<std::int32_t>(symbol));
  encode(raw >> 16, 1);
  encode(raw & 0xFFFF, 1);
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  // The first output is the placeholder byte that absorbs a carry out of
  // an empty history; seven window bytes follow.
  for (std::size_t i = 0; i < kInitBytes; ++i) shift_low();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
  check(bytes.size() >= kInitBytes, "range decoder: stream shorter than its " + std::to_string(kInitBytes) +
                                        "-byte preamble", ErrorCode::kFormat);
  check(bytes[0] == 0, "range decoder: corrupt stream preamble", ErrorCode::kFormat);
  pos_ = 1;
  for (std::size_t i = 1; i < kInitBytes; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  check(pos_ < bytes_.size(), "range decoder: truncated stream", ErrorCode::kFormat);
  return bytes_[pos_++];
}

std::uint32_t RangeDecoder::peek() const {
  const std::uint64_t v = code_ / (range_ >> kCdfPrecision);
  return static_cast<std::uint32_t>(std::min<std::uint64_t>(v, kCdfTotal - 1));
}

void RangeDecoder::consume(std::uint32_t cum, std::uint32_t freq) {
  const std::uint64_t r = range_ >> kCdfPrecision;
  const std::uint64_t base = r * cum;
  check(code_ >= base, "range decoder: corrupt stream", ErrorCode::kFormat);
  code_ -= base;
  range_ = r * freq;
  while (range_ < kRenormBound) {
    code_ = ((code_ << 8) | next_byte()) & kWindowMask;
    range_ <<= 8;
  }
}

std::int64_t RangeDecoder::decode_symbol(const QuantizedCdf& cdf) {
  const std::uint32_t target = peek();
  const auto it = std::upper_bound(cdf.cum.begin() + 1, cdf.cum.end(), target);
  const auto slot = static_cast<std::size_t>(it - cdf.cum.begin() - 1);
  consume(cdf.cum[slot], cdf.freq(slot));
  if (slot != cdf.escape_slot()) return cdf.symbol_min() + static_cast<std::int64_t>(slot);
  const std::uint32_t hi = peek();
  consume(hi, 1);
  const std::uint32_t lo = peek();
  consume(lo, 1);
  return static_cast<std::int32_t>((hi << 16) | lo);
}

std::vector<std::uint8_t> encode_symbols(std::span<const std::int32_t> symbols, std::span<const double> mu,
                                         std::span<const double> sigma, int radius) {
  check(mu.size() == symbols.size() && sigma.size() == symbols.size(),
        "encode_symbols: symbol and parameter counts differ");
  RangeEncoder enc;
  QuantizedCdf cdf;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    build_cdf(mu[i], sigma[i], radius, cdf);
    enc.encode_symbol(cdf, symbols[i]);
  }
  return enc.finish();
}

std::vector<std::int32_t> decode_symbols(std::span<const std::uint8_t> bytes, std::size_t count,
                                         const FieldProvider& provider, int radius) {
  RangeDecoder dec(bytes);
  QuantizedCdf cdf;
  std::vector<std::int32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto [mu, sigma] = provider(i);
    build_cdf(mu, sigma, radius, cdf);
    out[i] = static_cast<std::int32_t>(dec.decode_symbol(cdf));
  }
  return out;
}

}  // namespace magc
