#pragma once

#include <cstdint>
#include <vector>

namespace pcic {

/// 32-bit range coder with 16-bit probability precision. Symbols are coded
/// from cumulative frequencies (total fixed at 2^16); carries are resolved
/// through the classic cache/pending-0xFF scheme, so encoder output is a
/// plain byte stream the decoder consumes with no lookahead state. Direct
/// (bypass) bits share the same state machine.
class RangeEncoder {
public:
    /// cum_lo/cum_hi: cumulative bounds of the symbol, 0 <= lo < hi <= 2^16.
    void encode(std::uint32_t cum_lo, std::uint32_t cum_hi);

    /// Raw bits, most significant first.
    void encode_bits(std::uint32_t value, int nbits);

    /// Flushes the state; the encoder must not be reused afterwards.
    std::vector<std::uint8_t> finish();

private:
    void shift_low();

    std::uint64_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint8_t cache_ = 0;
    std::uint64_t cache_size_ = 1;
    std::vector<std::uint8_t> out_;
};

class RangeDecoder {
public:
    explicit RangeDecoder(const std::vector<std::uint8_t>& bytes);

    /// Value in [0, 2^16) locating the next symbol inside its CDF.
    std::uint32_t decode_target();

    /// Must be called with the bounds of the symbol found at the target.
    void consume(std::uint32_t cum_lo, std::uint32_t cum_hi);

    std::uint32_t decode_bits(int nbits);

private:
    std::uint8_t next_byte();

    const std::vector<std::uint8_t>* bytes_;
    std::size_t pos_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint32_t code_ = 0;
};

}  // namespace pcic
