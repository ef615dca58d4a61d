#include "pcic/range_coder.hpp"

#include "pcic/errors.hpp"

namespace pcic {

namespace {
constexpr std::uint32_t kTopValue = 1u << 24;
constexpr int kPrecision = 16;
}  // namespace

void RangeEncoder::shift_low() {
    if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
        const auto carry = static_cast<std::uint8_t>(low_ >> 32);
        std::uint8_t byte = cache_;
        do {
            out_.push_back(static_cast<std::uint8_t>(byte + carry));
            byte = 0xFF;
        } while (--cache_size_ != 0);
        cache_ = static_cast<std::uint8_t>(low_ >> 24);
    }
    ++cache_size_;
    low_ = (low_ << 8) & 0xFFFFFFFFull;
}

void RangeEncoder::encode(std::uint32_t cum_lo, std::uint32_t cum_hi) {
    const std::uint32_t r = range_ >> kPrecision;
    low_ += static_cast<std::uint64_t>(r) * cum_lo;
    range_ = r * (cum_hi - cum_lo);
    while (range_ < kTopValue) {
        shift_low();
        range_ <<= 8;
    }
}

void RangeEncoder::encode_bits(std::uint32_t value, int nbits) {
    for (int i = nbits - 1; i >= 0; --i) {
        range_ >>= 1;
        if ((value >> i) & 1u) low_ += range_;
        while (range_ < kTopValue) {
            shift_low();
            range_ <<= 8;
        }
    }
}

std::vector<std::uint8_t> RangeEncoder::finish() {
    for (int i = 0; i < 5; ++i) shift_low();
    return std::move(out_);
}

RangeDecoder::RangeDecoder(const std::vector<std::uint8_t>& bytes) : bytes_(&bytes) {
    next_byte();  // leading byte emitted by the encoder's initial cache
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
    // Reads past the payload return zeros; the symbol count bounds decoding.
    return pos_ < bytes_->size() ? (*bytes_)[pos_++] : 0;
}

std::uint32_t RangeDecoder::decode_target() {
    const std::uint32_t r = range_ >> kPrecision;
    const std::uint32_t target = code_ / r;
    return target < ((1u << kPrecision) - 1) ? target : ((1u << kPrecision) - 1);
}

void RangeDecoder::consume(std::uint32_t cum_lo, std::uint32_t cum_hi) {
    const std::uint32_t r = range_ >> kPrecision;
    code_ -= r * cum_lo;
    range_ = r * (cum_hi - cum_lo);
    while (range_ < kTopValue) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
    }
}

std::uint32_t RangeDecoder::decode_bits(int nbits) {
    std::uint32_t value = 0;
    for (int i = 0; i < nbits; ++i) {
        range_ >>= 1;
        std::uint32_t bit = 0;
        if (code_ >= range_) {
            code_ -= range_;
            bit = 1;
        }
        value = (value << 1) | bit;
        while (range_ < kTopValue) {
            code_ = (code_ << 8) | next_byte();
            range_ <<= 8;
        }
    }
    return value;
}

}  // namespace pcic
