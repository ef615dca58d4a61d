#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pcic/entropy_models.hpp"
#include "pcic/tensor.hpp"

namespace pcic {

/// On-wire layout (integers big-endian): magic "PCIC", version u8=1,
/// flags u8 (bit0 conditional, bit1 zeros-mode, bit2 encoder-only,
/// bit3 decoder-only), lambda_index u8, orig_H u16, orig_W u16,
/// z_len u32, z bytes, y_len u32, y bytes.
struct BitstreamHeader {
    std::uint8_t version = 1;
    bool conditional = false;
    bool zeros_mode = false;
    bool encoder_only = false;
    bool decoder_only = false;
    std::uint8_t lambda_index = 0;
    std::uint16_t orig_h = 0;
    std::uint16_t orig_w = 0;
};

struct Bitstream {
    BitstreamHeader header;
    std::vector<std::uint8_t> z_payload;
    std::vector<std::uint8_t> y_payload;

    std::size_t total_bytes() const { return kHeaderBytes + z_payload.size() + y_payload.size(); }
    static constexpr std::size_t kHeaderBytes = 19;
};

std::vector<std::uint8_t> serialize_bitstream(const Bitstream& stream);
Bitstream parse_bitstream(const std::vector<std::uint8_t>& bytes);

void write_bitstream_file(const std::filesystem::path& path, const Bitstream& stream);
Bitstream read_bitstream_file(const std::filesystem::path& path);

/// Codes integer symbols k = round(y - mu) against the zero-mean Gaussian
/// scale table; each element's scale index derives from `sigma` (identical
/// on both ends). Out-of-support symbols escape to 32-bit bypass values.
std::vector<std::uint8_t> encode_y_payload(const Tensor& symbols, const Tensor& sigma);
Tensor decode_y_payload(const std::vector<std::uint8_t>& payload, const Tensor& sigma);

/// Codes integer hyper-latent symbols against the factorized model's
/// per-channel CDFs.
std::vector<std::uint8_t> encode_z_payload(const Tensor& symbols, const FactorizedModel& model);
Tensor decode_z_payload(const std::vector<std::uint8_t>& payload, const std::vector<int>& shape,
                        const FactorizedModel& model);

}  // namespace pcic
