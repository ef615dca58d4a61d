#include "pcic/bitstream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "pcic/errors.hpp"
#include "pcic/range_coder.hpp"

namespace pcic {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t zigzag(long long k) {
    // values are clamped well inside 32 bits before coding
    const long long z = (k << 1) ^ (k >> 63);
    return static_cast<std::uint32_t>(z);
}

long long unzigzag(std::uint32_t z) {
    return static_cast<long long>(z >> 1) ^ -static_cast<long long>(z & 1);
}

/// Finds the symbol whose cdf slot contains `target`.
std::size_t find_symbol(const std::vector<std::uint32_t>& cdf, std::uint32_t target) {
    auto it = std::upper_bound(cdf.begin() + 1, cdf.end(), target);
    return static_cast<std::size_t>(it - cdf.begin()) - 1;
}

constexpr long long kEscapeClamp = 1LL << 30;

}  // namespace

std::vector<std::uint8_t> serialize_bitstream(const Bitstream& s) {
    std::vector<std::uint8_t> out;
    out.reserve(s.total_bytes());
    out.insert(out.end(), {'P', 'C', 'I', 'C'});
    out.push_back(s.header.version);
    std::uint8_t flags = 0;
    if (s.header.conditional) flags |= 1u;
    if (s.header.zeros_mode) flags |= 2u;
    if (s.header.encoder_only) flags |= 4u;
    if (s.header.decoder_only) flags |= 8u;
    out.push_back(flags);
    out.push_back(s.header.lambda_index);
    put_u16(out, s.header.orig_h);
    put_u16(out, s.header.orig_w);
    put_u32(out, static_cast<std::uint32_t>(s.z_payload.size()));
    out.insert(out.end(), s.z_payload.begin(), s.z_payload.end());
    put_u32(out, static_cast<std::uint32_t>(s.y_payload.size()));
    out.insert(out.end(), s.y_payload.begin(), s.y_payload.end());
    return out;
}

Bitstream parse_bitstream(const std::vector<std::uint8_t>& b) {
    auto fail = [](const std::string& why) -> Bitstream {
        throw MalformedBitstream("bitstream: " + why);
    };
    if (b.size() < Bitstream::kHeaderBytes) return fail("truncated header");
    if (b[0] != 'P' || b[1] != 'C' || b[2] != 'I' || b[3] != 'C') return fail("bad magic");
    Bitstream s;
    s.header.version = b[4];
    if (s.header.version != 1) return fail("unsupported version");
    const std::uint8_t flags = b[5];
    s.header.conditional = flags & 1u;
    s.header.zeros_mode = flags & 2u;
    s.header.encoder_only = flags & 4u;
    s.header.decoder_only = flags & 8u;
    s.header.lambda_index = b[6];
    s.header.orig_h = static_cast<std::uint16_t>((b[7] << 8) | b[8]);
    s.header.orig_w = static_cast<std::uint16_t>((b[9] << 8) | b[10]);
    std::size_t pos = 11;
    auto read_u32 = [&](const char* what) {
        if (pos + 4 > b.size()) fail(std::string("truncated ") + what);
        std::uint32_t v = (static_cast<std::uint32_t>(b[pos]) << 24) |
                          (static_cast<std::uint32_t>(b[pos + 1]) << 16) |
                          (static_cast<std::uint32_t>(b[pos + 2]) << 8) | b[pos + 3];
        pos += 4;
        return v;
    };
    const std::uint32_t z_len = read_u32("z length");
    if (pos + z_len > b.size()) fail("truncated z payload");
    s.z_payload.assign(b.begin() + static_cast<long>(pos), b.begin() + static_cast<long>(pos + z_len));
    pos += z_len;
    const std::uint32_t y_len = read_u32("y length");
    if (pos + y_len > b.size()) fail("truncated y payload");
    s.y_payload.assign(b.begin() + static_cast<long>(pos), b.begin() + static_cast<long>(pos + y_len));
    return s;
}

void write_bitstream_file(const std::filesystem::path& path, const Bitstream& stream) {
    const auto bytes = serialize_bitstream(stream);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Bitstream read_bitstream_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return parse_bitstream(bytes);
}

std::vector<std::uint8_t> encode_y_payload(const Tensor& symbols, const Tensor& sigma) {
    if (!symbols.same_shape(sigma)) throw ShapeError("encode_y: shape mismatch");
    if (symbols.numel() == 0) return {};
    const auto& table = GaussianScaleTable::instance();
    RangeEncoder enc;
    for (std::size_t i = 0; i < symbols.numel(); ++i) {
        const int idx = table.index_for(sigma[i]);
        const auto& cdf = table.cdfs[static_cast<std::size_t>(idx)];
        const int offset = table.offsets[static_cast<std::size_t>(idx)];
        const long long k =
            std::clamp(std::llround(symbols[i]), -kEscapeClamp, kEscapeClamp);
        const std::size_t escape = cdf.size() - 2;
        if (k < -offset || k > offset) {
            enc.encode(cdf[escape], cdf[escape + 1]);
            enc.encode_bits(zigzag(k), 32);
        } else {
            const auto sym = static_cast<std::size_t>(k + offset);
            enc.encode(cdf[sym], cdf[sym + 1]);
        }
    }
    return enc.finish();
}

Tensor decode_y_payload(const std::vector<std::uint8_t>& payload, const Tensor& sigma) {
    Tensor out(sigma.shape());
    if (sigma.numel() == 0) return out;
    const auto& table = GaussianScaleTable::instance();
    RangeDecoder dec(payload);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const int idx = table.index_for(sigma[i]);
        const auto& cdf = table.cdfs[static_cast<std::size_t>(idx)];
        const int offset = table.offsets[static_cast<std::size_t>(idx)];
        const std::size_t sym = find_symbol(cdf, dec.decode_target());
        dec.consume(cdf[sym], cdf[sym + 1]);
        if (sym == cdf.size() - 2)
            out[i] = static_cast<double>(unzigzag(dec.decode_bits(32)));
        else
            out[i] = static_cast<double>(static_cast<long long>(sym) - offset);
    }
    return out;
}

std::vector<std::uint8_t> encode_z_payload(const Tensor& symbols, const FactorizedModel& model) {
    if (symbols.numel() == 0) return {};
    if (symbols.dim(0) != model.channels()) throw ShapeError("encode_z: channel mismatch");
    const auto cdfs = model.build_cdfs();
    const std::size_t plane = symbols.numel() / static_cast<std::size_t>(symbols.dim(0));
    RangeEncoder enc;
    for (int c = 0; c < symbols.dim(0); ++c) {
        const auto& table = cdfs[static_cast<std::size_t>(c)];
        const std::size_t escape = table.cdf.size() - 2;
        for (std::size_t i = 0; i < plane; ++i) {
            const long long k = std::clamp(
                std::llround(symbols[static_cast<std::size_t>(c) * plane + i]), -kEscapeClamp,
                kEscapeClamp);
            const long long sym = k - table.min_value;
            if (sym < 0 || sym >= static_cast<long long>(escape)) {
                enc.encode(table.cdf[escape], table.cdf[escape + 1]);
                enc.encode_bits(zigzag(k), 32);
            } else {
                enc.encode(table.cdf[static_cast<std::size_t>(sym)],
                           table.cdf[static_cast<std::size_t>(sym) + 1]);
            }
        }
    }
    return enc.finish();
}

Tensor decode_z_payload(const std::vector<std::uint8_t>& payload, const std::vector<int>& shape,
                        const FactorizedModel& model) {
    Tensor out(shape);
    if (out.numel() == 0) return out;
    if (shape[0] != model.channels()) throw ShapeError("decode_z: channel mismatch");
    const auto cdfs = model.build_cdfs();
    const std::size_t plane = out.numel() / static_cast<std::size_t>(shape[0]);
    RangeDecoder dec(payload);
    for (int c = 0; c < shape[0]; ++c) {
        const auto& table = cdfs[static_cast<std::size_t>(c)];
        const std::size_t escape = table.cdf.size() - 2;
        for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t sym = find_symbol(table.cdf, dec.decode_target());
            dec.consume(table.cdf[sym], table.cdf[sym + 1]);
            double v;
            if (sym == escape)
                v = static_cast<double>(unzigzag(dec.decode_bits(32)));
            else
                v = static_cast<double>(static_cast<long long>(sym) + table.min_value);
            out[static_cast<std::size_t>(c) * plane + i] = v;
        }
    }
    return out;
}

}  // namespace pcic
