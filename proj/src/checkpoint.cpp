#include "pcic/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "pcic/errors.hpp"

namespace pcic {

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
    const std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                               static_cast<std::uint8_t>(v >> 16),
                               static_cast<std::uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create checkpoint '" + path.string() + "'");
    out.write("PCKP", 4);
    out.put(1);
    const std::string meta = data.meta.dump();
    put_u32(out, static_cast<std::uint32_t>(meta.size()));
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put_u32(out, static_cast<std::uint32_t>(data.arrays.size()));
    for (const auto& [name, tensor] : data.arrays) {
        const auto name_len = static_cast<std::uint16_t>(name.size());
        out.put(static_cast<char>(name_len & 0xFF));
        out.put(static_cast<char>(name_len >> 8));
        out.write(name.data(), name_len);
        out.put(static_cast<char>(tensor.ndim()));
        for (int d = 0; d < tensor.ndim(); ++d) put_u32(out, static_cast<std::uint32_t>(tensor.dim(d)));
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "PCKP", 4) != 0)
        throw IoError("'" + path.string() + "' is not a checkpoint");
    if (in.get() != 1) throw IoError("unsupported checkpoint version");
    CheckpointData data;
    const std::uint32_t meta_len = get_u32(in);
    std::string meta(meta_len, '\0');
    in.read(meta.data(), meta_len);
    data.meta = nlohmann::json::parse(meta);
    const std::uint32_t count = get_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        const int lo = in.get(), hi = in.get();
        const int name_len = lo | (hi << 8);
        std::string name(static_cast<std::size_t>(name_len), '\0');
        in.read(name.data(), name_len);
        const int ndim = in.get();
        std::vector<int> shape(static_cast<std::size_t>(ndim));
        for (int d = 0; d < ndim; ++d) shape[static_cast<std::size_t>(d)] = static_cast<int>(get_u32(in));
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!in) throw IoError("truncated checkpoint '" + path.string() + "'");
        data.arrays.emplace(std::move(name), std::move(t));
    }
    return data;
}

}  // namespace pcic
