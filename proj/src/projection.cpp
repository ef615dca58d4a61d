#include "pcic/projection.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <tuple>

#include "pcic/errors.hpp"

namespace pcic {

static_assert(sizeof(float) == 4, "float32 layout assumed");

LidarScan load_lidar_scan(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() % 16 != 0)
        throw MalformedScan("scan blob length " + std::to_string(bytes.size()) +
                            " is not a multiple of 16");
    LidarScan scan;
    scan.points.resize(bytes.size() / 16);
    if (!bytes.empty()) std::memcpy(scan.points.data(), bytes.data(), bytes.size());
    for (const auto& p : scan.points)
        for (float v : p)
            if (!std::isfinite(v)) throw MalformedScan("scan contains non-finite coordinates");
    return scan;
}

LidarScan load_lidar_scan_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open scan '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return load_lidar_scan(bytes);
}

std::vector<std::uint8_t> serialize_scan(const LidarScan& scan) {
    std::vector<std::uint8_t> bytes(scan.points.size() * 16);
    if (!bytes.empty()) std::memcpy(bytes.data(), scan.points.data(), bytes.size());
    return bytes;
}

Eigen::Matrix4d assemble_lidar_to_camera(const CalibrationSet& calib) {
    Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
    t.topLeftCorner<3, 3>() = calib.r_lidar_to_cam;
    t.topRightCorner<3, 1>() = calib.t_lidar_to_cam;
    return t;
}

SparseDepthMap project_scan(const LidarScan& scan, const CalibrationSet& calib,
                            const ProjectionConfig& cfg) {
    if (cfg.width <= 0 || cfg.height <= 0)
        throw ShapeError("project_scan: raster dimensions must be positive");
    SparseDepthMap map;
    map.h = cfg.height;
    map.w = cfg.width;
    map.depth.assign(static_cast<std::size_t>(map.h) * map.w, 0.0);
    map.occupancy.assign(static_cast<std::size_t>(map.h) * map.w, 0);

    Eigen::Matrix4d rect4 = Eigen::Matrix4d::Identity();
    rect4.topLeftCorner<3, 3>() = calib.r_rect;
    const Eigen::Matrix<double, 3, 4> m = calib.p_rect * rect4 * assemble_lidar_to_camera(calib);

    for (const auto& p : scan.points) {
        const Eigen::Vector4d x(p[0], p[1], p[2], 1.0);
        const Eigen::Vector3d hom = m * x;
        const double depth = hom[2];
        if (depth <= 0.0) continue;
        const long u = std::lround(hom[0] / depth);
        const long v = std::lround(hom[1] / depth);
        if (u < 0 || u >= map.w || v < 0 || v >= map.h) continue;
        const std::size_t idx = static_cast<std::size_t>(v) * map.w + u;
        if (!map.occupancy[idx] || depth < map.depth[idx]) {
            map.depth[idx] = depth;
            map.occupancy[idx] = 1;
        }
    }
    return map;
}

EqualizedDepthMap normalize_equalize(const SparseDepthMap& map, const ProjectionConfig& cfg) {
    if (cfg.s <= 0.0) throw ConfigError("normalize_equalize: scaling factor must be > 0");
    EqualizedDepthMap out;
    out.h = map.h;
    out.w = map.w;
    const std::size_t n = static_cast<std::size_t>(map.h) * map.w;
    out.values.assign(n, 0);
    out.occupancy = map.occupancy;

    double min_depth = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (!map.occupancy[i]) continue;
        if (!any || map.depth[i] < min_depth) min_depth = map.depth[i];
        any = true;
    }
    if (!any) return out;  // all empty

    constexpr int kBins = 255;  // bin indices 0..254
    std::vector<int> bin(n, -1);
    std::vector<long long> hist(kBins, 0);
    long long total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!map.occupancy[i]) continue;
        long long b = std::llround((map.depth[i] - min_depth) * cfg.s);
        b = std::clamp(b, 0LL, static_cast<long long>(kBins - 1));
        bin[i] = static_cast<int>(b);
        ++hist[static_cast<std::size_t>(b)];
        ++total;
    }
    // Cumulative-histogram mapping of bins to levels 1..255 (monotone).
    std::vector<std::uint8_t> level(kBins, 0);
    long long cum = 0;
    for (int b = 0; b < kBins; ++b) {
        cum += hist[static_cast<std::size_t>(b)];
        level[static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(
            1 + std::llround(254.0 * static_cast<double>(cum) / static_cast<double>(total)));
    }
    for (std::size_t i = 0; i < n; ++i)
        if (bin[i] >= 0) out.values[i] = level[static_cast<std::size_t>(bin[i])];
    return out;
}

LidarScan degrade_scan(const LidarScan& scan, double voxel) {
    if (voxel <= 0.0) throw ConfigError("degrade_scan: voxel edge must be > 0");
    LidarScan out;
    std::map<std::tuple<long long, long long, long long>, std::size_t> voxel_index;
    std::vector<int> counts;
    for (const auto& p : scan.points) {
        const long long ix = static_cast<long long>(std::floor(p[0] / voxel));
        const long long iy = static_cast<long long>(std::floor(p[1] / voxel));
        const long long iz = static_cast<long long>(std::floor(p[2] / voxel));
        auto [it, inserted] = voxel_index.try_emplace({ix, iy, iz}, out.points.size());
        if (inserted) {
            out.points.push_back({static_cast<float>((ix + 0.5) * voxel),
                                  static_cast<float>((iy + 0.5) * voxel),
                                  static_cast<float>((iz + 0.5) * voxel), p[3]});
            counts.push_back(1);
        } else {
            auto& q = out.points[it->second];
            const int c = counts[it->second]++;
            q[3] = static_cast<float>((static_cast<double>(q[3]) * c + p[3]) / (c + 1));
        }
    }
    return out;
}

EqualizedDepthMap crop_depth(const EqualizedDepthMap& map, int x, int y, int w, int h) {
    if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > map.w || y + h > map.h)
        throw RoiOutOfBounds("depth crop outside raster");
    EqualizedDepthMap out;
    out.h = h;
    out.w = w;
    out.values.resize(static_cast<std::size_t>(w) * h);
    out.occupancy.resize(static_cast<std::size_t>(w) * h);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const std::size_t src = static_cast<std::size_t>(y + i) * map.w + (x + j);
            const std::size_t dst = static_cast<std::size_t>(i) * w + j;
            out.values[dst] = map.values[src];
            out.occupancy[dst] = map.occupancy[src];
        }
    return out;
}

SparseDepthMap crop_sparse(const SparseDepthMap& map, int x, int y, int w, int h) {
    if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > map.w || y + h > map.h)
        throw RoiOutOfBounds("sparse depth crop outside raster");
    SparseDepthMap out;
    out.h = h;
    out.w = w;
    out.depth.resize(static_cast<std::size_t>(w) * h);
    out.occupancy.resize(static_cast<std::size_t>(w) * h);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const std::size_t src = static_cast<std::size_t>(y + i) * map.w + (x + j);
            const std::size_t dst = static_cast<std::size_t>(i) * w + j;
            out.depth[dst] = map.depth[src];
            out.occupancy[dst] = map.occupancy[src];
        }
    return out;
}

Tensor depth_to_tensor(const EqualizedDepthMap& map) {
    Tensor t({1, map.h, map.w});
    for (std::size_t i = 0; i < map.values.size(); ++i) t[i] = map.values[i] / 255.0;
    return t;
}

void write_pgm(const std::filesystem::path& path, const EqualizedDepthMap& map) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create PGM '" + path.string() + "'");
    out << "P5\n" << map.w << " " << map.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(map.values.data()),
              static_cast<std::streamsize>(map.values.size()));
    if (!out) throw IoError("failed writing PGM '" + path.string() + "'");
}

EqualizedDepthMap read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open PGM '" + path.string() + "'");
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255)
        throw IoError("unsupported PGM header in '" + path.string() + "'");
    in.get();  // single whitespace after maxval
    EqualizedDepthMap map;
    map.h = h;
    map.w = w;
    map.values.resize(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(map.values.data()),
            static_cast<std::streamsize>(map.values.size()));
    if (!in) throw IoError("truncated PGM '" + path.string() + "'");
    map.occupancy.resize(map.values.size());
    for (std::size_t i = 0; i < map.values.size(); ++i) map.occupancy[i] = map.values[i] != 0;
    return map;
}

}  // namespace pcic
