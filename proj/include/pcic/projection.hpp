#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "pcic/calibration.hpp"
#include "pcic/tensor.hpp"

namespace pcic {

/// Raw LiDAR scan: N points of (x, y, z, reflectance), float32 storage as in
/// the on-disk format.
struct LidarScan {
    std::vector<std::array<float, 4>> points;
    std::size_t size() const { return points.size(); }
};

/// Loads a packed little-endian float32 x4 blob. Throws MalformedScan when
/// the length is not a multiple of 16.
LidarScan load_lidar_scan(const std::vector<std::uint8_t>& bytes);
LidarScan load_lidar_scan_file(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_scan(const LidarScan& scan);

struct ProjectionConfig {
    double s = 3.0;  // depth bins per meter
    int width = 0;
    int height = 0;
};

/// Projected scan before equalization: depth in meters where occupied,
/// 0 elsewhere.
struct SparseDepthMap {
    int h = 0, w = 0;
    std::vector<double> depth;
    std::vector<std::uint8_t> occupancy;

    double depth_at(int i, int j) const { return depth[static_cast<std::size_t>(i) * w + j]; }
    bool occupied(int i, int j) const { return occupancy[static_cast<std::size_t>(i) * w + j] != 0; }
};

/// Equalized map: level 0 marks empty pixels, occupied pixels hold a level
/// in [1,255].
struct EqualizedDepthMap {
    int h = 0, w = 0;
    std::vector<std::uint8_t> values;
    std::vector<std::uint8_t> occupancy;

    std::uint8_t at(int i, int j) const { return values[static_cast<std::size_t>(i) * w + j]; }
};

/// Homogeneous LiDAR-to-camera transform: top-left R, top-right t,
/// bottom row (0,0,0,1).
Eigen::Matrix4d assemble_lidar_to_camera(const CalibrationSet& calib);

/// Projects each point through P_rect * R_rect * T; pixel indices round half
/// away from zero; points behind the camera or outside the raster are
/// dropped; collisions keep the nearest depth. Stored depth is the
/// rectified-camera forward coordinate (the homogeneous divisor).
SparseDepthMap project_scan(const LidarScan& scan, const CalibrationSet& calib,
                            const ProjectionConfig& cfg);

/// Per-image min subtraction, scaling by cfg.s, rounding to bins clamped to
/// [0,254], then cumulative-histogram equalization of occupied pixels to
/// levels [1,255]. Empty pixels stay 0.
EqualizedDepthMap normalize_equalize(const SparseDepthMap& map, const ProjectionConfig& cfg);

/// Voxel-quantization degradation proxy: coordinates snap to voxel centers;
/// points sharing a voxel merge (reflectance averaged, first-seen order).
LidarScan degrade_scan(const LidarScan& scan, double voxel);

EqualizedDepthMap crop_depth(const EqualizedDepthMap& map, int x, int y, int w, int h);
SparseDepthMap crop_sparse(const SparseDepthMap& map, int x, int y, int w, int h);

/// {1,H,W} tensor with levels scaled by 1/255 into [0,1].
Tensor depth_to_tensor(const EqualizedDepthMap& map);

// Stored form consumed by training: binary 8-bit single-channel PGM (P5).
void write_pgm(const std::filesystem::path& path, const EqualizedDepthMap& map);
EqualizedDepthMap read_pgm(const std::filesystem::path& path);

}  // namespace pcic
