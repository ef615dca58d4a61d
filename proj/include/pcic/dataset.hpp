#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pcic/calibration.hpp"
#include "pcic/projection.hpp"
#include "pcic/tensor.hpp"

namespace pcic {

struct Rect {
    int x = 0, y = 0, w = 0, h = 0;
    bool operator==(const Rect&) const = default;
};

struct FrameRecord {
    std::string scene_id;
    std::string frame_id;
    std::string image_path;
    std::string scan_path;
    std::string calib_velo_path;
    std::string calib_cam_path;
};

/// Ordered, split-assigned list of frames. Records are sorted
/// lexicographically by (scene_id, frame_id) so repeated builds over the
/// same tree are element-wise identical.
struct DatasetManifest {
    std::string split;
    std::string camera = "02";
    Rect roi;
    std::vector<FrameRecord> records;
};

/// One aligned frame: color image in [0,1], scan, calibration.
struct ScenePair {
    Tensor image;  // {3,H,W}
    LidarScan scan;
    CalibrationSet calib;
    std::string scene_id;
    std::string frame_id;
    Rect roi;  // crop applied to the image; depth maps are cropped identically
};

/// Scans a KITTI-raw style tree: <root>/<scene>/image_<camera>/data/*.png,
/// <root>/<scene>/velodyne_points/data/*.bin plus per-scene
/// calib_velo_to_cam.txt / calib_cam_to_cam.txt. Scenes absent from
/// `scene_to_split` are skipped. Splits are disjoint by scene by
/// construction. Throws IncompleteFrame naming the missing file when a
/// frame lacks a modality.
std::map<std::string, DatasetManifest> build_manifest(
    const std::filesystem::path& root, const std::map<std::string, std::string>& scene_to_split,
    Rect roi, const std::string& camera = "02");

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

ScenePair load_scene_pair(const FrameRecord& record, const std::string& camera = "02");

/// Crops the image to `roi` and records the rectangle on the pair. Throws
/// RoiOutOfBounds when the rectangle leaves the frame.
ScenePair crop_roi(const ScenePair& pair, Rect roi);

}  // namespace pcic
