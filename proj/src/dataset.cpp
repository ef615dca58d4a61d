#include "pcic/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>

#include "pcic/errors.hpp"
#include "pcic/image_io.hpp"

namespace pcic {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

std::map<std::string, DatasetManifest> build_manifest(
    const fs::path& root, const std::map<std::string, std::string>& scene_to_split, Rect roi,
    const std::string& camera) {
    if (!fs::is_directory(root)) throw IoError("dataset root '" + root.string() + "' not found");

    std::vector<std::string> scenes;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) scenes.push_back(entry.path().filename().string());
    std::sort(scenes.begin(), scenes.end());

    std::map<std::string, DatasetManifest> manifests;
    for (const auto& scene : scenes) {
        auto split_it = scene_to_split.find(scene);
        if (split_it == scene_to_split.end()) continue;
        const std::string& split = split_it->second;

        const fs::path scene_dir = root / scene;
        const fs::path image_dir = scene_dir / ("image_" + camera) / "data";
        const fs::path scan_dir = scene_dir / "velodyne_points" / "data";
        const fs::path calib_velo = scene_dir / "calib_velo_to_cam.txt";
        const fs::path calib_cam = scene_dir / "calib_cam_to_cam.txt";
        if (!fs::exists(calib_velo))
            throw IncompleteFrame("scene " + scene + " missing " + calib_velo.string());
        if (!fs::exists(calib_cam))
            throw IncompleteFrame("scene " + scene + " missing " + calib_cam.string());
        if (!fs::is_directory(image_dir))
            throw IncompleteFrame("scene " + scene + " missing " + image_dir.string());

        std::vector<std::string> frames;
        for (const auto& entry : fs::directory_iterator(image_dir))
            if (entry.path().extension() == ".png") frames.push_back(entry.path().stem().string());
        std::sort(frames.begin(), frames.end());

        DatasetManifest& m = manifests[split];
        m.split = split;
        m.camera = camera;
        m.roi = roi;
        for (const auto& frame : frames) {
            FrameRecord rec;
            rec.scene_id = scene;
            rec.frame_id = frame;
            rec.image_path = (image_dir / (frame + ".png")).string();
            rec.scan_path = (scan_dir / (frame + ".bin")).string();
            rec.calib_velo_path = calib_velo.string();
            rec.calib_cam_path = calib_cam.string();
            if (!fs::exists(rec.scan_path))
                throw IncompleteFrame("frame " + scene + "/" + frame + " missing " +
                                      rec.scan_path);
            m.records.push_back(std::move(rec));
        }
    }
    return manifests;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
    json j;
    j["split"] = manifest.split;
    j["camera"] = manifest.camera;
    j["roi"] = {{"x", manifest.roi.x}, {"y", manifest.roi.y}, {"w", manifest.roi.w},
                {"h", manifest.roi.h}};
    j["records"] = json::array();
    for (const auto& r : manifest.records)
        j["records"].push_back({{"scene_id", r.scene_id},
                                {"frame_id", r.frame_id},
                                {"image", r.image_path},
                                {"scan", r.scan_path},
                                {"calib_velo", r.calib_velo_path},
                                {"calib_cam", r.calib_cam_path}});
    std::ofstream out(path);
    if (!out) throw IoError("cannot create manifest '" + path.string() + "'");
    out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const fs::path& path) {
    json j = json::parse(read_text(path));
    DatasetManifest m;
    m.split = j.at("split").get<std::string>();
    m.camera = j.value("camera", "02");
    m.roi = {j.at("roi").at("x").get<int>(), j.at("roi").at("y").get<int>(),
             j.at("roi").at("w").get<int>(), j.at("roi").at("h").get<int>()};
    for (const auto& r : j.at("records")) {
        FrameRecord rec;
        rec.scene_id = r.at("scene_id").get<std::string>();
        rec.frame_id = r.at("frame_id").get<std::string>();
        rec.image_path = r.at("image").get<std::string>();
        rec.scan_path = r.at("scan").get<std::string>();
        rec.calib_velo_path = r.at("calib_velo").get<std::string>();
        rec.calib_cam_path = r.at("calib_cam").get<std::string>();
        m.records.push_back(std::move(rec));
    }
    return m;
}

ScenePair load_scene_pair(const FrameRecord& record, const std::string& camera) {
    ScenePair pair;
    pair.scene_id = record.scene_id;
    pair.frame_id = record.frame_id;
    pair.image = read_png_rgb(record.image_path);
    pair.scan = load_lidar_scan_file(record.scan_path);
    pair.calib =
        parse_calibration(read_text(record.calib_velo_path), read_text(record.calib_cam_path),
                          camera);
    pair.roi = Rect{0, 0, pair.image.dim(2), pair.image.dim(1)};
    return pair;
}

ScenePair crop_roi(const ScenePair& pair, Rect roi) {
    const int h = pair.image.dim(1), w = pair.image.dim(2);
    if (roi.x < 0 || roi.y < 0 || roi.w <= 0 || roi.h <= 0 || roi.x + roi.w > w ||
        roi.y + roi.h > h)
        throw RoiOutOfBounds("roi " + std::to_string(roi.w) + "x" + std::to_string(roi.h) + "+" +
                             std::to_string(roi.x) + "+" + std::to_string(roi.y) +
                             " exceeds image " + std::to_string(w) + "x" + std::to_string(h));
    ScenePair out = pair;
    out.roi = roi;
    Tensor cropped({3, roi.h, roi.w});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < roi.h; ++i)
            for (int j = 0; j < roi.w; ++j)
                cropped.at(c, i, j) = pair.image.at(c, roi.y + i, roi.x + j);
    out.image = cropped;
    return out;
}

}  // namespace pcic
