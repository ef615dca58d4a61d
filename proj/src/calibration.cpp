#include "pcic/calibration.hpp"

#include <Eigen/LU>

#include <map>
#include <sstream>
#include <vector>

namespace pcic {

namespace {

std::map<std::string, std::vector<double>> parse_key_values(const std::string& text) {
    std::map<std::string, std::vector<double>> out;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        const std::string key = line.substr(0, colon);
        std::istringstream values(line.substr(colon + 1));
        std::vector<double> v;
        double x;
        while (values >> x) v.push_back(x);
        if (!v.empty()) out[key] = std::move(v);
    }
    return out;
}

const std::vector<double>& require_key(const std::map<std::string, std::vector<double>>& kv,
                                       const std::string& key, std::size_t count) {
    auto it = kv.find(key);
    if (it == kv.end()) throw MalformedCalibration("calibration key '" + key + "' missing");
    if (it->second.size() != count)
        throw MalformedCalibration("calibration key '" + key + "' has " +
                                   std::to_string(it->second.size()) + " values, expected " +
                                   std::to_string(count));
    return it->second;
}

Eigen::Matrix3d to_mat3(const std::vector<double>& v) {
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = v[static_cast<std::size_t>(i) * 3 + j];
    return m;
}

void check_rotation(const Eigen::Matrix3d& r, const std::string& name) {
    const Eigen::Matrix3d e = r.transpose() * r - Eigen::Matrix3d::Identity();
    if (e.cwiseAbs().maxCoeff() >= 1e-3)
        throw InvalidRotation(name + " is not orthonormal within 1e-3");
    if (std::abs(r.determinant() - 1.0) >= 1e-3)
        throw InvalidRotation(name + " determinant deviates from 1 beyond 1e-3");
}

}  // namespace

void CalibrationSet::validate() const {
    check_rotation(r_lidar_to_cam, "r_lidar_to_cam");
    check_rotation(r_rect, "r_rect");
    if (p_rect(2, 2) == 0.0) throw MalformedCalibration("p_rect[2][2] must be nonzero");
}

CalibrationSet parse_calibration(const std::string& velo_to_cam_text,
                                 const std::string& cam_to_cam_text, const std::string& camera) {
    const auto velo = parse_key_values(velo_to_cam_text);
    const auto cam = parse_key_values(cam_to_cam_text);

    CalibrationSet c;
    c.r_lidar_to_cam = to_mat3(require_key(velo, "R", 9));
    const auto& t = require_key(velo, "T", 3);
    c.t_lidar_to_cam = Eigen::Vector3d(t[0], t[1], t[2]);
    c.r_rect = to_mat3(require_key(cam, "R_rect_00", 9));
    const auto& p = require_key(cam, "P_rect_" + camera, 12);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) c.p_rect(i, j) = p[static_cast<std::size_t>(i) * 4 + j];

    c.validate();
    return c;
}

}  // namespace pcic
