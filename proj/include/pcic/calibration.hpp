#pragma once

#include <Eigen/Core>

#include <string>

#include "pcic/errors.hpp"

namespace pcic {

/// Rigid LiDAR-to-camera transform plus the rectification used to project
/// points into the (rectified) camera plane.
struct CalibrationSet {
    Eigen::Matrix3d r_lidar_to_cam = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t_lidar_to_cam = Eigen::Vector3d::Zero();
    Eigen::Matrix3d r_rect = Eigen::Matrix3d::Identity();
    Eigen::Matrix<double, 3, 4> p_rect = Eigen::Matrix<double, 3, 4>::Identity();

    /// Throws InvalidRotation / MalformedCalibration when the rotation
    /// invariants (orthonormality, det ~ 1 within 1e-3) or the projection
    /// matrix invariant (p[2][2] != 0) fail.
    void validate() const;
};

/// Parses the KITTI raw calibration pair (calib_velo_to_cam.txt keys R, T;
/// calib_cam_to_cam.txt keys R_rect_00 and P_rect_<camera>). Values are
/// whitespace-separated doubles after "key:". Throws MalformedCalibration on
/// missing keys or bad value counts.
CalibrationSet parse_calibration(const std::string& velo_to_cam_text,
                                 const std::string& cam_to_cam_text,
                                 const std::string& camera = "02");

}  // namespace pcic
