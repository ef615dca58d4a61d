#pragma once

#include <filesystem>

#include "pcic/rng.hpp"

namespace pcic {

/// Procedural stand-in for a driving dataset: per scene, a ground plane and
/// a handful of moving boxes/spheres are raycast twice — once through the
/// pinhole camera for the color frame, once along a spinning-beam pattern
/// for the scan — so image structure and point cloud geometry agree by
/// construction. Output follows the raw-capture directory layout the
/// manifest builder expects.
struct FixtureConfig {
    int scenes = 4;
    int frames_per_scene = 4;
    int width = 384;
    int height = 320;
    int beams = 32;
    int azimuth_steps = 320;
    double focal = 280.0;
    std::uint64_t seed = 7;
};

void generate_fixture(const std::filesystem::path& root, const FixtureConfig& cfg);

}  // namespace pcic
