#include "pcic/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "pcic/errors.hpp"
#include "pcic/image_io.hpp"
#include "pcic/projection.hpp"

namespace pcic {

namespace fs = std::filesystem;

namespace {

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
Vec3 normalize(Vec3 v) {
    const double n = std::sqrt(dot(v, v));
    return {v.x / n, v.y / n, v.z / n};
}

struct Hit {
    double t = -1.0;
    Vec3 normal;
    Vec3 albedo;
};

struct Sphere {
    Vec3 center;
    double radius = 1.0;
    Vec3 albedo;
    Vec3 velocity;
};

struct Box {
    Vec3 lo, hi;  // axis-aligned, camera coords
    Vec3 albedo;
    Vec3 velocity;
};

// Camera coordinates: x right, y down, z forward. Ground at y = +1.5.
constexpr double kGroundY = 1.5;

struct Scene {
    std::vector<Sphere> spheres;
    std::vector<Box> boxes;
};

Scene make_scene(std::uint64_t seed) {
    Rng rng(seed);
    Scene scene;
    const int objects = 5 + static_cast<int>(rng.uniform_index(5));
    for (int i = 0; i < objects; ++i) {
        const Vec3 albedo{0.2 + 0.75 * rng.uniform(), 0.2 + 0.75 * rng.uniform(),
                          0.2 + 0.75 * rng.uniform()};
        const Vec3 vel{rng.uniform(-0.4, 0.4), 0.0, rng.uniform(-0.8, 0.3)};
        const double cx = rng.uniform(-9.0, 9.0);
        const double cz = rng.uniform(6.0, 34.0);
        if (rng.bernoulli(0.5)) {
            Sphere s;
            s.radius = rng.uniform(0.5, 1.6);
            s.center = {cx, kGroundY - s.radius, cz};
            s.albedo = albedo;
            s.velocity = vel;
            scene.spheres.push_back(s);
        } else {
            Box b;
            const double w = rng.uniform(0.8, 3.0), h = rng.uniform(1.0, 2.6),
                         d = rng.uniform(0.8, 3.0);
            b.lo = {cx - w / 2, kGroundY - h, cz - d / 2};
            b.hi = {cx + w / 2, kGroundY, cz + d / 2};
            b.albedo = albedo;
            b.velocity = vel;
            scene.boxes.push_back(b);
        }
    }
    return scene;
}

Scene advance(const Scene& scene, int frame) {
    Scene out = scene;
    const double t = static_cast<double>(frame);
    for (auto& s : out.spheres) s.center = s.center + s.velocity * t;
    for (auto& b : out.boxes) {
        b.lo = b.lo + b.velocity * t;
        b.hi = b.hi + b.velocity * t;
    }
    return out;
}

bool hit_sphere(const Sphere& s, Vec3 origin, Vec3 dir, Hit& hit) {
    const Vec3 oc = origin - s.center;
    const double b = dot(oc, dir);
    const double c = dot(oc, oc) - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0) return false;
    const double t = -b - std::sqrt(disc);
    if (t <= 1e-6 || (hit.t > 0 && t >= hit.t)) return false;
    hit.t = t;
    hit.normal = normalize(origin + dir * t - s.center);
    hit.albedo = s.albedo;
    return true;
}

bool hit_box(const Box& box, Vec3 origin, Vec3 dir, Hit& hit) {
    double tmin = -1e30, tmax = 1e30;
    int axis = 0;
    const double o[3] = {origin.x, origin.y, origin.z};
    const double d[3] = {dir.x, dir.y, dir.z};
    const double lo[3] = {box.lo.x, box.lo.y, box.lo.z};
    const double hi[3] = {box.hi.x, box.hi.y, box.hi.z};
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12) {
            if (o[a] < lo[a] || o[a] > hi[a]) return false;
            continue;
        }
        double t0 = (lo[a] - o[a]) / d[a];
        double t1 = (hi[a] - o[a]) / d[a];
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > tmin) {
            tmin = t0;
            axis = a;
        }
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return false;
    }
    if (tmin <= 1e-6 || (hit.t > 0 && tmin >= hit.t)) return false;
    hit.t = tmin;
    Vec3 n{0, 0, 0};
    const double sign = d[axis] > 0 ? -1.0 : 1.0;
    if (axis == 0) n.x = sign;
    if (axis == 1) n.y = sign;
    if (axis == 2) n.z = sign;
    hit.normal = n;
    hit.albedo = box.albedo;
    return true;
}

bool hit_ground(Vec3 origin, Vec3 dir, Hit& hit) {
    if (dir.y <= 1e-9) return false;
    const double t = (kGroundY - origin.y) / dir.y;
    if (t <= 1e-6 || (hit.t > 0 && t >= hit.t)) return false;
    const Vec3 p = origin + dir * t;
    // coarse checker keeps shared structure between image and depth
    const int cx = static_cast<int>(std::floor(p.x / 2.0));
    const int cz = static_cast<int>(std::floor(p.z / 2.0));
    const double shade = ((cx + cz) & 1) ? 0.85 : 1.0;
    hit.t = t;
    hit.normal = {0, -1, 0};
    hit.albedo = {0.38 * shade, 0.34 * shade, 0.30 * shade};
    return true;
}

Hit trace(const Scene& scene, Vec3 origin, Vec3 dir) {
    Hit hit;
    hit_ground(origin, dir, hit);
    for (const auto& s : scene.spheres) hit_sphere(s, origin, dir, hit);
    for (const auto& b : scene.boxes) hit_box(b, origin, dir, hit);
    return hit;
}

double hash_noise(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    Rng r(a * 0x100000001B3ull ^ b * 0x9E3779B97F4A7C15ull ^ c);
    return r.uniform() - 0.5;
}

const Vec3 kLight = normalize({0.35, -0.8, 0.45});

Tensor render_camera(const Scene& scene, const FixtureConfig& cfg, std::uint64_t noise_key) {
    const double cx = cfg.width / 2.0, cy = cfg.height / 2.0;
    Tensor img({3, cfg.height, cfg.width});
    for (int i = 0; i < cfg.height; ++i)
        for (int j = 0; j < cfg.width; ++j) {
            const Vec3 dir = normalize({(j - cx) / cfg.focal, (i - cy) / cfg.focal, 1.0});
            const Hit hit = trace(scene, {0, 0, 0}, dir);
            Vec3 color;
            if (hit.t > 0) {
                const double lambert = std::max(0.0, dot(hit.normal, kLight * -1.0));
                const double fade = 1.0 / (1.0 + 0.012 * hit.t);
                color = hit.albedo * ((0.45 + 0.55 * lambert) * fade);
            } else {
                const double horizon = std::clamp(1.0 - std::max(0.0, -dir.y) * 3.0, 0.0, 1.0);
                color = Vec3{0.55, 0.64, 0.80} * (1.0 - horizon) + Vec3{0.82, 0.86, 0.95} * horizon;
            }
            const double n = 0.03 * hash_noise(noise_key, static_cast<std::uint64_t>(i),
                                               static_cast<std::uint64_t>(j));
            img.at(0, i, j) = std::clamp(color.x + n, 0.0, 1.0);
            img.at(1, i, j) = std::clamp(color.y + n, 0.0, 1.0);
            img.at(2, i, j) = std::clamp(color.z + n, 0.0, 1.0);
        }
    return img;
}

// Velodyne frame: x forward, y left, z up.
const double kR[9] = {0, -1, 0, 0, 0, -1, 1, 0, 0};  // lidar -> cam
const Vec3 kT{-0.004, -0.076, -0.272};               // lidar origin in cam coords

LidarScan render_lidar(const Scene& scene, const FixtureConfig& cfg, std::uint64_t noise_key) {
    LidarScan scan;
    const double az_lo = -55.0 * M_PI / 180.0, az_hi = 55.0 * M_PI / 180.0;
    const double el_lo = -18.0 * M_PI / 180.0, el_hi = 6.0 * M_PI / 180.0;
    for (int b = 0; b < cfg.beams; ++b) {
        const double el = el_lo + (el_hi - el_lo) * b / (cfg.beams - 1);
        for (int a = 0; a < cfg.azimuth_steps; ++a) {
            const double az = az_lo + (az_hi - az_lo) * a / (cfg.azimuth_steps - 1);
            const Vec3 dir_l{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                             std::sin(el)};
            const Vec3 dir_c{kR[0] * dir_l.x + kR[1] * dir_l.y + kR[2] * dir_l.z,
                             kR[3] * dir_l.x + kR[4] * dir_l.y + kR[5] * dir_l.z,
                             kR[6] * dir_l.x + kR[7] * dir_l.y + kR[8] * dir_l.z};
            const Hit hit = trace(scene, kT, dir_c);
            if (hit.t <= 0 || hit.t > 80.0) continue;
            const double range =
                hit.t + 0.02 * hash_noise(noise_key, static_cast<std::uint64_t>(b),
                                          static_cast<std::uint64_t>(a));
            const Vec3 p_l = dir_l * range;
            const float refl = static_cast<float>(
                std::clamp(0.299 * hit.albedo.x + 0.587 * hit.albedo.y + 0.114 * hit.albedo.z,
                           0.0, 1.0));
            scan.points.push_back({static_cast<float>(p_l.x), static_cast<float>(p_l.y),
                                   static_cast<float>(p_l.z), refl});
        }
    }
    return scan;
}

void write_calib(const fs::path& scene_dir, const FixtureConfig& cfg) {
    {
        std::ofstream out(scene_dir / "calib_velo_to_cam.txt");
        out << "calib_time: synthetic\nR:";
        for (double v : kR) out << " " << v;
        out << "\nT: " << kT.x << " " << kT.y << " " << kT.z << "\n";
    }
    {
        std::ofstream out(scene_dir / "calib_cam_to_cam.txt");
        out << "calib_time: synthetic\n";
        out << "R_rect_00: 1 0 0 0 1 0 0 0 1\n";
        const double cx = cfg.width / 2.0, cy = cfg.height / 2.0;
        out << "P_rect_02: " << cfg.focal << " 0 " << cx << " 0 0 " << cfg.focal << " " << cy
            << " 0 0 0 1 0\n";
    }
}

}  // namespace

void generate_fixture(const fs::path& root, const FixtureConfig& cfg) {
    if (cfg.scenes <= 0 || cfg.frames_per_scene <= 0 || cfg.beams < 2 || cfg.azimuth_steps < 2)
        throw ConfigError("fixture: invalid configuration");
    fs::create_directories(root);
    for (int s = 0; s < cfg.scenes; ++s) {
        char scene_name[32];
        std::snprintf(scene_name, sizeof(scene_name), "scene_%03d", s);
        const fs::path scene_dir = root / scene_name;
        fs::create_directories(scene_dir / "image_02" / "data");
        fs::create_directories(scene_dir / "velodyne_points" / "data");
        write_calib(scene_dir, cfg);
        const Scene base = make_scene(cfg.seed * 1000003ull + static_cast<std::uint64_t>(s));
        for (int f = 0; f < cfg.frames_per_scene; ++f) {
            const Scene scene = advance(base, f);
            char frame_name[32];
            std::snprintf(frame_name, sizeof(frame_name), "%010d", f);
            const std::uint64_t key =
                cfg.seed ^ (static_cast<std::uint64_t>(s) << 32) ^ static_cast<std::uint64_t>(f);
            write_png_rgb(scene_dir / "image_02" / "data" / (std::string(frame_name) + ".png"),
                          render_camera(scene, cfg, key));
            const LidarScan scan = render_lidar(scene, cfg, key + 1);
            const auto bytes = serialize_scan(scan);
            std::ofstream out(
                scene_dir / "velodyne_points" / "data" / (std::string(frame_name) + ".bin"),
                std::ios::binary);
            out.write(reinterpret_cast<const char*>(bytes.data()),
                      static_cast<std::streamsize>(bytes.size()));
            if (!out) throw IoError("fixture: failed writing scan");
        }
    }
}

}  // namespace pcic
