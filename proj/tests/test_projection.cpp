#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcic/projection.hpp"
#include "pcic/rng.hpp"

using namespace pcic;

namespace {

// --- per-point scalar projection oracle (no Eigen, plain loops) ----------

struct OracleResult {
    bool kept = false;
    long u = 0, v = 0;
    double depth = 0.0;
};

OracleResult oracle_project_point(const float pt[4], const CalibrationSet& c, int w, int h) {
    // LiDAR -> camera
    double cam[3];
    for (int i = 0; i < 3; ++i) {
        cam[i] = c.t_lidar_to_cam(i);
        for (int j = 0; j < 3; ++j) cam[i] += c.r_lidar_to_cam(i, j) * pt[j];
    }
    // rectify
    double rect[3];
    for (int i = 0; i < 3; ++i) {
        rect[i] = 0.0;
        for (int j = 0; j < 3; ++j) rect[i] += c.r_rect(i, j) * cam[j];
    }
    // project
    double hom[3];
    for (int i = 0; i < 3; ++i) {
        hom[i] = c.p_rect(i, 3);
        for (int j = 0; j < 3; ++j) hom[i] += c.p_rect(i, j) * rect[j];
    }
    OracleResult r;
    if (hom[2] <= 0.0) return r;
    r.u = std::lround(hom[0] / hom[2]);
    r.v = std::lround(hom[1] / hom[2]);
    r.depth = hom[2];
    r.kept = r.u >= 0 && r.u < w && r.v >= 0 && r.v < h;
    return r;
}

SparseDepthMap oracle_project(const LidarScan& scan, const CalibrationSet& c,
                              const ProjectionConfig& cfg) {
    SparseDepthMap map;
    map.h = cfg.height;
    map.w = cfg.width;
    map.depth.assign(static_cast<std::size_t>(map.h) * map.w, 0.0);
    map.occupancy.assign(map.depth.size(), 0);
    for (const auto& p : scan.points) {
        auto r = oracle_project_point(p.data(), c, cfg.width, cfg.height);
        if (!r.kept) continue;
        std::size_t idx = static_cast<std::size_t>(r.v) * map.w + r.u;
        if (!map.occupancy[idx] || r.depth < map.depth[idx]) {
            map.depth[idx] = r.depth;
            map.occupancy[idx] = 1;
        }
    }
    return map;
}

CalibrationSet pinhole_calib(double f, double cx, double cy) {
    CalibrationSet c;
    c.p_rect.setZero();
    c.p_rect(0, 0) = f;
    c.p_rect(0, 2) = cx;
    c.p_rect(1, 1) = f;
    c.p_rect(1, 2) = cy;
    c.p_rect(2, 2) = 1.0;
    return c;
}

CalibrationSet random_calib(Rng& rng) {
    CalibrationSet c = pinhole_calib(60.0 + rng.uniform() * 40.0, 30.0 + rng.uniform() * 4.0,
                                     22.0 + rng.uniform() * 4.0);
    Eigen::Matrix3d m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = rng.normal();
    Eigen::HouseholderQR<Eigen::Matrix3d> qr(m);
    Eigen::Matrix3d q = qr.householderQ();
    if (q.determinant() < 0) q.col(0) *= -1.0;
    c.r_lidar_to_cam = q;
    c.t_lidar_to_cam = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()) * 0.3;
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    axis.normalize();
    c.r_rect = Eigen::AngleAxisd(0.02 * rng.normal(), axis).toRotationMatrix();
    return c;
}

LidarScan random_scan(Rng& rng, std::size_t n) {
    LidarScan scan;
    scan.points.resize(n);
    for (auto& p : scan.points) {
        p[0] = static_cast<float>(rng.normal() * 10.0);
        p[1] = static_cast<float>(rng.normal() * 10.0);
        p[2] = static_cast<float>(rng.normal() * 10.0);
        p[3] = static_cast<float>(rng.uniform());
    }
    return scan;
}

// Rank-based equalization oracle: pixels sorted by bin; each bin group maps
// to 1 + round(254 * max_rank / total).
std::vector<std::uint8_t> oracle_equalize(const SparseDepthMap& map, double s) {
    std::vector<std::size_t> occ;
    for (std::size_t i = 0; i < map.depth.size(); ++i)
        if (map.occupancy[i]) occ.push_back(i);
    std::vector<std::uint8_t> out(map.depth.size(), 0);
    if (occ.empty()) return out;
    double dmin = map.depth[occ[0]];
    for (auto i : occ) dmin = std::min(dmin, map.depth[i]);
    std::vector<long long> bins(map.depth.size(), -1);
    for (auto i : occ)
        bins[i] = std::clamp(std::llround((map.depth[i] - dmin) * s), 0LL, 254LL);
    std::vector<std::size_t> order = occ;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return bins[a] < bins[b]; });
    const double total = static_cast<double>(occ.size());
    std::size_t pos = 0;
    while (pos < order.size()) {
        std::size_t end = pos;
        while (end < order.size() && bins[order[end]] == bins[order[pos]]) ++end;
        const auto level =
            static_cast<std::uint8_t>(1 + std::llround(254.0 * static_cast<double>(end) / total));
        for (std::size_t k = pos; k < end; ++k) out[order[k]] = level;
        pos = end;
    }
    return out;
}

}  // namespace

TEST_CASE("assemble_lidar_to_camera") {
    CalibrationSet c;
    CHECK(assemble_lidar_to_camera(c) == Eigen::Matrix4d::Identity());

    c.t_lidar_to_cam = Eigen::Vector3d(1, 2, 3);
    Eigen::Matrix4d t = assemble_lidar_to_camera(c);
    CHECK(t.col(3) == Eigen::Vector4d(1, 2, 3, 1));

    Rng rng(3);
    CalibrationSet rc = random_calib(rng);
    Eigen::Matrix4d m = assemble_lidar_to_camera(rc);
    for (int k = 0; k < 10; ++k) {
        Eigen::Vector3d p(rng.normal(), rng.normal(), rng.normal());
        Eigen::Vector4d hp(p[0], p[1], p[2], 1.0);
        Eigen::Vector3d expect = rc.r_lidar_to_cam * p + rc.t_lidar_to_cam;
        Eigen::Vector4d got = m * hp;
        CHECK((got.head<3>() - expect).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(got[3] == 1.0);
    }
}

TEST_CASE("project_scan basics") {
    CalibrationSet c = pinhole_calib(100.0, 32.0, 24.0);
    ProjectionConfig cfg{3.0, 64, 48};

    LidarScan scan;
    scan.points.push_back({0.f, 0.f, 5.f, 0.5f});
    SparseDepthMap map = project_scan(scan, c, cfg);
    CHECK(map.occupied(24, 32));
    CHECK(map.depth_at(24, 32) == doctest::Approx(5.0));
    int count = std::accumulate(map.occupancy.begin(), map.occupancy.end(), 0);
    CHECK(count == 1);

    SUBCASE("behind-camera point is culled") {
        scan.points[0] = {0.f, 0.f, -1.f, 0.5f};
        map = project_scan(scan, c, cfg);
        CHECK(std::accumulate(map.occupancy.begin(), map.occupancy.end(), 0) == 0);
    }
    SUBCASE("nearest point wins the pixel") {
        scan.points.push_back({0.f, 0.f, 3.f, 0.5f});
        map = project_scan(scan, c, cfg);
        CHECK(map.depth_at(24, 32) == doctest::Approx(3.0));
    }
    SUBCASE("empty scan yields empty map") {
        map = project_scan(LidarScan{}, c, cfg);
        CHECK(std::accumulate(map.occupancy.begin(), map.occupancy.end(), 0) == 0);
    }
}

TEST_CASE("project_scan matches scalar oracle on random scans") {
    Rng rng(101);
    ProjectionConfig cfg{3.0, 64, 48};
    for (int trial = 0; trial < 20; ++trial) {
        CalibrationSet c = random_calib(rng);
        LidarScan scan = random_scan(rng, 1000);
        SparseDepthMap got = project_scan(scan, c, cfg);
        SparseDepthMap want = oracle_project(scan, c, cfg);
        REQUIRE(got.occupancy == want.occupancy);  // bit-exact pixel indices
        for (std::size_t i = 0; i < got.depth.size(); ++i)
            CHECK(std::abs(got.depth[i] - want.depth[i]) <= 1e-6);
    }
}

TEST_CASE("normalize_equalize single-bin and empty edge cases") {
    ProjectionConfig cfg{3.0, 8, 4};
    SparseDepthMap map;
    map.h = 4;
    map.w = 8;
    map.depth.assign(32, 0.0);
    map.occupancy.assign(32, 0);

    SUBCASE("empty map stays all zero") {
        EqualizedDepthMap eq = normalize_equalize(map, cfg);
        CHECK(std::all_of(eq.values.begin(), eq.values.end(), [](auto v) { return v == 0; }));
    }
    SUBCASE("equal depths map to 255") {
        for (std::size_t i : {1ull, 9ull, 17ull, 31ull}) {
            map.depth[i] = 7.25;
            map.occupancy[i] = 1;
        }
        EqualizedDepthMap eq = normalize_equalize(map, cfg);
        for (std::size_t i = 0; i < 32; ++i)
            CHECK(eq.values[i] == (map.occupancy[i] ? 255 : 0));
    }
}

TEST_CASE("normalize_equalize properties and rank oracle") {
    Rng rng(55);
    SparseDepthMap map;
    map.h = 100;
    map.w = 100;
    map.depth.assign(10000, 0.0);
    map.occupancy.assign(10000, 1);
    for (auto& d : map.depth) d = 5.0 + rng.uniform() * 80.0;
    ProjectionConfig cfg{3.0, 100, 100};
    EqualizedDepthMap eq = normalize_equalize(map, cfg);

    // occupancy preserved
    CHECK(eq.occupancy == map.occupancy);
    for (std::size_t i = 0; i < eq.values.size(); ++i) {
        CHECK(eq.values[i] >= 1);
    }

    // monotone in depth
    std::vector<std::size_t> idx(10000);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return map.depth[a] < map.depth[b]; });
    for (std::size_t k = 1; k < idx.size(); ++k)
        CHECK(eq.values[idx[k - 1]] <= eq.values[idx[k]]);

    // near-uniform level occupancy: max per-level deviation below 5% of total
    std::vector<int> counts(256, 0);
    for (auto v : eq.values) ++counts[v];
    const double expected = 10000.0 / 255.0;
    for (int level = 1; level <= 255; ++level)
        CHECK(std::abs(counts[level] - expected) < 0.05 * 10000.0);

    // exact agreement with the independent sort-and-rank oracle
    std::vector<std::uint8_t> want = oracle_equalize(map, cfg.s);
    CHECK(eq.values == want);
}

TEST_CASE("degrade_scan") {
    SUBCASE("sub-resolution voxel keeps integer-coordinate points") {
        LidarScan scan;
        scan.points = {{1.f, 2.f, 3.f, 0.5f}, {-4.f, 0.f, 7.f, 0.25f}};
        LidarScan out = degrade_scan(scan, 1e-6);
        REQUIRE(out.size() == 2);
        for (std::size_t i = 0; i < 2; ++i)
            for (int k = 0; k < 3; ++k)
                CHECK(std::abs(out.points[i][k] - scan.points[i][k]) <= 1e-6);
    }
    SUBCASE("nearby points merge with averaged reflectance") {
        LidarScan scan;
        scan.points = {{0.30f, 0.30f, 0.30f, 0.2f}, {0.31f, 0.30f, 0.30f, 0.6f}};
        LidarScan out = degrade_scan(scan, 1.0);
        REQUIRE(out.size() == 1);
        CHECK(out.points[0][0] == doctest::Approx(0.5));
        CHECK(out.points[0][3] == doctest::Approx(0.4));
    }
    SUBCASE("voxel 0.2 snaps to odd multiples of 0.1") {
        Rng rng(9);
        LidarScan scan = random_scan(rng, 200);
        LidarScan out = degrade_scan(scan, 0.2);
        for (const auto& p : out.points)
            for (int k = 0; k < 3; ++k) {
                const double m = p[k] / 0.1;
                const double nearest_odd = 2.0 * std::floor(m / 2.0) + 1.0;
                CHECK(std::abs(m - nearest_odd) < 1e-4);
            }
    }
}

TEST_CASE("pgm round trip") {
    EqualizedDepthMap map;
    map.h = 3;
    map.w = 5;
    map.values = {0, 1, 255, 7, 0, 0, 0, 13, 200, 1, 99, 0, 0, 0, 255};
    map.occupancy.resize(15);
    for (std::size_t i = 0; i < 15; ++i) map.occupancy[i] = map.values[i] != 0;

    auto path = std::filesystem::temp_directory_path() / "pcic_test_roundtrip.pgm";
    write_pgm(path, map);
    EqualizedDepthMap back = read_pgm(path);
    CHECK(back.h == map.h);
    CHECK(back.w == map.w);
    CHECK(back.values == map.values);
    CHECK(back.occupancy == map.occupancy);
    std::filesystem::remove(path);
}
