#include <doctest.h>

#include <cmath>
#include <fstream>

#include "pcic/evaluation.hpp"
#include "pcic/rng.hpp"

using namespace pcic;
namespace fs = std::filesystem;

namespace {

// --- independent BD-Rate oracle -------------------------------------------
// Re-fits the curves with different algorithms (Lagrange-form interpolation
// for <=4 points, independently coded Fritsch-Carlson slopes above) and
// integrates by dense trapezoid instead of antiderivatives.

double lagrange_eval(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double term = ys[i];
        for (std::size_t j = 0; j < xs.size(); ++j)
            if (j != i) term *= (x - xs[j]) / (xs[i] - xs[j]);
        acc += term;
    }
    return acc;
}

double pchip_eval(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    const std::size_t n = xs.size();
    std::vector<double> h(n - 1), delta(n - 1), d(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = xs[i + 1] - xs[i];
        delta[i] = (ys[i + 1] - ys[i]) / h[i];
    }
    auto edge = [](double h0, double h1, double d0, double d1) {
        double v = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if (v * d0 <= 0) return 0.0;
        if (d1 * d0 < 0 && std::abs(v) > 3 * std::abs(d0)) return 3 * d0;
        return v;
    };
    d[0] = edge(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = edge(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (delta[i - 1] * delta[i] <= 0) continue;
        const double w1 = 2 * h[i] + h[i - 1], w2 = h[i] + 2 * h[i - 1];
        d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
    std::size_t seg = 0;
    while (seg + 2 < n && x > xs[seg + 1]) ++seg;
    const double s = (x - xs[seg]) / h[seg];
    const double s2 = s * s, s3 = s2 * s;
    return ys[seg] * (2 * s3 - 3 * s2 + 1) + h[seg] * d[seg] * (s3 - 2 * s2 + s) +
           ys[seg + 1] * (-2 * s3 + 3 * s2) + h[seg] * d[seg + 1] * (s3 - s2);
}

double oracle_bd(const RdCurve& test, const RdCurve& anchor) {
    auto fit = [](const RdCurve& c) {
        std::vector<double> xs, ys;
        for (const auto& p : c.points) {
            xs.push_back(p.psnr);
            ys.push_back(std::log10(p.bpp));
        }
        return std::pair(xs, ys);
    };
    auto [tx, ty] = fit(test);
    auto [ax, ay] = fit(anchor);
    const double lo = std::max(tx.front(), ax.front());
    const double hi = std::min(tx.back(), ax.back());
    auto eval = [](const std::vector<double>& xs, const std::vector<double>& ys, double x) {
        return xs.size() <= 4 ? lagrange_eval(xs, ys, x) : pchip_eval(xs, ys, x);
    };
    const int n = 10000;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = lo + (hi - lo) * i / n;
        const double diff = eval(tx, ty, x) - eval(ax, ay, x);
        acc += (i == 0 || i == n) ? diff / 2 : diff;
    }
    const double delta = acc / n;
    return (std::pow(10.0, delta) - 1.0) * 100.0;
}

RdCurve random_curve(Rng& rng, const std::string& label, std::size_t n) {
    RdCurve c;
    c.label = label;
    double b = 0.1 + rng.uniform() * 0.1;
    double p = 28.0 + rng.uniform() * 4.0;
    for (std::size_t i = 0; i < n; ++i) {
        c.points.push_back({b, p});
        b *= 1.4 + rng.uniform() * 0.6;
        p += 1.0 + rng.uniform() * 2.0;
    }
    return c;
}

}  // namespace

TEST_CASE("psnr cases and scalar oracle") {
    Rng rng(70);
    Tensor x({3, 8, 8});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform();

    CHECK(psnr(x, x).infinite);

    Tensor off = x.clone();
    for (std::size_t i = 0; i < off.numel(); ++i) off[i] += 0.1;
    PsnrResult p = psnr(x, off);
    CHECK(!p.infinite);
    CHECK(p.db == doctest::Approx(20.0).epsilon(1e-12));

    // independent scalar-loop oracle
    Tensor y({3, 8, 8});
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = rng.uniform();
    long double acc = 0.0L;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const long double d = static_cast<long double>(x[i]) - y[i];
        acc += d * d;
    }
    acc /= x.numel();
    const double want = static_cast<double>(10.0L * log10l(1.0L / acc));
    CHECK(psnr(x, y).db == doctest::Approx(want).epsilon(1e-9));

    CHECK_THROWS_AS(psnr(x, Tensor({3, 8, 9})), ShapeError);
}

TEST_CASE("bpp accounting") {
    Bitstream s;
    s.header.orig_h = 256;
    s.header.orig_w = 1242;
    s.z_payload.resize(1000);
    s.y_payload.resize(3975 - 19 - 1000);
    CHECK(s.total_bytes() == 3975);
    CHECK(bpp(s, 256, 1242) == doctest::Approx(0.1000).epsilon(2e-4));
    CHECK(bpp(s, 256, 1242) == 8.0 * 3975 / (1242.0 * 256.0));

    // header-only stream: 19 bytes (4 magic + 1 version + 1 flags + 1 lambda
    // + 2+2 dims + 4+4 payload lengths)
    Bitstream empty;
    empty.header.orig_h = 64;
    empty.header.orig_w = 64;
    CHECK(serialize_bitstream(empty).size() == 19);
    CHECK(bpp(empty, 64, 64) == 8.0 * 19 / (64.0 * 64.0));
}

TEST_CASE("bd_rate identities") {
    Rng rng(71);
    RdCurve a = random_curve(rng, "a", 4);

    CHECK(bd_rate(a, a) == 0.0);

    // uniform 1.10x rate at equal quality: +10% (down to LU rounding)
    RdCurve scaled = a;
    scaled.label = "scaled";
    for (auto& p : scaled.points) p.bpp *= 1.10;
    CHECK(std::abs(bd_rate(scaled, a) - 10.0) < 1e-9);
    CHECK(std::abs(bd_rate(a, scaled) - (1.0 / 1.1 - 1.0) * 100.0) < 1e-9);

    // reciprocity within 0.1%
    for (std::size_t n : {4ull, 6ull}) {
        for (int trial = 0; trial < 10; ++trial) {
            RdCurve t = random_curve(rng, "t", n);
            RdCurve u = random_curve(rng, "u", n);
            try {
                const double ab = bd_rate(t, u);
                const double ba = bd_rate(u, t);
                CHECK(std::abs((1.0 + ab / 100.0) * (1.0 + ba / 100.0) - 1.0) < 1e-3);
            } catch (const NoOverlap&) {
            }
        }
    }

    // disjoint quality ranges
    RdCurve lo = a, hi = a;
    for (auto& p : hi.points) p.psnr += 100.0;
    hi.label = "hi";
    CHECK_THROWS_AS(bd_rate(lo, hi), NoOverlap);
}

TEST_CASE("bd_rate matches the dense-integration oracle") {
    Rng rng(72);
    int compared = 0;
    for (int trial = 0; trial < 40 && compared < 20; ++trial) {
        const std::size_t n = trial % 2 ? 4 : 6;
        RdCurve t = random_curve(rng, "t", n);
        RdCurve u = random_curve(rng, "u", n);
        double got, want;
        try {
            got = bd_rate(t, u);
            want = oracle_bd(t, u);
        } catch (const NoOverlap&) {
            continue;
        }
        ++compared;
        CHECK(std::abs(got - want) < 0.01);
    }
    CHECK(compared >= 20);
}

TEST_CASE("curve validation and json round trip") {
    RdCurve c;
    c.label = "x";
    c.points = {{0.5, 30.0}, {0.4, 31.0}};
    CHECK_THROWS_AS(c.validate(), ConfigError);  // bpp not increasing
    c.points = {{0.4, 30.0}};
    CHECK_THROWS_AS(c.validate(), ConfigError);  // too few points

    c.points = {{0.2, 29.0}, {0.4, 31.5}, {0.8, 34.0}};
    c.validate();
    auto path = fs::temp_directory_path() / "pcic_curve.json";
    write_curve(path, c);
    RdCurve back = read_curve(path);
    CHECK(back.label == "x");
    REQUIRE(back.points.size() == 3);
    CHECK(back.points[1].bpp == 0.4);
    CHECK(back.points[2].psnr == 34.0);
    fs::remove(path);
}

TEST_CASE("emit_report is deterministic and anchors at zero") {
    Rng rng(73);
    RdCurve base = random_curve(rng, "hyper", 4);
    RdCurve pc = base;
    pc.label = "hyper-PC";
    for (auto& p : pc.points) p.bpp *= 0.9;

    auto dir1 = fs::temp_directory_path() / "pcic_report1";
    auto dir2 = fs::temp_directory_path() / "pcic_report2";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    emit_report({base, pc}, "hyper", dir1);
    emit_report({base, pc}, "hyper", dir2);

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    const std::string csv = slurp(dir1 / "bd_rate.csv");
    CHECK(csv == slurp(dir2 / "bd_rate.csv"));
    CHECK(slurp(dir1 / "rd_curves.svg") == slurp(dir2 / "rd_curves.svg"));

    // anchor row is exactly 0.00 with no base pairing; the -PC row carries
    // a negative BD-Rate and a delta vs its base
    CHECK(csv.find("hyper,0.00,\n") != std::string::npos);
    CHECK(csv.find("hyper-PC,-") != std::string::npos);
    const auto pc_row = csv.find("hyper-PC,");
    CHECK(csv.substr(pc_row).find(",-") != std::string::npos);
    fs::remove_all(dir1);
    fs::remove_all(dir2);
}
