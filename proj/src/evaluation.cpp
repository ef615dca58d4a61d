#include "pcic/evaluation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace pcic {

namespace fs = std::filesystem;
using nlohmann::json;

PsnrResult psnr(const Tensor& x, const Tensor& x_hat) {
    if (!x.same_shape(x_hat)) throw ShapeError("psnr: shape mismatch");
    const double m = mse(x, x_hat);
    if (m == 0.0) return {true, 0.0};
    return {false, 10.0 * std::log10(1.0 / m)};
}

double bpp(const Bitstream& stream, int orig_h, int orig_w) {
    return 8.0 * static_cast<double>(stream.total_bytes()) /
           (static_cast<double>(orig_h) * orig_w);
}

void RdCurve::validate() const {
    if (points.size() < 2) throw ConfigError("RD curve '" + label + "' needs at least 2 points");
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (points[i].bpp <= points[i - 1].bpp)
            throw ConfigError("RD curve '" + label + "' bpp must be strictly increasing");
        if (points[i].psnr <= points[i - 1].psnr)
            throw ConfigError("RD curve '" + label + "' PSNR must be strictly increasing");
    }
}

namespace {

/// Fitted log10(bpp) as a function of PSNR with an analytic integral.
struct RateFit {
    // polynomial coefficients (degree <= 3), used when points <= 4
    std::vector<double> poly;
    // pchip knots, used otherwise
    std::vector<double> x, y, d;
    bool use_pchip = false;

    double integral(double a, double b) const;
};

RateFit fit_curve(const RdCurve& curve) {
    const std::size_t n = curve.points.size();
    RateFit fit;
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = curve.points[i].psnr;
        ys[i] = std::log10(curve.points[i].bpp);
    }
    if (n <= 4) {
        // Interpolating polynomial of degree n-1 (the classic cubic at n=4).
        Eigen::MatrixXd v(n, n);
        Eigen::VectorXd rhs(n);
        for (std::size_t i = 0; i < n; ++i) {
            double p = 1.0;
            for (std::size_t j = 0; j < n; ++j) {
                v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = p;
                p *= xs[i];
            }
            rhs(static_cast<Eigen::Index>(i)) = ys[i];
        }
        Eigen::VectorXd coef = v.fullPivLu().solve(rhs);
        fit.poly.assign(coef.data(), coef.data() + n);
        return fit;
    }
    // Fritsch-Carlson monotone piecewise-cubic-hermite slopes.
    fit.use_pchip = true;
    fit.x = xs;
    fit.y = ys;
    fit.d.assign(n, 0.0);
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = xs[i + 1] - xs[i];
        delta[i] = (ys[i + 1] - ys[i]) / h[i];
    }
    auto edge_slope = [](double h0, double h1, double d0, double d1) {
        double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if (d * d0 <= 0.0) return 0.0;
        if (d1 * d0 < 0.0 && std::abs(d) > 3.0 * std::abs(d0)) return 3.0 * d0;
        return d;
    };
    fit.d[0] = n > 2 ? edge_slope(h[0], h[1], delta[0], delta[1]) : delta[0];
    fit.d[n - 1] = n > 2 ? edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3])
                         : delta[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (delta[i - 1] * delta[i] <= 0.0) {
            fit.d[i] = 0.0;
        } else {
            const double w1 = 2.0 * h[i] + h[i - 1];
            const double w2 = h[i] + 2.0 * h[i - 1];
            fit.d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    return fit;
}

double RateFit::integral(double a, double b) const {
    if (!use_pchip) {
        auto anti = [&](double t) {
            double acc = 0.0, p = t;
            for (std::size_t k = 0; k < poly.size(); ++k) {
                acc += poly[k] * p / static_cast<double>(k + 1);
                p *= t;
            }
            return acc;
        };
        return anti(b) - anti(a);
    }
    // Piecewise hermite; [a,b] lies within [x.front(), x.back()].
    auto seg_integral = [&](std::size_t i, double s0, double s1) {
        const double h = x[i + 1] - x[i];
        auto h00 = [](double s) { return 0.5 * s * s * s * s - s * s * s + s; };
        auto h10 = [](double s) { return 0.25 * s * s * s * s - 2.0 / 3.0 * s * s * s + 0.5 * s * s; };
        auto h01 = [](double s) { return -0.5 * s * s * s * s + s * s * s; };
        auto h11 = [](double s) { return 0.25 * s * s * s * s - s * s * s / 3.0; };
        return h * (y[i] * (h00(s1) - h00(s0)) + h * d[i] * (h10(s1) - h10(s0)) +
                    y[i + 1] * (h01(s1) - h01(s0)) + h * d[i + 1] * (h11(s1) - h11(s0)));
    };
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
        const double lo = std::max(a, x[i]);
        const double hi = std::min(b, x[i + 1]);
        if (hi <= lo) continue;
        const double h = x[i + 1] - x[i];
        acc += seg_integral(i, (lo - x[i]) / h, (hi - x[i]) / h);
    }
    return acc;
}

}  // namespace

double bd_rate(const RdCurve& test, const RdCurve& anchor) {
    test.validate();
    anchor.validate();
    const double lo = std::max(test.points.front().psnr, anchor.points.front().psnr);
    const double hi = std::min(test.points.back().psnr, anchor.points.back().psnr);
    if (hi <= lo)
        throw NoOverlap("PSNR ranges of '" + test.label + "' and '" + anchor.label +
                        "' do not overlap");
    const RateFit ft = fit_curve(test);
    const RateFit fa = fit_curve(anchor);
    const double delta = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    return (std::pow(10.0, delta) - 1.0) * 100.0;
}

EvalResult evaluate_model(const Model& model, const DatasetManifest& manifest,
                          const EvalOptions& opts) {
    EvalResult result;
    double bpp_acc = 0.0, psnr_acc = 0.0;
    int psnr_count = 0;
    for (const auto& rec : manifest.records) {
        ScenePair full = load_scene_pair(rec, manifest.camera);
        LidarScan scan =
            opts.degrade_voxel > 0.0 ? degrade_scan(full.scan, opts.degrade_voxel) : full.scan;
        ProjectionConfig pc{opts.projection_s, full.image.dim(2), full.image.dim(1)};
        SparseDepthMap sparse = project_scan(scan, full.calib, pc);
        SparseDepthMap sparse_roi =
            crop_sparse(sparse, manifest.roi.x, manifest.roi.y, manifest.roi.w, manifest.roi.h);
        EqualizedDepthMap depth = normalize_equalize(sparse_roi, pc);
        Tensor image = crop_roi(full, manifest.roi).image;

        Model::CompressResult comp = model.compress(image, &depth, opts.zeros);
        Tensor recon = model.decompress(comp.stream, &depth);
        PsnrResult p = psnr(image, recon);

        FrameEval fe;
        fe.scene_id = rec.scene_id;
        fe.frame_id = rec.frame_id;
        fe.bpp = bpp(comp.stream, manifest.roi.h, manifest.roi.w);
        fe.psnr_db = p.db;
        fe.psnr_infinite = p.infinite;
        result.frames.push_back(fe);

        bpp_acc += fe.bpp;
        if (p.infinite) {
            std::fprintf(stderr, "[eval] frame %s/%s reconstructed losslessly; excluded from the "
                                 "PSNR average\n",
                         rec.scene_id.c_str(), rec.frame_id.c_str());
        } else {
            psnr_acc += p.db;
            ++psnr_count;
        }
    }
    if (result.frames.empty()) throw ConfigError("evaluate_model: empty manifest");
    result.point.bpp = bpp_acc / static_cast<double>(result.frames.size());
    result.point.psnr = psnr_count > 0 ? psnr_acc / psnr_count : 0.0;
    return result;
}

void write_curve(const fs::path& path, const RdCurve& curve) {
    json j;
    j["label"] = curve.label;
    j["points"] = json::array();
    for (const auto& p : curve.points) j["points"].push_back({{"bpp", p.bpp}, {"psnr", p.psnr}});
    std::ofstream out(path);
    if (!out) throw IoError("cannot create curve file '" + path.string() + "'");
    out << j.dump(2) << "\n";
}

RdCurve read_curve(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open curve file '" + path.string() + "'");
    json j = json::parse(in);
    RdCurve c;
    c.label = j.at("label").get<std::string>();
    for (const auto& p : j.at("points"))
        c.points.push_back({p.at("bpp").get<double>(), p.at("psnr").get<double>()});
    return c;
}

void write_frame_records(const fs::path& path, const EvalResult& result, const std::string& mode) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot create records file '" + path.string() + "'");
    for (const auto& f : result.frames)
        out << json{{"scene_id", f.scene_id}, {"frame_id", f.frame_id},     {"bpp", f.bpp},
                    {"psnr", f.psnr_db},      {"infinite", f.psnr_infinite}, {"mode", mode}}
                    .dump()
            << "\n";
}

namespace {

std::string base_label(const std::string& label) {
    for (const char* suffix : {"-PC", "-pc", "_pc", "_PC"}) {
        const std::size_t len = std::string(suffix).size();
        if (label.size() > len && label.compare(label.size() - len, len, suffix) == 0)
            return label.substr(0, label.size() - len);
    }
    return "";
}

void write_svg_plot(const fs::path& path, const std::vector<RdCurve>& curves) {
    const int width = 640, height = 480, margin = 56;
    double bpp_lo = 1e300, bpp_hi = -1e300, ps_lo = 1e300, ps_hi = -1e300;
    for (const auto& c : curves)
        for (const auto& p : c.points) {
            bpp_lo = std::min(bpp_lo, p.bpp);
            bpp_hi = std::max(bpp_hi, p.bpp);
            ps_lo = std::min(ps_lo, p.psnr);
            ps_hi = std::max(ps_hi, p.psnr);
        }
    if (bpp_hi <= bpp_lo) bpp_hi = bpp_lo + 1.0;
    if (ps_hi <= ps_lo) ps_hi = ps_lo + 1.0;
    const double bpp_pad = 0.05 * (bpp_hi - bpp_lo), ps_pad = 0.05 * (ps_hi - ps_lo);
    bpp_lo -= bpp_pad;
    bpp_hi += bpp_pad;
    ps_lo -= ps_pad;
    ps_hi += ps_pad;
    auto sx = [&](double b) {
        return margin + (b - bpp_lo) / (bpp_hi - bpp_lo) * (width - 2 * margin);
    };
    auto sy = [&](double p) {
        return height - margin - (p - ps_lo) / (ps_hi - ps_lo) * (height - 2 * margin);
    };
    static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                     "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
    std::ofstream out(path);
    if (!out) throw IoError("cannot create plot '" + path.string() + "'");
    char buf[256];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    // axes
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", margin,
                  height - margin, width - margin, height - margin);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", margin,
                  margin, margin, height - margin);
    out << buf;
    for (int t = 0; t <= 4; ++t) {
        const double fb = bpp_lo + (bpp_hi - bpp_lo) * t / 4.0;
        const double fp = ps_lo + (ps_hi - ps_lo) * t / 4.0;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.1f\" y=\"%d\" font-size=\"11\" text-anchor=\"middle\">%.3g"
                      "</text>\n",
                      sx(fb), height - margin + 16, fb);
        out << buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">%.4g"
                      "</text>\n",
                      margin - 6, sy(fp) + 4, fp);
        out << buf;
    }
    out << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
        << "\" font-size=\"13\" text-anchor=\"middle\">Bits per pixel</text>\n";
    out << "<text x=\"16\" y=\"" << height / 2
        << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << height / 2 << ")\">PSNR (dB)</text>\n";
    for (std::size_t ci = 0; ci < curves.size(); ++ci) {
        const char* color = kPalette[ci % 8];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& p : curves[ci].points) {
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", sx(p.bpp), sy(p.psnr));
            out << buf;
        }
        out << "\"/>\n";
        for (const auto& p : curves[ci].points) {
            std::snprintf(buf, sizeof(buf),
                          "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n", sx(p.bpp),
                          sy(p.psnr), color);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%d\" font-size=\"12\" fill=\"%s\">%s</text>\n",
                      width - margin - 150, margin + 16 * static_cast<int>(ci), color,
                      curves[ci].label.c_str());
        out << buf;
    }
    out << "</svg>\n";
}

}  // namespace

void emit_report(const std::vector<RdCurve>& curves, const std::string& anchor_label,
                 const fs::path& out_dir) {
    if (curves.empty()) throw ConfigError("emit_report: no curves");
    fs::create_directories(out_dir);
    const RdCurve* anchor = nullptr;
    for (const auto& c : curves)
        if (c.label == anchor_label) anchor = &c;
    if (!anchor) throw ConfigError("emit_report: anchor '" + anchor_label + "' not found");

    std::ofstream csv(out_dir / "bd_rate.csv");
    if (!csv) throw IoError("cannot create report table");
    csv << "model,bd_rate_percent_vs_" << anchor_label << ",delta_percent_vs_base\n";
    char buf[64];
    for (const auto& c : curves) {
        const double bd = bd_rate(c, *anchor);
        csv << c.label << ",";
        std::snprintf(buf, sizeof(buf), "%.2f", bd);
        csv << buf << ",";
        const std::string base = base_label(c.label);
        const RdCurve* base_curve = nullptr;
        for (const auto& other : curves)
            if (other.label == base) base_curve = &other;
        if (base_curve) {
            std::snprintf(buf, sizeof(buf), "%.2f", bd - bd_rate(*base_curve, *anchor));
            csv << buf;
        }
        csv << "\n";
    }
    write_svg_plot(out_dir / "rd_curves.svg", curves);
}

}  // namespace pcic
