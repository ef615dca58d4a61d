#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pcic/dataset.hpp"
#include "pcic/model.hpp"

namespace pcic {

struct PsnrResult {
    bool infinite = false;  // identical images
    double db = 0.0;
};

/// 10*log10(1/MSE) over all pixels and channels, inputs in [0,1].
PsnrResult psnr(const Tensor& x, const Tensor& x_hat);

/// 8 * (total stream bytes incl. header) / (orig_H * orig_W).
double bpp(const Bitstream& stream, int orig_h, int orig_w);

struct RdPoint {
    double bpp = 0.0;
    double psnr = 0.0;
};

struct RdCurve {
    std::string label;
    std::vector<RdPoint> points;  // sorted by bpp, strictly increasing

    void validate() const;
};

/// Bjontegaard delta-rate of `test` against `anchor` in percent (negative:
/// test is cheaper). log10(bpp) is fitted as a function of PSNR — the
/// classic cubic when a curve has exactly 4 points (lower degree below
/// that), a monotone piecewise-cubic-hermite fit above — and the average
/// log-rate gap over the overlapping PSNR interval maps through
/// (10^gap - 1) * 100. Throws NoOverlap when the quality ranges are
/// disjoint.
double bd_rate(const RdCurve& test, const RdCurve& anchor);

struct EvalOptions {
    double projection_s = 3.0;
    double degrade_voxel = 0.0;  // > 0: voxel-quantize scans before projection
    bool zeros = false;          // feed an all-zero depth raster
};

struct FrameEval {
    std::string scene_id, frame_id;
    double bpp = 0.0;
    double psnr_db = 0.0;
    bool psnr_infinite = false;
};

struct EvalResult {
    RdPoint point;  // averages over frames (infinite-PSNR frames excluded)
    std::vector<FrameEval> frames;
};

/// Compresses and decompresses every manifest frame through real
/// bitstreams; depth maps are projected from the scans (after optional
/// degradation) exactly as in training.
EvalResult evaluate_model(const Model& model, const DatasetManifest& manifest,
                          const EvalOptions& opts);

void write_curve(const std::filesystem::path& path, const RdCurve& curve);
RdCurve read_curve(const std::filesystem::path& path);

void write_frame_records(const std::filesystem::path& path, const EvalResult& result,
                         const std::string& mode);

/// RD plot (SVG) plus a CSV table of BD-Rates against the named anchor,
/// with a delta column pairing each "<base>-PC"-style label with its base
/// curve when both are present. Output bytes are deterministic.
void emit_report(const std::vector<RdCurve>& curves, const std::string& anchor_label,
                 const std::filesystem::path& out_dir);

}  // namespace pcic
