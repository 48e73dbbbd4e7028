#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ctrlvdiff/datastore.hpp"
#include "ctrlvdiff/modality.hpp"

namespace ctrlvdiff {

// ---- depth ----------------------------------------------------------------

enum class AlignSpace {
    disparity,  // least-squares scale and shift on inverse depth
    depth,      // least-squares scale and shift on depth itself
};

struct DepthMetrics {
    double abs_rel = 0.0;
    double delta1 = 0.0;
    double scale = 1.0;
    double shift = 0.0;
    bool aligned = false;
    /// Alignment produced a nonpositive scale; metrics are unaligned.
    bool fallback = false;
};

DepthMetrics depth_metrics(const ModalityTensor& pred, const ModalityTensor& gt, bool align,
                           AlignSpace space = AlignSpace::disparity);

// ---- normals --------------------------------------------------------------

struct NormalMetrics {
    double mean_deg = 0.0;
    double median_deg = 0.0;
    double acc_11_25 = 0.0;
    double acc_22_5 = 0.0;
    double acc_30 = 0.0;
    int excluded = 0;
    bool renormalized = false;
};

/// Angles closer than this to a threshold count as reaching it, so float
/// storage of unit vectors cannot flip a strict comparison.
inline constexpr double kAngleGuardDeg = 1e-4;

NormalMetrics normal_metrics(const ModalityTensor& pred, const ModalityTensor& gt);

// ---- segmentation ---------------------------------------------------------

struct SegMetrics {
    double miou = 0.0;
    std::map<int, double> per_instance;  // gt id -> matched IoU
};

/// K-means (k-means++ init, seed 0, 50 Lloyd iterations) on predicted colors,
/// then a maximum-total-IoU one-to-one matching of clusters to gt instances.
/// `pred` is a color-space [T,H,W,3] map, `gt` a native id map.
SegMetrics seg_iou(const ModalityTensor& pred, const ModalityTensor& gt, int k);

/// Minimum-cost assignment of every row to a distinct column (rows <= cols).
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

// ---- image quality --------------------------------------------------------

struct ImageQuality {
    double psnr = 0.0;
    double ssim = 0.0;
};

inline constexpr double kPsnrCap = 100.0;

double psnr(const ModalityTensor& pred, const ModalityTensor& gt);
double ssim(const ModalityTensor& pred, const ModalityTensor& gt);
ImageQuality image_quality(const ModalityTensor& pred, const ModalityTensor& gt);

double temporal_consistency(const ModalityTensor& clip);

// ---- clip-level evaluation ------------------------------------------------

/// Metric groups accepted by `evaluate_clip`: depth, normal, seg, rgb, albedo, temporal.
std::vector<std::string> metric_groups();

/// (metric name, value) rows for the requested groups, in group order.
std::vector<std::pair<std::string, double>> evaluate_clip(const ClipRecord& pred, const ClipRecord& gt,
                                                          const std::vector<std::string>& groups);

}  // namespace ctrlvdiff
