#include "ctrlvdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "ctrlvdiff/rng.hpp"

namespace ctrlvdiff {

namespace {

void require_same_shape(const ModalityTensor& a, const ModalityTensor& b, const char* what) {
    require(a.shape == b.shape, std::string(what) + ": shape mismatch " + to_string(a.shape) + " vs " +
                                    to_string(b.shape));
}

struct LineFit {
    double scale = 0.0;
    double shift = 0.0;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= n, my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LineFit f;
    f.scale = sxx > 0 ? sxy / sxx : 0.0;
    f.shift = my - f.scale * mx;
    return f;
}

}  // namespace

// ---- depth ----------------------------------------------------------------

DepthMetrics depth_metrics(const ModalityTensor& pred, const ModalityTensor& gt, bool align, AlignSpace space) {
    require_same_shape(pred, gt, "depth_metrics");
    require(!gt.data.empty(), "depth_metrics: empty input");
    for (float g : gt.data) require(std::isfinite(g) && g > 0.0f, "depth_metrics: ground-truth depth must be positive");
    for (float p : pred.data) require(std::isfinite(p), "depth_metrics: non-finite prediction");

    const std::size_t n = gt.data.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = pred.data[i];

    DepthMetrics out;
    if (align) {
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (space == AlignSpace::disparity) {
                require(d[i] > 0, "depth_metrics: disparity alignment needs positive predictions");
                x[i] = 1.0 / d[i];
                y[i] = 1.0 / gt.data[i];
            } else {
                x[i] = d[i];
                y[i] = gt.data[i];
            }
        }
        const LineFit f = least_squares(x, y);
        // Aligned values are clipped to the ground-truth range, as in the usual
        // evaluation protocol, so a few near-zero disparities cannot dominate.
        const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
        const double y_min = *lo, y_max = *hi;
        if (f.scale <= 0.0) {
            out.fallback = true;
        } else {
            out.aligned = true;
            out.scale = f.scale;
            out.shift = f.shift;
            for (std::size_t i = 0; i < n; ++i) {
                const double a = std::clamp(f.scale * x[i] + f.shift, y_min, y_max);
                d[i] = space == AlignSpace::disparity ? 1.0 / a : a;
            }
        }
    }

    double abs_rel = 0.0;
    std::size_t good = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = gt.data[i];
        abs_rel += std::abs(d[i] - g) / g;
        if (d[i] > 0) {
            const double ratio = std::max(d[i] / g, g / d[i]);
            if (ratio < 1.25) ++good;
        }
    }
    out.abs_rel = abs_rel / static_cast<double>(n);
    out.delta1 = static_cast<double>(good) / static_cast<double>(n);
    return out;
}

// ---- normals --------------------------------------------------------------

NormalMetrics normal_metrics(const ModalityTensor& pred, const ModalityTensor& gt) {
    require_same_shape(pred, gt, "normal_metrics");
    require(pred.shape.channels == 3, "normal_metrics: expected 3-channel normals");
    NormalMetrics out;
    std::vector<double> angles;
    angles.reserve(pred.shape.pixels());
    for (std::size_t i = 0; i < pred.shape.pixels(); ++i) {
        double a[3], b[3];
        for (int c = 0; c < 3; ++c) a[c] = pred.data[3 * i + c], b[c] = gt.data[3 * i + c];
        const double la = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
        const double lb = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
        if (la < 1e-12 || lb < 1e-12) {
            ++out.excluded;
            continue;
        }
        if (std::abs(la - 1.0) > 1e-3 || std::abs(lb - 1.0) > 1e-3) out.renormalized = true;
        const double cx = a[1] * b[2] - a[2] * b[1];
        const double cy = a[2] * b[0] - a[0] * b[2];
        const double cz = a[0] * b[1] - a[1] * b[0];
        const double s = std::sqrt(cx * cx + cy * cy + cz * cz) / (la * lb);
        const double c = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (la * lb);
        angles.push_back(std::atan2(s, c) * 180.0 / std::numbers::pi);
    }
    if (angles.empty()) return out;
    const double n = static_cast<double>(angles.size());
    double sum = 0;
    int a1 = 0, a2 = 0, a3 = 0;
    for (double a : angles) {
        sum += a;
        a1 += a < 11.25 - kAngleGuardDeg;
        a2 += a < 22.5 - kAngleGuardDeg;
        a3 += a < 30.0 - kAngleGuardDeg;
    }
    out.mean_deg = sum / n;
    out.acc_11_25 = a1 / n;
    out.acc_22_5 = a2 / n;
    out.acc_30 = a3 / n;
    std::sort(angles.begin(), angles.end());
    const std::size_t mid = angles.size() / 2;
    out.median_deg = angles.size() % 2 ? angles[mid] : 0.5 * (angles[mid - 1] + angles[mid]);
    return out;
}

// ---- segmentation ---------------------------------------------------------

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    if (n == 0) return {};
    const int m = static_cast<int>(cost[0].size());
    require(n <= m, "hungarian: more rows than columns");
    const double inf = std::numeric_limits<double>::infinity();
    // Potentials method on 1-indexed arrays; p[j] is the row matched to column j.
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) minv[j] = cur, way[j] = j0;
                if (minv[j] < delta) delta = minv[j], j1 = j;
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> assign(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= m; ++j)
        if (p[j] > 0) assign[static_cast<std::size_t>(p[j] - 1)] = j - 1;
    return assign;
}

SegMetrics seg_iou(const ModalityTensor& pred, const ModalityTensor& gt, int k) {
    require(pred.shape.same_grid(gt.shape), "seg_iou: prediction and ground truth grids differ");
    require(pred.shape.channels == 3, "seg_iou: prediction must be a 3-channel color map");
    require(gt.shape.channels == 1, "seg_iou: ground truth must be an id map");
    std::set<int> ids;
    for (float v : gt.data) ids.insert(static_cast<int>(v));
    const std::vector<int> gt_ids(ids.begin(), ids.end());
    const int g = static_cast<int>(gt_ids.size());
    require(k >= g, "seg_iou: K=" + std::to_string(k) + " is smaller than the " + std::to_string(g) +
                        " ground-truth instances");

    const std::size_t n = gt.data.size();
    auto dist2 = [&](std::size_t i, const std::array<double, 3>& c) {
        double s = 0;
        for (int ch = 0; ch < 3; ++ch) {
            const double d = pred.data[3 * i + ch] - c[static_cast<std::size_t>(ch)];
            s += d * d;
        }
        return s;
    };
    auto color_of = [&](std::size_t i) {
        return std::array<double, 3>{pred.data[3 * i], pred.data[3 * i + 1], pred.data[3 * i + 2]};
    };

    // k-means++ seeding.
    Rng rng(0);
    std::vector<std::array<double, 3>> centers;
    centers.push_back(color_of(static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(n) - 1))));
    std::vector<double> d2(n);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) best = std::min(best, dist2(i, c));
            d2[i] = best;
            total += best;
        }
        std::size_t pick = 0;
        if (total <= 0) {
            pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(n) - 1));
        } else {
            double r = rng.uniform() * total;
            for (pick = 0; pick + 1 < n; ++pick) {
                r -= d2[pick];
                if (r < 0) break;
            }
        }
        centers.push_back(color_of(pick));
    }

    std::vector<int> label(n, -1);
    for (int iter = 0; iter < 50; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = dist2(i, centers[0]);
            for (int c = 1; c < k; ++c) {
                const double dd = dist2(i, centers[static_cast<std::size_t>(c)]);
                if (dd < bd) bd = dd, best = c;
            }
            if (label[i] != best) label[i] = best, changed = true;
        }
        if (!changed) break;
        std::vector<std::array<double, 3>> sum(static_cast<std::size_t>(k), {0, 0, 0});
        std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(label[i]);
            for (int ch = 0; ch < 3; ++ch) sum[c][static_cast<std::size_t>(ch)] += pred.data[3 * i + ch];
            ++count[c];
        }
        for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c)
            if (count[c])
                for (int ch = 0; ch < 3; ++ch)
                    centers[c][static_cast<std::size_t>(ch)] = sum[c][static_cast<std::size_t>(ch)] / count[c];
    }

    std::map<int, int> row_of;
    for (int r = 0; r < g; ++r) row_of[gt_ids[static_cast<std::size_t>(r)]] = r;
    std::vector<std::vector<double>> inter(static_cast<std::size_t>(g), std::vector<double>(static_cast<std::size_t>(k), 0));
    std::vector<double> gsize(static_cast<std::size_t>(g), 0), csize(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<std::size_t>(row_of[static_cast<int>(gt.data[i])]);
        const auto c = static_cast<std::size_t>(label[i]);
        inter[r][c] += 1;
        gsize[r] += 1;
        csize[c] += 1;
    }
    std::vector<std::vector<double>> cost(static_cast<std::size_t>(g), std::vector<double>(static_cast<std::size_t>(k)));
    std::vector<std::vector<double>> iou = cost;
    for (std::size_t r = 0; r < static_cast<std::size_t>(g); ++r)
        for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
            const double uni = gsize[r] + csize[c] - inter[r][c];
            iou[r][c] = uni > 0 ? inter[r][c] / uni : 0.0;
            cost[r][c] = -iou[r][c];
        }
    const std::vector<int> match = hungarian(cost);
    SegMetrics out;
    double sum = 0;
    for (std::size_t r = 0; r < static_cast<std::size_t>(g); ++r) {
        const double v = iou[r][static_cast<std::size_t>(match[r])];
        out.per_instance[gt_ids[r]] = v;
        sum += v;
    }
    out.miou = sum / g;
    return out;
}

// ---- image quality --------------------------------------------------------

double psnr(const ModalityTensor& pred, const ModalityTensor& gt) {
    require_same_shape(pred, gt, "psnr");
    require(pred.shape.frames >= 1 && !pred.data.empty(), "psnr: empty input");
    const std::size_t per_frame = pred.data.size() / static_cast<std::size_t>(pred.shape.frames);
    double acc = 0;
    for (int t = 0; t < pred.shape.frames; ++t) {
        double se = 0;
        for (std::size_t i = t * per_frame; i < (t + 1) * per_frame; ++i) {
            const double d = static_cast<double>(pred.data[i]) - gt.data[i];
            se += d * d;
        }
        const double mse = se / static_cast<double>(per_frame);
        acc += mse < 1e-10 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
    }
    return acc / pred.shape.frames;
}

double ssim(const ModalityTensor& pred, const ModalityTensor& gt) {
    require_same_shape(pred, gt, "ssim");
    constexpr int R = 3;  // 7x7 window
    constexpr double sigma = 1.5, C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    double w[2 * R + 1];
    double wsum = 0;
    for (int i = -R; i <= R; ++i) wsum += w[i + R] = std::exp(-(i * i) / (2 * sigma * sigma));
    for (double& x : w) x /= wsum;

    const Shape& s = pred.shape;
    const int H = s.height, W = s.width;
    auto blur = [&](const std::vector<double>& img) {
        std::vector<double> tmp(img.size()), out(img.size());
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double acc = 0;
                for (int k = -R; k <= R; ++k) acc += w[k + R] * img[y * W + std::clamp(x + k, 0, W - 1)];
                tmp[y * W + x] = acc;
            }
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double acc = 0;
                for (int k = -R; k <= R; ++k) acc += w[k + R] * tmp[std::clamp(y + k, 0, H - 1) * W + x];
                out[y * W + x] = acc;
            }
        return out;
    };

    double total = 0;
    const std::size_t px = static_cast<std::size_t>(H) * W;
    for (int t = 0; t < s.frames; ++t)
        for (int c = 0; c < s.channels; ++c) {
            std::vector<double> a(px), b(px), aa(px), bb(px), ab(px);
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * W + x;
                    a[i] = pred.at(t, y, x, c);
                    b[i] = gt.at(t, y, x, c);
                    aa[i] = a[i] * a[i];
                    bb[i] = b[i] * b[i];
                    ab[i] = a[i] * b[i];
                }
            const auto ma = blur(a), mb = blur(b), maa = blur(aa), mbb = blur(bb), mab = blur(ab);
            double acc = 0;
            for (std::size_t i = 0; i < px; ++i) {
                const double va = maa[i] - ma[i] * ma[i];
                const double vb = mbb[i] - mb[i] * mb[i];
                const double cov = mab[i] - ma[i] * mb[i];
                acc += ((2 * ma[i] * mb[i] + C1) * (2 * cov + C2)) /
                       ((ma[i] * ma[i] + mb[i] * mb[i] + C1) * (va + vb + C2));
            }
            total += acc / static_cast<double>(px);
        }
    return total / (static_cast<double>(s.frames) * s.channels);
}

ImageQuality image_quality(const ModalityTensor& pred, const ModalityTensor& gt) { return {psnr(pred, gt), ssim(pred, gt)}; }

double temporal_consistency(const ModalityTensor& clip) {
    require(clip.shape.frames >= 2, "temporal_consistency: need at least 2 frames");
    const std::size_t per_frame = clip.data.size() / static_cast<std::size_t>(clip.shape.frames);
    double acc = 0;
    for (int t = 1; t < clip.shape.frames; ++t) {
        double d = 0;
        for (std::size_t i = 0; i < per_frame; ++i)
            d += std::abs(static_cast<double>(clip.data[t * per_frame + i]) - clip.data[(t - 1) * per_frame + i]);
        acc += d / static_cast<double>(per_frame);
    }
    return std::clamp(1.0 - acc / (clip.shape.frames - 1), 0.0, 1.0);
}

// ---- clip-level evaluation ------------------------------------------------

std::vector<std::string> metric_groups() { return {"depth", "normal", "seg", "rgb", "albedo", "temporal"}; }

std::vector<std::pair<std::string, double>> evaluate_clip(const ClipRecord& pred, const ClipRecord& gt,
                                                          const std::vector<std::string>& groups) {
    const auto known = metric_groups();
    std::vector<std::pair<std::string, double>> rows;
    auto need = [&](const ClipRecord& r, Modality m, const char* side) -> const ModalityTensor& {
        require(r.has(m), std::string(side) + " clip " + r.clip_id + " lacks " + std::string(name_of(m)));
        return r.get(m);
    };
    for (const auto& g : groups) {
        require(std::find(known.begin(), known.end(), g) != known.end(), "unknown metric group '" + g + "'");
        if (g == "depth") {
            const auto r = depth_metrics(need(pred, Modality::depth, "pred"), need(gt, Modality::depth, "gt"), true);
            rows.emplace_back("depth_absrel", r.abs_rel);
            rows.emplace_back("depth_delta1", r.delta1);
        } else if (g == "normal") {
            const auto r = normal_metrics(need(pred, Modality::normal, "pred"), need(gt, Modality::normal, "gt"));
            rows.emplace_back("normal_mean_deg", r.mean_deg);
            rows.emplace_back("normal_median_deg", r.median_deg);
            rows.emplace_back("normal_acc_11.25", r.acc_11_25);
            rows.emplace_back("normal_acc_22.5", r.acc_22_5);
            rows.emplace_back("normal_acc_30", r.acc_30);
        } else if (g == "seg") {
            const ModalityTensor& ids = need(pred, Modality::segmentation, "pred");
            const ModalityTensor& gt_ids = need(gt, Modality::segmentation, "gt");
            const ModalityTensor color = to_color_space(ids).tensor;
            const std::set<float> distinct(gt_ids.data.begin(), gt_ids.data.end());
            rows.emplace_back("seg_miou", seg_iou(color, gt_ids, static_cast<int>(distinct.size())).miou);
        } else if (g == "rgb" || g == "albedo") {
            const Modality m = g == "rgb" ? Modality::rgb : Modality::albedo;
            const auto q = image_quality(need(pred, m, "pred"), need(gt, m, "gt"));
            rows.emplace_back(g + "_psnr", q.psnr);
            rows.emplace_back(g + "_ssim", q.ssim);
        } else {
            rows.emplace_back("temporal_consistency", temporal_consistency(need(pred, Modality::rgb, "pred")));
        }
    }
    return rows;
}

}  // namespace ctrlvdiff
