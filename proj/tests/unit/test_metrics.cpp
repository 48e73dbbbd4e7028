#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "ctrlvdiff/metrics.hpp"
#include "helpers.hpp"

using namespace ctrlvdiff;

namespace {

ModalityTensor depth_map(const std::vector<float>& v) {
    ModalityTensor t(Modality::depth, Space::native, Shape{1, 1, static_cast<int>(v.size()), 1});
    t.data = v;
    return t;
}

ModalityTensor scaled(const ModalityTensor& t, float s) {
    ModalityTensor out = t;
    for (float& v : out.data) v *= s;
    return out;
}

// Normals lying in the xz plane, so a rotation about y moves each by exactly `deg`.
ModalityTensor xz_normals(int n) {
    ModalityTensor t(Modality::normal, Space::native, Shape{1, 1, n, 3});
    for (int i = 0; i < n; ++i) {
        const double a = -1.2 + 2.4 * i / (n - 1);
        t.at(0, 0, i, 0) = static_cast<float>(std::sin(a));
        t.at(0, 0, i, 2) = static_cast<float>(std::cos(a));
    }
    return t;
}

ModalityTensor rotate_y(const ModalityTensor& n, double deg) {
    const double r = deg * std::numbers::pi / 180.0, c = std::cos(r), s = std::sin(r);
    ModalityTensor out = n;
    for (std::size_t i = 0; i < n.data.size(); i += 3) {
        const double x = n.data[i], z = n.data[i + 2];
        out.data[i] = static_cast<float>(c * x + s * z);
        out.data[i + 2] = static_cast<float>(-s * x + c * z);
    }
    return out;
}

ModalityTensor paint(const ModalityTensor& ids, const std::map<int, int>& color_of) {
    ModalityTensor out(Modality::segmentation, Space::color, Shape{ids.shape.frames, ids.shape.height, ids.shape.width, 3});
    for (std::size_t i = 0; i < ids.data.size(); ++i) {
        const Rgb c = palette_color(color_of.at(static_cast<int>(ids.data[i])));
        out.data[3 * i] = c.r, out.data[3 * i + 1] = c.g, out.data[3 * i + 2] = c.b;
    }
    return out;
}

ModalityTensor rgb_clip(int frames, int h, int w, std::uint64_t seed, float hi = 1.0f) {
    ModalityTensor t(Modality::rgb, Space::native, Shape{frames, h, w, 3});
    ctrlvdiff::Rng rng(seed);
    for (float& v : t.data) v = static_cast<float>(rng.uniform() * hi);
    return t;
}

}  // namespace

TEST_CASE("depth metrics on identity, scale and the 1.25 boundary") {
    // Dyadic depths keep 1.25 * d exact in float.
    const ModalityTensor gt = depth_map({0.75f, 1.0f, 1.5f, 2.0f, 3.0f, 4.5f});
    DepthMetrics r = depth_metrics(gt, gt, false);
    CHECK(r.abs_rel == 0.0);
    CHECK(r.delta1 == 1.0);
    r = depth_metrics(scaled(gt, 2.0f), gt, true);
    CHECK(r.aligned);
    CHECK(r.abs_rel == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.delta1 == 1.0);
    CHECK(r.scale == doctest::Approx(2.0));
    r = depth_metrics(scaled(gt, 1.25f), gt, false);
    CHECK(r.delta1 == 0.0);
    CHECK(r.abs_rel == doctest::Approx(0.25));
    CHECK(depth_metrics(scaled(gt, 1.2f), gt, false).delta1 == 1.0);
}

TEST_CASE("AbsRel is asymmetric") {
    const ModalityTensor g = depth_map({1.0f, 2.0f, 4.0f});
    CHECK(depth_metrics(scaled(g, 2.0f), g, false).abs_rel == doctest::Approx(1.0));
    CHECK(depth_metrics(g, scaled(g, 2.0f), false).abs_rel == doctest::Approx(0.5));
}

TEST_CASE("depth alignment spaces and the nonpositive-scale fallback") {
    const ModalityTensor gt = depth_map({1.0f, 1.5f, 2.0f, 3.0f});
    ModalityTensor affine = gt;
    for (float& v : affine.data) v = 3.0f * v + 0.5f;
    const DepthMetrics d = depth_metrics(affine, gt, true, AlignSpace::depth);
    CHECK(d.abs_rel == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(d.scale == doctest::Approx(1.0 / 3.0));
    CHECK(d.shift == doctest::Approx(-0.5 / 3.0));

    // Predicted disparity decreasing where gt disparity increases.
    const ModalityTensor reversed = depth_map({3.0f, 2.0f, 1.5f, 1.0f});
    const DepthMetrics f = depth_metrics(reversed, gt, true);
    CHECK(f.fallback);
    CHECK_FALSE(f.aligned);
    CHECK(f.abs_rel == doctest::Approx(depth_metrics(reversed, gt, false).abs_rel));
}

TEST_CASE("aligned predictions are clipped to the ground-truth range") {
    // The disparity fit extrapolates the last pixel to a negative disparity,
    // which would invert to an enormous depth. After clipping each pixel lies
    // in [1, 25], so AbsRel is bounded by (25 - 1) / 1.
    const ModalityTensor gt = depth_map({1.0f, 1.0f, 25.0f, 25.0f});
    const ModalityTensor pred = depth_map({1.0f, 1.0f, 1.0f / 0.9f, 5.0f});
    for (AlignSpace space : {AlignSpace::disparity, AlignSpace::depth}) {
        const DepthMetrics m = depth_metrics(pred, gt, true, space);
        CHECK(std::isfinite(m.abs_rel));
        CHECK(m.abs_rel <= 24.0);
    }
}

TEST_CASE("depth metrics reject bad inputs") {
    const ModalityTensor gt = depth_map({1.0f, 0.0f});
    CHECK_THROWS_AS(depth_metrics(gt, gt, false), ValidationError);
    CHECK_THROWS_AS(depth_metrics(depth_map({1.0f}), depth_map({1.0f, 2.0f}), false), ValidationError);
}

TEST_CASE("delta1 is non-increasing as a multiplicative error grows") {
    ModalityTensor gt(Modality::depth, Space::native, Shape{1, 8, 8, 1});
    ctrlvdiff::Rng rng(3);
    for (float& v : gt.data) v = static_cast<float>(1.0 + 4.0 * rng.uniform());
    ModalityTensor pred = gt;
    double prev = 1.0;
    for (double e = 0.0; e <= 0.6; e += 0.02) {
        // Alternate over- and under-estimates so the error is not a pure scale.
        for (std::size_t i = 0; i < gt.data.size(); ++i)
            pred.data[i] = static_cast<float>(gt.data[i] * (i % 2 ? 1.0 + e : 1.0 / (1.0 + e * (i % 3) / 2.0)));
        const double d1 = depth_metrics(pred, gt, false).delta1;
        CHECK(d1 <= prev);
        prev = d1;
    }
    CHECK(prev < 1.0);
}

TEST_CASE("normal metrics: identity, fixed rotation and antipodes") {
    const ModalityTensor gt = xz_normals(25);
    NormalMetrics r = normal_metrics(gt, gt);
    CHECK(r.mean_deg == doctest::Approx(0.0).epsilon(1e-4));
    CHECK(r.acc_11_25 == 1.0);
    CHECK(r.acc_30 == 1.0);

    r = normal_metrics(rotate_y(gt, 30.0), gt);
    CHECK(r.mean_deg == doctest::Approx(30.0).epsilon(1e-5));
    CHECK(r.median_deg == doctest::Approx(30.0).epsilon(1e-5));
    CHECK(r.acc_30 == 0.0);
    CHECK(r.acc_22_5 == 0.0);
    CHECK(normal_metrics(rotate_y(gt, 29.9), gt).acc_30 == 1.0);

    ModalityTensor flipped = gt;
    for (float& v : flipped.data) v = -v;
    CHECK(normal_metrics(flipped, gt).mean_deg == doctest::Approx(180.0));
    CHECK_FALSE(normal_metrics(flipped, gt).renormalized);
}

TEST_CASE("threshold accuracies fall monotonically with the error angle") {
    const ModalityTensor gt = xz_normals(9);
    double p1 = 1, p2 = 1, p3 = 1;
    for (double deg = 0; deg <= 40; deg += 2.5) {
        const NormalMetrics r = normal_metrics(rotate_y(gt, deg), gt);
        CHECK(r.acc_11_25 <= p1);
        CHECK(r.acc_22_5 <= p2);
        CHECK(r.acc_30 <= p3);
        CHECK(r.acc_11_25 <= r.acc_22_5);
        CHECK(r.acc_22_5 <= r.acc_30);
        p1 = r.acc_11_25, p2 = r.acc_22_5, p3 = r.acc_30;
    }
}

TEST_CASE("normal metrics renormalize and exclude zero vectors") {
    const ModalityTensor gt = xz_normals(5);
    ModalityTensor pred = rotate_y(gt, 10.0);
    for (std::size_t i = 0; i < 6; ++i) pred.data[i] *= 2.0f;
    pred.data[12] = pred.data[13] = pred.data[14] = 0.0f;
    const NormalMetrics r = normal_metrics(pred, gt);
    CHECK(r.renormalized);
    CHECK(r.excluded == 1);
    CHECK(r.mean_deg == doctest::Approx(10.0).epsilon(1e-5));
    CHECK(r.median_deg == doctest::Approx(10.0).epsilon(1e-5));
}

TEST_CASE("hungarian matches brute force on small matrices") {
    ctrlvdiff::Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        const int rows = 1 + trial % 4, cols = rows + trial % 2;
        std::vector<std::vector<double>> cost(rows, std::vector<double>(cols));
        for (auto& row : cost)
            for (double& v : row) v = std::round(rng.uniform() * 10.0);
        std::vector<int> perm(cols);
        std::iota(perm.begin(), perm.end(), 0);
        double best = 1e300;
        do {
            double s = 0;
            for (int r = 0; r < rows; ++r) s += cost[r][perm[r]];
            best = std::min(best, s);
        } while (std::next_permutation(perm.begin(), perm.end()));
        const std::vector<int> m = hungarian(cost);
        REQUIRE(static_cast<int>(m.size()) == rows);
        CHECK(std::set<int>(m.begin(), m.end()).size() == static_cast<std::size_t>(rows));
        double s = 0;
        for (int r = 0; r < rows; ++r) s += cost[r][m[r]];
        CHECK(s == best);
    }
}

TEST_CASE("segmentation IoU on exact renderings and permuted palettes") {
    ModalityTensor ids(Modality::segmentation, Space::native, Shape{1, 6, 6, 1});
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) ids.at(0, y, x, 0) = static_cast<float>(x < 3 ? 0 : (y < 3 ? 4 : 9));
    const SegMetrics exact = seg_iou(paint(ids, {{0, 0}, {4, 4}, {9, 9}}), ids, 3);
    CHECK(exact.miou == 1.0);
    const SegMetrics permuted = seg_iou(paint(ids, {{0, 9}, {4, 0}, {9, 4}}), ids, 3);
    CHECK(permuted.miou == exact.miou);
    const SegMetrics other = seg_iou(paint(ids, {{0, 200}, {4, 31}, {9, 77}}), ids, 5);
    CHECK(other.miou == 1.0);
    CHECK_THROWS_AS(seg_iou(paint(ids, {{0, 0}, {4, 4}, {9, 9}}), ids, 2), ValidationError);
}

TEST_CASE("half of one instance painted with another's color") {
    // Instance 1 and 2 each cover 8 pixels; 4 pixels of instance 1 carry
    // instance 2's color. Set arithmetic: cluster A = 4 pixels, all inside
    // instance 1, so IoU = 4 / 8. Cluster B = 12 pixels holding all 8 of
    // instance 2, so IoU = 8 / 12.
    ModalityTensor ids(Modality::segmentation, Space::native, Shape{1, 4, 4, 1});
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) ids.at(0, y, x, 0) = static_cast<float>(y < 2 ? 1 : 2);
    ModalityTensor painted = ids;
    for (int x = 0; x < 4; ++x) painted.at(0, 0, x, 0) = 2.0f;
    const SegMetrics r = seg_iou(paint(painted, {{1, 1}, {2, 2}}), ids, 2);
    CHECK(r.per_instance.at(1) == doctest::Approx(0.5));
    CHECK(r.per_instance.at(2) == doctest::Approx(2.0 / 3.0));
    CHECK(r.miou == doctest::Approx((0.5 + 2.0 / 3.0) / 2.0));
}

TEST_CASE("PSNR closed forms and symmetry") {
    const ModalityTensor gt = rgb_clip(2, 8, 8, 1, 0.9f);
    CHECK(psnr(gt, gt) == kPsnrCap);
    ModalityTensor off = gt;
    for (float& v : off.data) v += 0.1f;
    CHECK(psnr(off, gt) == doctest::Approx(20.0).epsilon(1e-5));
    const ModalityTensor other = rgb_clip(2, 8, 8, 2);
    CHECK(psnr(other, gt) == psnr(gt, other));
    CHECK_THROWS_AS(psnr(gt, rgb_clip(1, 8, 8, 1)), ValidationError);
}

TEST_CASE("SSIM closed forms, symmetry and anti-correlation") {
    const ModalityTensor gt = rgb_clip(2, 12, 12, 4);
    CHECK(ssim(gt, gt) == doctest::Approx(1.0).epsilon(1e-12));
    const ModalityTensor other = rgb_clip(2, 12, 12, 5);
    CHECK(ssim(gt, other) == doctest::Approx(ssim(other, gt)).epsilon(1e-12));

    // Constant images: every local variance is zero, leaving the luminance term.
    ModalityTensor a(Modality::rgb, Space::native, Shape{1, 9, 9, 3}, 0.3f), b = a;
    std::fill(b.data.begin(), b.data.end(), 0.6f);
    const double C1 = 1e-4, ma = 0.3f, mb = 0.6f;
    CHECK(ssim(a, b) == doctest::Approx((2 * ma * mb + C1) / (ma * ma + mb * mb + C1)).epsilon(1e-9));

    ModalityTensor bin(Modality::rgb, Space::native, Shape{1, 10, 10, 3});
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x)
            for (int c = 0; c < 3; ++c) bin.at(0, y, x, c) = static_cast<float>((x / 2 + y / 3) % 2);
    ModalityTensor inv = bin;
    for (float& v : inv.data) v = 1.0f - v;
    CHECK(ssim(inv, bin) <= 0.0);
    const ImageQuality q = image_quality(gt, gt);
    CHECK(q.psnr == kPsnrCap);
    CHECK(q.ssim == doctest::Approx(1.0));
}

TEST_CASE("temporal consistency on static, flickering and fading clips") {
    ModalityTensor clip(Modality::rgb, Space::native, Shape{4, 3, 3, 3}, 0.4f);
    CHECK(temporal_consistency(clip) == 1.0);
    for (int t = 0; t < 4; ++t)
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x)
                for (int c = 0; c < 3; ++c) clip.at(t, y, x, c) = static_cast<float>(t % 2);
    CHECK(temporal_consistency(clip) == 0.0);
    for (int t = 0; t < 4; ++t)
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x)
                for (int c = 0; c < 3; ++c) clip.at(t, y, x, c) = 0.8f - 0.1f * t;
    CHECK(temporal_consistency(clip) == doctest::Approx(0.9).epsilon(1e-6));
    CHECK_THROWS_AS(temporal_consistency(ModalityTensor(Modality::rgb, Space::native, Shape{1, 2, 2, 3})),
                    ValidationError);
}

TEST_CASE("evaluate_clip on a clip against itself") {
    const ClipRecord clip = testing::make_record("c", 12, 3, 16);
    const auto rows = evaluate_clip(clip, clip, metric_groups());
    std::map<std::string, double> v(rows.begin(), rows.end());
    CHECK(v.at("depth_absrel") == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(v.at("depth_delta1") == 1.0);
    CHECK(v.at("normal_mean_deg") < 0.05);
    CHECK(v.at("normal_acc_11.25") == 1.0);
    CHECK(v.at("seg_miou") == 1.0);
    CHECK(v.at("rgb_psnr") == kPsnrCap);
    CHECK(v.at("albedo_ssim") == doctest::Approx(1.0));
    CHECK(v.at("temporal_consistency") >= 0.0);
    CHECK(v.at("temporal_consistency") <= 1.0);
    for (const auto& [name, value] : rows) CHECK(std::isfinite(value));
    CHECK_THROWS_AS(evaluate_clip(clip, clip, {"lpips"}), ValidationError);
}
