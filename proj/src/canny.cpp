#include <cmath>
#include <deque>
#include <numbers>

#include "ctrlvdiff/scenegen.hpp"

namespace ctrlvdiff {

namespace {

class Plane {
public:
    Plane(int h, int w) : h_(h), w_(w), v_(static_cast<std::size_t>(h) * w, 0.0) {}
    int height() const { return h_; }
    int width() const { return w_; }
    double& operator()(int y, int x) { return v_[static_cast<std::size_t>(y) * w_ + x]; }
    /// Replicated border.
    double clamped(int y, int x) const {
        y = std::clamp(y, 0, h_ - 1);
        x = std::clamp(x, 0, w_ - 1);
        return v_[static_cast<std::size_t>(y) * w_ + x];
    }

private:
    int h_, w_;
    std::vector<double> v_;
};

std::array<double, 25> gaussian5() {
    std::array<double, 25> k{};
    double sum = 0;
    for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
            const double v = std::exp(-(dx * dx + dy * dy) / 2.0);
            k[static_cast<std::size_t>((dy + 2) * 5 + dx + 2)] = v;
            sum += v;
        }
    for (double& v : k) v /= sum;
    return k;
}

}  // namespace

ModalityTensor canny_edges(const ModalityTensor& rgb, double lo, double hi) {
    require(lo > 0 && lo < hi, "canny: thresholds must satisfy 0 < lo < hi");
    require(rgb.shape.channels == 3, "canny: expects a 3-channel rgb tensor");
    for (float v : rgb.data) require(std::isfinite(v), "canny: non-finite input");
    const int T = rgb.shape.frames, H = rgb.shape.height, W = rgb.shape.width;
    ModalityTensor out(Modality::canny, rgb.space == Space::color ? Space::color : Space::native,
                       Shape{T, H, W, 3});
    static const std::array<double, 25> kGauss = gaussian5();

    for (int t = 0; t < T; ++t) {
        Plane luma(H, W), blur(H, W), mag(H, W), gx(H, W), gy(H, W);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                luma(y, x) = 0.299 * rgb.at(t, y, x, 0) + 0.587 * rgb.at(t, y, x, 1) + 0.114 * rgb.at(t, y, x, 2);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double s = 0;
                for (int dy = -2; dy <= 2; ++dy)
                    for (int dx = -2; dx <= 2; ++dx)
                        s += kGauss[static_cast<std::size_t>((dy + 2) * 5 + dx + 2)] * luma.clamped(y + dy, x + dx);
                blur(y, x) = s;
            }
        // Sobel scaled by 1/8 so a unit ramp of slope 1 per pixel reads as 1.
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double sx = (blur.clamped(y - 1, x + 1) + 2 * blur.clamped(y, x + 1) + blur.clamped(y + 1, x + 1)) -
                                  (blur.clamped(y - 1, x - 1) + 2 * blur.clamped(y, x - 1) + blur.clamped(y + 1, x - 1));
                const double sy = (blur.clamped(y + 1, x - 1) + 2 * blur.clamped(y + 1, x) + blur.clamped(y + 1, x + 1)) -
                                  (blur.clamped(y - 1, x - 1) + 2 * blur.clamped(y - 1, x) + blur.clamped(y - 1, x + 1));
                gx(y, x) = sx / 8.0;
                gy(y, x) = sy / 8.0;
                mag(y, x) = std::hypot(gx(y, x), gy(y, x));
            }

        // Non-maximum suppression along the quantized gradient direction.
        // Ties keep the pixel on the positive side only, so a symmetric step
        // yields a single-pixel line.
        Plane thin(H, W);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double m = mag(y, x);
                if (m <= 0) continue;
                double angle = std::atan2(gy(y, x), gx(y, x)) * 180.0 / std::numbers::pi;
                if (angle < 0) angle += 180.0;
                int ox = 1, oy = 0;
                if (angle >= 22.5 && angle < 67.5) {
                    ox = 1, oy = 1;
                } else if (angle >= 67.5 && angle < 112.5) {
                    ox = 0, oy = 1;
                } else if (angle >= 112.5 && angle < 157.5) {
                    ox = -1, oy = 1;
                }
                const double before = mag.clamped(y - oy, x - ox);
                const double after = mag.clamped(y + oy, x + ox);
                if (m > before && m >= after) thin(y, x) = m;
            }

        // Hysteresis: strong seeds grow through 8-connected weak pixels.
        std::vector<std::uint8_t> edge(static_cast<std::size_t>(H) * W, 0);
        std::deque<std::pair<int, int>> queue;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                if (thin(y, x) >= hi) {
                    edge[static_cast<std::size_t>(y) * W + x] = 1;
                    queue.emplace_back(y, x);
                }
        while (!queue.empty()) {
            const auto [y, x] = queue.front();
            queue.pop_front();
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                    auto& e = edge[static_cast<std::size_t>(ny) * W + nx];
                    if (!e && thin(ny, nx) >= lo) {
                        e = 1;
                        queue.emplace_back(ny, nx);
                    }
                }
        }
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const float v = edge[static_cast<std::size_t>(y) * W + x] ? 1.0f : 0.0f;
                for (int c = 0; c < 3; ++c) out.at(t, y, x, c) = v;
            }
    }
    return out;
}

}  // namespace ctrlvdiff
