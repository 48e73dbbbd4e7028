#include "ctrlvdiff/codec.hpp"

#include <Eigen/Dense>

#include "ctrlvdiff/rng.hpp"

namespace ctrlvdiff {

namespace {
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}

Codec::Codec(int patch, std::uint64_t seed) : Codec(patch, seed, false) {}

Codec Codec::identity(int patch) { return Codec(patch, 0, true); }

Codec::Codec(int patch, std::uint64_t seed, bool identity) : patch_(patch), seed_(seed), identity_(identity) {
    require(patch >= 1, "codec: patch must be >= 1");
    const int c = channels();
    MatRM q = MatRM::Identity(c, c);
    if (!identity_) {
        Rng rng(mix_seed(seed, 0xC0DEC));
        MatRM g(c, c);
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < c; ++j) g(i, j) = rng.normal();
        Eigen::HouseholderQR<MatRM> qr(g);
        q = qr.householderQ() * MatRM::Identity(c, c);
    }
    q_.assign(q.data(), q.data() + static_cast<std::ptrdiff_t>(c) * c);
}

LatentGrid Codec::grid_for(const Shape& s) const {
    require(s.channels == 3, "codec: expects a 3-channel color-space tensor");
    require(s.height % patch_ == 0 && s.width % patch_ == 0,
            "codec: H and W must be divisible by the patch size " + std::to_string(patch_));
    return {s.frames, s.height / patch_, s.width / patch_, channels()};
}

LatentTensor Codec::encode_clip(const ModalityTensor& color) const {
    require(color.space == Space::color, "codec: encode expects a color-space tensor");
    LatentTensor z;
    z.modality = color.modality;
    z.patch = patch_;
    z.grid = grid_for(color.shape);
    const int c = channels(), p = patch_;
    z.data.assign(z.grid.slice_numel(), 0.0);
    Eigen::Map<const MatRM> q(q_.data(), c, c);
    Eigen::VectorXd v(c);
    std::size_t tok = 0;
    for (int t = 0; t < z.grid.frames; ++t)
        for (int r = 0; r < z.grid.rows; ++r)
            for (int col = 0; col < z.grid.cols; ++col, ++tok) {
                for (int dy = 0; dy < p; ++dy)
                    for (int dx = 0; dx < p; ++dx)
                        for (int ch = 0; ch < 3; ++ch)
                            v((dy * p + dx) * 3 + ch) = color.at(t, r * p + dy, col * p + dx, ch);
                Eigen::Map<Eigen::VectorXd> out(z.data.data() + tok * static_cast<std::size_t>(c), c);
                out.noalias() = q * v;
            }
    return z;
}

ModalityTensor Codec::decode_clip(const LatentTensor& z) const {
    require(z.grid.channels == channels(), "codec: latent has " + std::to_string(z.grid.channels) +
                                               " channels, expected 3p^2 = " + std::to_string(channels()));
    require(z.patch == patch_, "codec: latent patch size differs from codec");
    require(z.data.size() == z.grid.slice_numel(), "codec: latent data size does not match grid");
    const int c = channels(), p = patch_;
    ModalityTensor x(z.modality, Space::color, Shape{z.grid.frames, z.grid.rows * p, z.grid.cols * p, 3});
    Eigen::Map<const MatRM> q(q_.data(), c, c);
    Eigen::VectorXd v(c);
    std::size_t tok = 0;
    for (int t = 0; t < z.grid.frames; ++t)
        for (int r = 0; r < z.grid.rows; ++r)
            for (int col = 0; col < z.grid.cols; ++col, ++tok) {
                Eigen::Map<const Eigen::VectorXd> in(z.data.data() + tok * static_cast<std::size_t>(c), c);
                v.noalias() = q.transpose() * in;
                for (int dy = 0; dy < p; ++dy)
                    for (int dx = 0; dx < p; ++dx)
                        for (int ch = 0; ch < 3; ++ch)
                            x.at(t, r * p + dy, col * p + dx, ch) = static_cast<float>(v((dy * p + dx) * 3 + ch));
            }
    return x;
}

LatentTensor Codec::encode_centered(const ModalityTensor& color) const {
    ModalityTensor shifted = color;
    for (float& v : shifted.data) v = 2.0f * v - 1.0f;
    return encode_clip(shifted);
}

ModalityTensor Codec::decode_centered(const LatentTensor& z) const {
    ModalityTensor x = decode_clip(z);
    for (float& v : x.data) v = 0.5f * (v + 1.0f);
    return x;
}

}  // namespace ctrlvdiff
