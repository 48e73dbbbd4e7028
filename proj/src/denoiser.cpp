#include "ctrlvdiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include <Eigen/Dense>

#include "ctrlvdiff/datastore.hpp"
#include "ctrlvdiff/rng.hpp"

namespace ctrlvdiff {

namespace {

constexpr double kLnEps = 1e-5;
const double kGeluC = std::sqrt(2.0 / std::numbers::pi);

using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

double truncated_normal(Rng& rng, double sigma) {
    for (;;) {
        const double z = rng.normal();
        if (std::abs(z) <= 2.0) return z * sigma;
    }
}

struct LayerNormCache {
    MatRM xhat;
    Eigen::VectorXd inv_std;
};

MatRM layer_norm(const MatRM& x, const ConstMapRM& g, const ConstMapRM& b, LayerNormCache* cache) {
    const Eigen::Index n = x.rows(), d = x.cols();
    MatRM y(n, d);
    MatRM xhat(n, d);
    Eigen::VectorXd inv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mean = x.row(i).mean();
        const double var = (x.row(i).array() - mean).square().mean();
        inv(i) = 1.0 / std::sqrt(var + kLnEps);
        xhat.row(i) = (x.row(i).array() - mean) * inv(i);
        y.row(i) = xhat.row(i).cwiseProduct(g.row(0)) + b.row(0);
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv);
    }
    return y;
}

MatRM layer_norm_backward(const MatRM& dy, const LayerNormCache& c, const ConstMapRM& g, MapRM dg, MapRM db) {
    const Eigen::Index n = dy.rows(), d = dy.cols();
    MatRM dx(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        dg.row(0) += dy.row(i).cwiseProduct(c.xhat.row(i));
        db.row(0) += dy.row(i);
        const RowVec dxhat = dy.row(i).cwiseProduct(g.row(0));
        const double m1 = dxhat.mean();
        const double m2 = dxhat.cwiseProduct(c.xhat.row(i)).mean();
        dx.row(i) = (dxhat.array() - m1 - c.xhat.row(i).array() * m2) * c.inv_std(i);
    }
    return dx;
}

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + 0.044715 * u * u * u))); }

double gelu_grad(double u) {
    const double th = std::tanh(kGeluC * (u + 0.044715 * u * u * u));
    return 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * u * u);
}

double silu(double a) { return a / (1.0 + std::exp(-a)); }

double silu_grad(double a) {
    const double s = 1.0 / (1.0 + std::exp(-a));
    return s * (1.0 + a * (1.0 - s));
}

std::string blk(int l, const char* leaf) { return "blk" + std::to_string(l) + "." + leaf; }

Eigen::VectorXd timestep_features(int t, int dim) {
    Eigen::VectorXd e(dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
        e(i) = std::sin(t * freq);
        e(i + half) = std::cos(t * freq);
    }
    if (dim % 2) e(dim - 1) = 0.0;
    return e;
}

}  // namespace

// ---- config ---------------------------------------------------------------

void DenoiserConfig::validate() const {
    require(dim > 0 && layers >= 1 && heads >= 1, "denoiser config: dim, layers, heads must be positive");
    require(dim % heads == 0, "denoiser config: dim must be divisible by heads");
    require(patch >= 1 && max_frames >= 1 && grid_rows >= 1 && grid_cols >= 1,
            "denoiser config: patch and grid sizes must be positive");
    require(caption_buckets >= 1 && mlp_ratio >= 1, "denoiser config: caption_buckets and mlp_ratio must be positive");
}

nlohmann::json DenoiserConfig::to_json() const {
    return {{"dim", dim},
            {"layers", layers},
            {"heads", heads},
            {"patch", patch},
            {"max_frames", max_frames},
            {"grid_rows", grid_rows},
            {"grid_cols", grid_cols},
            {"caption_buckets", caption_buckets},
            {"mlp_ratio", mlp_ratio},
            {"seed", seed}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
    DenoiserConfig c;
    c.dim = j.at("dim").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.patch = j.at("patch").get<int>();
    c.max_frames = j.at("max_frames").get<int>();
    c.grid_rows = j.at("grid_rows").get<int>();
    c.grid_cols = j.at("grid_cols").get<int>();
    c.caption_buckets = j.at("caption_buckets").get<int>();
    c.mlp_ratio = j.at("mlp_ratio").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

// ---- parameter storage ----------------------------------------------------

std::size_t ParamStore::add(const std::string& name, int rows, int cols, bool decay) {
    require(!contains(name), "duplicate parameter " + name);
    Entry e{name, rows, cols, total_, decay};
    total_ += e.size();
    index_[name] = entries_.size();
    entries_.push_back(e);
    return e.offset;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter " + name);
    return entries_[it->second];
}

MapRM ParamStore::view(std::vector<double>& buf, const std::string& name) const {
    const Entry& e = entry(name);
    return MapRM(buf.data() + e.offset, e.rows, e.cols);
}

ConstMapRM ParamStore::view(const std::vector<double>& buf, const std::string& name) const {
    const Entry& e = entry(name);
    return ConstMapRM(buf.data() + e.offset, e.rows, e.cols);
}

std::string head_prefix(Modality m) { return "head." + std::string(name_of(m)) + "."; }

DenoiserParams init_params(const DenoiserConfig& cfg) {
    cfg.validate();
    DenoiserParams p;
    p.config = cfg;
    ParamStore& L = p.layout;
    const int d = cfg.dim, c = cfg.latent_channels(), hid = cfg.dim * cfg.mlp_ratio;

    L.add("in.w", d, cfg.input_features(), true);
    L.add("in.b", 1, d, false);
    L.add("mod_emb", kNumModalities, c, false);
    L.add("role_emb", kNumRoles, c, false);
    L.add("pos.space", cfg.grid_rows * cfg.grid_cols, d, false);
    L.add("pos.time", cfg.max_frames, d, false);
    L.add("temb.w1", d, d, true);
    L.add("temb.b1", 1, d, false);
    L.add("temb.w2", d, d, true);
    L.add("temb.b2", 1, d, false);
    L.add("cap.table", cfg.caption_buckets, d, false);
    for (int l = 0; l < cfg.layers; ++l) {
        L.add(blk(l, "ln1.g"), 1, d, false);
        L.add(blk(l, "ln1.b"), 1, d, false);
        for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) L.add(blk(l, w), d, d, true);
        for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) L.add(blk(l, b), 1, d, false);
        L.add(blk(l, "ln2.g"), 1, d, false);
        L.add(blk(l, "ln2.b"), 1, d, false);
        L.add(blk(l, "mlp.w1"), hid, d, true);
        L.add(blk(l, "mlp.b1"), 1, hid, false);
        L.add(blk(l, "mlp.w2"), d, hid, true);
        L.add(blk(l, "mlp.b2"), 1, d, false);
    }
    for (Modality m : kAllModalities) {
        const std::string h = head_prefix(m);
        L.add(h + "ln.g", 1, d, false);
        L.add(h + "ln.b", 1, d, false);
        L.add(h + "w", c, d, true);
        L.add(h + "b", 1, c, false);
    }

    p.values.assign(L.size(), 0.0);
    Rng rng(mix_seed(cfg.seed, 0xDE401));
    for (const auto& e : L.entries()) {
        if (e.name.rfind("head.", 0) == 0 && e.name.rfind(head_prefix(Modality::rgb), 0) != 0) continue;
        MapRM v = L.view(p.values, e.name);
        const bool is_gain = e.name.size() > 2 && e.name.compare(e.name.size() - 2, 2, ".g") == 0;
        const bool is_bias = e.rows == 1 && !is_gain;
        if (is_gain) {
            v.setOnes();
        } else if (is_bias) {
            v.setZero();
        } else {
            for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = truncated_normal(rng, 0.02);
        }
    }
    for (Modality m : kAllModalities) {
        if (m == Modality::rgb) continue;
        for (const char* leaf : {"ln.g", "ln.b", "w", "b"})
            L.view(p.values, head_prefix(m) + leaf) = L.view(p.values, head_prefix(Modality::rgb) + leaf);
    }
    return p;
}

int caption_bucket(const std::string& token, int buckets) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : token) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    return static_cast<int>(h % static_cast<std::uint64_t>(buckets));
}

// ---- forward / backward ---------------------------------------------------

struct BlockCache {
    MatRM h_in;
    LayerNormCache ln1;
    MatRM xn1, q, k, v;
    std::vector<MatRM> probs;  // per head [N, N]
    MatRM attn_out;            // concatenated head outputs before wo
    MatRM h_mid;
    LayerNormCache ln2;
    MatRM xn2, pre_act, act;
};

struct ForwardCache {
    int tokens = 0;
    MatRM x_in;
    Eigen::VectorXd t_feat, t_pre, t_act;
    std::vector<int> caption_rows;
    std::vector<BlockCache> blocks;
    MatRM h_final;
    std::array<LayerNormCache, kNumModalities> head_ln;
    std::array<MatRM, kNumModalities> head_z;
    std::array<Role, kNumModalities> roles{};
};

DenoiserTape::DenoiserTape() : cache_(std::make_unique<ForwardCache>()) {}
DenoiserTape::~DenoiserTape() = default;
DenoiserTape::DenoiserTape(DenoiserTape&&) noexcept = default;
DenoiserTape& DenoiserTape::operator=(DenoiserTape&&) noexcept = default;

namespace {

void validate_input(const DenoiserConfig& cfg, const ModelInput& in) {
    const int c = cfg.latent_channels();
    require(in.grid.channels == c, "denoiser: input has " + std::to_string(in.grid.channels) +
                                       " channels per modality, registry layout expects " + std::to_string(c));
    require(in.grid.rows == cfg.grid_rows && in.grid.cols == cfg.grid_cols,
            "denoiser: latent grid does not match the trained resolution");
    require(in.grid.frames >= 1 && in.grid.frames <= cfg.max_frames, "denoiser: frame count exceeds max_frames");
    require(in.stack.size() == static_cast<std::size_t>(in.grid.tokens()) * kNumModalities * c,
            "denoiser: stacked input size does not match the registry channel layout");
    require(in.t >= 0, "denoiser: negative timestep");
}

SliceSet run_forward(const DenoiserParams& P, const ModelInput& in, ForwardCache& fc) {
    const DenoiserConfig& cfg = P.config;
    validate_input(cfg, in);
    const int N = in.grid.tokens(), c = cfg.latent_channels(), d = cfg.dim;
    const int per_frame = cfg.grid_rows * cfg.grid_cols;
    fc.tokens = N;
    fc.roles = in.roles;

    // Input features: each modality slice shifted by its modality and role
    // embeddings, followed by the absent flags.
    const ConstMapRM mod_emb = P["mod_emb"], role_emb = P["role_emb"];
    fc.x_in.resize(N, cfg.input_features());
    for (int n = 0; n < N; ++n) {
        for (int m = 0; m < kNumModalities; ++m) {
            const int r = static_cast<int>(in.roles[static_cast<std::size_t>(m)]);
            for (int j = 0; j < c; ++j)
                fc.x_in(n, m * c + j) = in.stack[static_cast<std::size_t>(n) * kNumModalities * c +
                                                 static_cast<std::size_t>(m * c + j)] +
                                        mod_emb(m, j) + role_emb(r, j);
            fc.x_in(n, kNumModalities * c + m) = in.absent[static_cast<std::size_t>(m)];
        }
    }
    MatRM h = fc.x_in * P["in.w"].transpose();
    h.rowwise() += P["in.b"].row(0);

    const ConstMapRM pos_s = P["pos.space"], pos_t = P["pos.time"];
    for (int n = 0; n < N; ++n) h.row(n) += pos_s.row(n % per_frame) + pos_t.row(n / per_frame);

    fc.t_feat = timestep_features(in.t, d);
    fc.t_pre = P["temb.w1"] * fc.t_feat + P["temb.b1"].row(0).transpose();
    fc.t_act = fc.t_pre.unaryExpr([](double a) { return silu(a); });
    const Eigen::VectorXd temb = P["temb.w2"] * fc.t_act + P["temb.b2"].row(0).transpose();
    h.rowwise() += temb.transpose();

    fc.caption_rows.clear();
    for (const auto& tok : in.caption_tokens) fc.caption_rows.push_back(caption_bucket(tok, cfg.caption_buckets));
    // Fixed summation order makes the pooled embedding independent of token order.
    std::sort(fc.caption_rows.begin(), fc.caption_rows.end());
    if (!fc.caption_rows.empty()) {
        RowVec cap = RowVec::Zero(d);
        const ConstMapRM table = P["cap.table"];
        for (int r : fc.caption_rows) cap += table.row(r);
        cap /= static_cast<double>(fc.caption_rows.size());
        h.rowwise() += cap;
    }

    const int heads = cfg.heads, dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    fc.blocks.assign(static_cast<std::size_t>(cfg.layers), {});
    for (int l = 0; l < cfg.layers; ++l) {
        BlockCache& bc = fc.blocks[static_cast<std::size_t>(l)];
        bc.h_in = h;
        bc.xn1 = layer_norm(h, P[blk(l, "ln1.g")], P[blk(l, "ln1.b")], &bc.ln1);
        bc.q = bc.xn1 * P[blk(l, "attn.wq")].transpose();
        bc.q.rowwise() += P[blk(l, "attn.bq")].row(0);
        bc.k = bc.xn1 * P[blk(l, "attn.wk")].transpose();
        bc.k.rowwise() += P[blk(l, "attn.bk")].row(0);
        bc.v = bc.xn1 * P[blk(l, "attn.wv")].transpose();
        bc.v.rowwise() += P[blk(l, "attn.bv")].row(0);
        bc.attn_out.resize(N, d);
        bc.probs.assign(static_cast<std::size_t>(heads), MatRM());
        for (int hd = 0; hd < heads; ++hd) {
            MatRM s = (bc.q.middleCols(hd * dh, dh) * bc.k.middleCols(hd * dh, dh).transpose()) * scale;
            for (int i = 0; i < N; ++i) {
                const double mx = s.row(i).maxCoeff();
                s.row(i) = (s.row(i).array() - mx).exp();
                s.row(i) /= s.row(i).sum();
            }
            bc.attn_out.middleCols(hd * dh, dh) = s * bc.v.middleCols(hd * dh, dh);
            bc.probs[static_cast<std::size_t>(hd)] = std::move(s);
        }
        MatRM a = bc.attn_out * P[blk(l, "attn.wo")].transpose();
        a.rowwise() += P[blk(l, "attn.bo")].row(0);
        bc.h_mid = h + a;

        bc.xn2 = layer_norm(bc.h_mid, P[blk(l, "ln2.g")], P[blk(l, "ln2.b")], &bc.ln2);
        bc.pre_act = bc.xn2 * P[blk(l, "mlp.w1")].transpose();
        bc.pre_act.rowwise() += P[blk(l, "mlp.b1")].row(0);
        bc.act = bc.pre_act.unaryExpr([](double u) { return gelu(u); });
        MatRM mlp = bc.act * P[blk(l, "mlp.w2")].transpose();
        mlp.rowwise() += P[blk(l, "mlp.b2")].row(0);
        h = bc.h_mid + mlp;
    }
    fc.h_final = h;

    SliceSet out;
    for (Modality m : kAllModalities) {
        const auto i = static_cast<std::size_t>(index_of(m));
        const std::string hp = head_prefix(m);
        fc.head_z[i] = layer_norm(h, P[hp + "ln.g"], P[hp + "ln.b"], &fc.head_ln[i]);
        MatRM y = fc.head_z[i] * P[hp + "w"].transpose();
        y.rowwise() += P[hp + "b"].row(0);
        out[i].assign(y.data(), y.data() + y.size());
    }
    return out;
}

}  // namespace

SliceSet predict_eps(const DenoiserParams& params, const ModelInput& input) {
    ForwardCache fc;
    return run_forward(params, input, fc);
}

SliceSet DenoiserTape::forward(const DenoiserParams& params, const ModelInput& input) {
    return run_forward(params, input, *cache_);
}

void DenoiserTape::backward(const DenoiserParams& P, const SliceSet& d_out, std::vector<double>& grads) const {
    const ForwardCache& fc = *cache_;
    require(grads.size() == P.values.size(), "backward: gradient buffer has the wrong size");
    require(!fc.blocks.empty(), "backward: call forward first");
    const DenoiserConfig& cfg = P.config;
    const ParamStore& L = P.layout;
    const int N = fc.tokens, c = cfg.latent_channels(), d = cfg.dim;
    const int per_frame = cfg.grid_rows * cfg.grid_cols;
    auto G = [&](const std::string& name) { return L.view(grads, name); };

    MatRM dh = MatRM::Zero(N, d);
    for (Modality m : kAllModalities) {
        const auto i = static_cast<std::size_t>(index_of(m));
        if (d_out[i].empty()) continue;
        require(d_out[i].size() == static_cast<std::size_t>(N) * c, "backward: upstream gradient has the wrong size");
        const std::string hp = head_prefix(m);
        const ConstMapRM dy(d_out[i].data(), N, c);
        G(hp + "w").noalias() += dy.transpose() * fc.head_z[i];
        G(hp + "b").row(0) += dy.colwise().sum();
        const MatRM dz = dy * P[hp + "w"];
        dh += layer_norm_backward(dz, fc.head_ln[i], P[hp + "ln.g"], G(hp + "ln.g"), G(hp + "ln.b"));
    }

    const int heads = cfg.heads, dh_size = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh_size));
    for (int l = cfg.layers - 1; l >= 0; --l) {
        const BlockCache& bc = fc.blocks[static_cast<std::size_t>(l)];
        // MLP branch.
        G(blk(l, "mlp.w2")).noalias() += dh.transpose() * bc.act;
        G(blk(l, "mlp.b2")).row(0) += dh.colwise().sum();
        MatRM d_act = dh * P[blk(l, "mlp.w2")];
        MatRM d_pre = d_act.cwiseProduct(bc.pre_act.unaryExpr([](double u) { return gelu_grad(u); }));
        G(blk(l, "mlp.w1")).noalias() += d_pre.transpose() * bc.xn2;
        G(blk(l, "mlp.b1")).row(0) += d_pre.colwise().sum();
        const MatRM d_xn2 = d_pre * P[blk(l, "mlp.w1")];
        MatRM d_mid = dh + layer_norm_backward(d_xn2, bc.ln2, P[blk(l, "ln2.g")], G(blk(l, "ln2.g")), G(blk(l, "ln2.b")));

        // Attention branch.
        G(blk(l, "attn.wo")).noalias() += d_mid.transpose() * bc.attn_out;
        G(blk(l, "attn.bo")).row(0) += d_mid.colwise().sum();
        const MatRM d_attn = d_mid * P[blk(l, "attn.wo")];
        MatRM dq(N, d), dk(N, d), dv(N, d);
        for (int hd = 0; hd < heads; ++hd) {
            const MatRM& prob = bc.probs[static_cast<std::size_t>(hd)];
            const auto d_o = d_attn.middleCols(hd * dh_size, dh_size);
            const MatRM dp = d_o * bc.v.middleCols(hd * dh_size, dh_size).transpose();
            dv.middleCols(hd * dh_size, dh_size) = prob.transpose() * d_o;
            MatRM ds = prob.cwiseProduct(dp);
            const Eigen::VectorXd rows = ds.rowwise().sum();
            ds -= prob.cwiseProduct(rows.replicate(1, N));
            ds *= scale;
            dq.middleCols(hd * dh_size, dh_size) = ds * bc.k.middleCols(hd * dh_size, dh_size);
            dk.middleCols(hd * dh_size, dh_size) = ds.transpose() * bc.q.middleCols(hd * dh_size, dh_size);
        }
        G(blk(l, "attn.wq")).noalias() += dq.transpose() * bc.xn1;
        G(blk(l, "attn.bq")).row(0) += dq.colwise().sum();
        G(blk(l, "attn.wk")).noalias() += dk.transpose() * bc.xn1;
        G(blk(l, "attn.bk")).row(0) += dk.colwise().sum();
        G(blk(l, "attn.wv")).noalias() += dv.transpose() * bc.xn1;
        G(blk(l, "attn.bv")).row(0) += dv.colwise().sum();
        const MatRM d_xn1 = dq * P[blk(l, "attn.wq")] + dk * P[blk(l, "attn.wk")] + dv * P[blk(l, "attn.wv")];
        dh = d_mid + layer_norm_backward(d_xn1, bc.ln1, P[blk(l, "ln1.g")], G(blk(l, "ln1.g")), G(blk(l, "ln1.b")));
    }

    // Token embedding and additive conditioning.
    const RowVec d_sum = dh.colwise().sum();
    G("in.b").row(0) += d_sum;
    G("in.w").noalias() += dh.transpose() * fc.x_in;
    const MatRM dx = dh * P["in.w"];
    MapRM g_mod = G("mod_emb"), g_role = G("role_emb");
    for (int m = 0; m < kNumModalities; ++m) {
        const RowVec col = dx.middleCols(m * c, c).colwise().sum();
        g_mod.row(m) += col;
        g_role.row(static_cast<int>(fc.roles[static_cast<std::size_t>(m)])) += col;
    }
    MapRM g_ps = G("pos.space"), g_pt = G("pos.time");
    for (int n = 0; n < N; ++n) {
        g_ps.row(n % per_frame) += dh.row(n);
        g_pt.row(n / per_frame) += dh.row(n);
    }
    const Eigen::VectorXd d_temb = d_sum.transpose();
    G("temb.b2").row(0) += d_temb.transpose();
    G("temb.w2").noalias() += d_temb * fc.t_act.transpose();
    const Eigen::VectorXd d_act = P["temb.w2"].transpose() * d_temb;
    Eigen::VectorXd d_pre(d);
    for (int i = 0; i < d; ++i) d_pre(i) = d_act(i) * silu_grad(fc.t_pre(i));
    G("temb.b1").row(0) += d_pre.transpose();
    G("temb.w1").noalias() += d_pre * fc.t_feat.transpose();
    if (!fc.caption_rows.empty()) {
        MapRM g_cap = G("cap.table");
        const RowVec share = d_sum / static_cast<double>(fc.caption_rows.size());
        for (int r : fc.caption_rows) g_cap.row(r) += share;
    }
}

// ---- checkpoints ----------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'C', 'V', 'D', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4) throw FormatError("checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void write_named(std::ostream& os, const std::string& name, int rows, int cols, const double* data) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    TensorHeader h{Shape{1, rows, cols, 1}, kParameterTensorId, TensorDtype::f64};
    write_tensor(os, h, std::span<const double>(data, static_cast<std::size_t>(rows) * cols));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["format_version"] = kCheckpointVersion;
    header["config"] = ckpt.params.config.to_json();
    header["codec_seed"] = ckpt.codec_seed;
    header["registry_hash"] = registry_hash();
    header["state"] = ckpt.state;
    const std::string text = header.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw RuntimeFailure("cannot create " + tmp.string());
        os.write(kCkptMagic, 8);
        put_u32(os, static_cast<std::uint32_t>(text.size()));
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        const auto& entries = ckpt.params.layout.entries();
        put_u32(os, static_cast<std::uint32_t>(entries.size() + ckpt.extra.size()));
        for (const auto& e : entries) write_named(os, e.name, e.rows, e.cols, ckpt.params.values.data() + e.offset);
        for (const auto& [name, v] : ckpt.extra) write_named(os, name, 1, static_cast<int>(v.size()), v.data());
        os.flush();
        if (!os) {
            os.close();
            std::filesystem::remove(tmp);
            throw RuntimeFailure("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open checkpoint " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (is.gcount() != 8 || std::memcmp(magic, kCkptMagic, 8) != 0) throw FormatError("checkpoint: bad magic");
    const std::uint32_t len = get_u32(is);
    std::string text(len, '\0');
    is.read(text.data(), len);
    if (static_cast<std::uint32_t>(is.gcount()) != len) throw FormatError("checkpoint header truncated");

    Checkpoint ckpt;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
        if (header.at("format_version").get<int>() != kCheckpointVersion)
            throw FormatError("checkpoint: unsupported format version");
        if (header.at("registry_hash").get<std::uint64_t>() != registry_hash())
            throw FormatError("checkpoint: modality registry order differs from this build");
        ckpt.params = init_params(DenoiserConfig::from_json(header.at("config")));
        ckpt.codec_seed = header.at("codec_seed").get<std::uint64_t>();
        ckpt.state = header.value("state", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint header: ") + e.what());
    }

    const std::uint32_t count = get_u32(is);
    std::size_t loaded = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const TensorHeader h = read_tensor_header(is);
        if (h.modality_id != kParameterTensorId) throw FormatError("checkpoint: tensor " + name + " is not a parameter");
        std::vector<double> v = read_f64_payload(is, h);
        if (ckpt.params.layout.contains(name)) {
            const auto& e = ckpt.params.layout.entry(name);
            if (e.rows != h.shape.height || e.cols != h.shape.width)
                throw FormatError("checkpoint: tensor " + name + " has the wrong shape");
            std::copy(v.begin(), v.end(), ckpt.params.values.begin() + static_cast<std::ptrdiff_t>(e.offset));
            ++loaded;
        } else {
            ckpt.extra.emplace(name, std::move(v));
        }
    }
    if (loaded != ckpt.params.layout.entries().size()) throw FormatError("checkpoint: missing parameter tensors");
    return ckpt;
}

}  // namespace ctrlvdiff
