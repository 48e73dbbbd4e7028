#include "ctrlvdiff/diffusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>

#include "ctrlvdiff/metrics.hpp"

namespace ctrlvdiff {

// ---- schedules ------------------------------------------------------------

std::string_view name_of(ScheduleKind kind) { return kind == ScheduleKind::cosine ? "cosine" : "linear"; }

ScheduleKind parse_schedule_kind(std::string_view name) {
    if (name == "linear") return ScheduleKind::linear_beta;
    if (name == "cosine") return ScheduleKind::cosine;
    throw ValidationError("unknown schedule kind '" + std::string(name) + "' (expected linear or cosine)");
}

NoiseSchedule make_schedule(ScheduleKind kind, int num_steps) {
    require(num_steps >= 2, "make_schedule: num_steps must be at least 2");
    NoiseSchedule s;
    s.kind = kind;
    s.alpha_bar.resize(static_cast<std::size_t>(num_steps));
    double ab = 1.0;
    if (kind == ScheduleKind::linear_beta) {
        for (int i = 0; i < num_steps; ++i) {
            const double beta = kBetaStart + (kBetaEnd - kBetaStart) * i / (num_steps - 1);
            ab *= 1.0 - beta;
            s.alpha_bar[static_cast<std::size_t>(i)] = ab;
        }
    } else {
        constexpr double off = 0.008;
        auto f = [&](double u) {
            const double c = std::cos((u / num_steps + off) / (1.0 + off) * std::numbers::pi / 2.0);
            return c * c;
        };
        for (int i = 0; i < num_steps; ++i) {
            const double beta = std::min(1.0 - f(i + 1.0) / f(i), 0.999);
            ab *= 1.0 - beta;
            s.alpha_bar[static_cast<std::size_t>(i)] = ab;
        }
    }
    return s;
}

std::vector<double> predict_x0(const std::vector<double>& x_t, const std::vector<double>& eps, double alpha_bar) {
    require(x_t.size() == eps.size(), "predict_x0: size mismatch");
    require(alpha_bar > 0.0 && alpha_bar <= 1.0, "predict_x0: alpha_bar outside (0,1]");
    const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
    std::vector<double> x0(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) x0[i] = (x_t[i] - b * eps[i]) / a;
    return x0;
}

// ---- masked loss ----------------------------------------------------------

TrainSample encode_sample(const ClipRecord& clip, const Codec& codec) {
    TrainSample s;
    for (const auto& [m, t] : clip.tensors) {
        LatentTensor z = codec.encode_centered(to_color_space(t).tensor);
        if (s.grid.tokens() == 0) s.grid = z.grid;
        require(z.grid == s.grid, "encode_sample: modalities of clip " + clip.clip_id + " disagree in shape");
        s.latents[static_cast<std::size_t>(index_of(m))] = std::move(z.data);
    }
    s.caption_tokens = tokenize_caption(clip.caption);
    return s;
}

LossReport masked_loss(const DenoiserParams& params, const std::vector<const TrainSample*>& batch,
                       const std::vector<RoleAssignment>& roles, const std::vector<int>& timesteps,
                       const NoiseSchedule& schedule, Rng& rng, std::vector<double>* grads) {
    require(!batch.empty(), "masked_loss: empty batch");
    require(roles.size() == batch.size() && timesteps.size() == batch.size(),
            "masked_loss: batch, roles and timesteps differ in length");
    int pairs = 0;
    for (const auto& r : roles) {
        const int g = r.count(Role::noisy);
        require(g > 0, "masked_loss: sample with no supervised modality");
        pairs += g;
    }
    if (grads) require(grads->size() == params.count(), "masked_loss: gradient buffer has the wrong size");

    LossReport rep;
    rep.supervised_pairs = pairs;
    std::array<double, kNumModalities> sum{};
    std::array<int, kNumModalities> count{};
    DenoiserTape tape;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const int t = timesteps[s];
        require(t >= 0 && t < schedule.num_steps(), "masked_loss: timestep outside the schedule");
        const ModelInput in = build_model_input(batch[s]->latents, batch[s]->grid, roles[s], t, schedule, rng,
                                                batch[s]->caption_tokens);
        const SliceSet pred = grads ? tape.forward(params, in) : predict_eps(params, in);
        SliceSet d_out;
        for (Modality m : kAllModalities) {
            const auto i = static_cast<std::size_t>(index_of(m));
            if (in.roles[i] != Role::noisy) continue;
            const auto& eps = in.noise[i];
            const double numel = static_cast<double>(eps.size());
            double se = 0;
            if (grads) d_out[i].resize(eps.size());
            for (std::size_t j = 0; j < eps.size(); ++j) {
                const double diff = pred[i][j] - eps[j];
                se += diff * diff;
                if (grads) d_out[i][j] = 2.0 * diff / (numel * pairs);
            }
            sum[i] += se / numel;
            ++count[i];
        }
        if (grads) tape.backward(params, d_out, *grads);
    }
    for (std::size_t i = 0; i < kNumModalities; ++i) {
        rep.mask[i] = count[i] > 0;
        rep.per_modality[i] = count[i] ? sum[i] / count[i] : 0.0;
        rep.weight[i] = static_cast<double>(count[i]) / pairs;
        rep.total += sum[i];
    }
    rep.total /= pairs;
    return rep;
}

// ---- optimizer ------------------------------------------------------------

double learning_rate(const AdamWConfig& cfg, std::int64_t step) {
    if (cfg.warmup_steps <= 0 || step >= cfg.warmup_steps) return cfg.lr;
    return cfg.lr * static_cast<double>(std::max<std::int64_t>(step, 1)) / cfg.warmup_steps;
}

double adamw_step(DenoiserParams& params, std::vector<double>& grads, AdamWState& state, const AdamWConfig& cfg) {
    require(grads.size() == params.count(), "adamw_step: gradient size mismatch");
    if (state.m.size() != params.count()) {
        state.m.assign(params.count(), 0.0);
        state.v.assign(params.count(), 0.0);
    }
    double sq = 0;
    for (double g : grads) sq += g * g;
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) return norm;
    if (cfg.clip_norm > 0 && norm > cfg.clip_norm)
        for (double& g : grads) g *= cfg.clip_norm / norm;

    ++state.step;
    const double lr = learning_rate(cfg, state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (const auto& e : params.layout.entries()) {
        for (std::size_t i = e.offset; i < e.offset + e.size(); ++i) {
            double& p = params.values[i];
            if (e.decay) p -= lr * cfg.weight_decay * p;
            state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
            state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
            p -= lr * (state.m[i] / bc1) / (std::sqrt(state.v[i] / bc2) + cfg.eps);
        }
    }
    return norm;
}

// ---- training -------------------------------------------------------------

std::string_view name_of(Stage s) {
    switch (s) {
        case Stage::I: return "I";
        case Stage::II: return "II";
        case Stage::III: return "III";
    }
    return "?";
}

Stage parse_stage(std::string_view name) {
    if (name == "I" || name == "1") return Stage::I;
    if (name == "II" || name == "2") return Stage::II;
    if (name == "III" || name == "3") return Stage::III;
    throw ValidationError("unknown stage '" + std::string(name) + "' (expected I, II or III)");
}

void TrainConfig::validate() const {
    model.validate();
    for (int s : stage_steps) require(s >= 1, "train config: steps per stage must be at least 1");
    require(batch_size >= 1, "train config: batch_size must be at least 1");
    require(optimizer.lr > 0 && std::isfinite(optimizer.lr), "train config: learning rate must be positive");
    require(p_text >= 0 && p_text <= 1, "train config: p_text must lie in [0,1]");
    require(schedule_steps >= 2, "train config: schedule needs at least 2 steps");
    require(checkpoint_every >= 1, "train config: checkpoint_every must be at least 1");
    require(augment_sampling_steps >= 1, "train config: augment sampling steps must be at least 1");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"model", model.to_json()},
            {"codec_seed", codec_seed},
            {"schedule", {{"kind", name_of(schedule_kind)}, {"num_steps", schedule_steps}}},
            {"stage_steps", stage_steps},
            {"batch_size", batch_size},
            {"lr", optimizer.lr},
            {"weight_decay", optimizer.weight_decay},
            {"warmup_steps", optimizer.warmup_steps},
            {"clip_norm", optimizer.clip_norm},
            {"p_text", p_text},
            {"seed", seed}};
}

std::filesystem::path stage_checkpoint_path(const std::filesystem::path& out_dir, Stage s) {
    return out_dir / ("stage-" + std::string(name_of(s)) + ".ckpt");
}

namespace {

std::vector<std::string> training_ids(const TrainInputs& in) {
    if (!in.clip_ids.empty()) return in.clip_ids;
    if (std::filesystem::exists(in.data_root / "manifest.json")) {
        const Manifest man = read_manifest(in.data_root);
        if (!man.ids(Split::train).empty()) return man.ids(Split::train);
    }
    return list_clips(in.data_root);
}

std::string csv_header() {
    std::string h = "step,stage,loss_total";
    for (Modality m : kAllModalities) h += ",loss_" + std::string(name_of(m));
    return h + ",lr,wallclock";
}

std::string csv_row(const StepLog& log, double wallclock) {
    std::ostringstream os;
    os << std::setprecision(17) << log.step << ',' << name_of(log.stage) << ',' << log.loss.total;
    for (std::size_t i = 0; i < kNumModalities; ++i) {
        os << ',';
        if (log.loss.mask[i]) os << log.loss.per_modality[i];
    }
    os << ',' << log.lr << ',' << std::setprecision(6) << wallclock;
    return os.str();
}

int completed_stage_of(const Checkpoint& ck) { return ck.state.value("completed_stage", 0); }

}  // namespace

TrainResult train(const TrainConfig& config, Stage stage, const TrainInputs& inputs, const StepCallback& on_step) {
    config.validate();
    const int stage_no = static_cast<int>(stage);
    const int total_steps = config.steps_for(stage);
    const auto t_start = std::chrono::steady_clock::now();

    // Starting point: fresh weights, the previous stage's checkpoint, or an interrupted run.
    Checkpoint ck;
    AdamWState adam;
    Rng rng(mix_seed(config.seed, 0x57A6E00u + static_cast<std::uint64_t>(stage_no)));
    std::int64_t start = 0;
    std::vector<std::string> pseudo_ids;
    bool resuming = false;
    if (inputs.resume) {
        ck = load_checkpoint(*inputs.resume);
        require(ck.state.value("stage", std::string()) == name_of(stage),
                "resume: checkpoint belongs to stage " + ck.state.value("stage", std::string("?")) + ", not " +
                    std::string(name_of(stage)));
        if (ck.state.value("completed", false)) {
            TrainResult done;
            done.checkpoint = *inputs.resume;
            done.completed = true;
            return done;
        }
        start = ck.state.at("step").get<std::int64_t>();
        rng.restore(ck.state.at("rng").get<std::string>());
        adam.step = ck.state.at("adam_step").get<std::int64_t>();
        adam.m = ck.extra.at("adam.m");
        adam.v = ck.extra.at("adam.v");
        pseudo_ids = ck.state.value("pseudo_ids", std::vector<std::string>{});
        resuming = true;
    } else if (stage == Stage::I) {
        ck.params = init_params(config.model);
        ck.codec_seed = config.codec_seed;
    } else {
        const Stage prev = stage == Stage::II ? Stage::I : Stage::II;
        const std::filesystem::path init =
            inputs.init ? *inputs.init : stage_checkpoint_path(inputs.out_dir, prev);
        require(std::filesystem::exists(init), "stage " + std::string(name_of(stage)) +
                                                   " requires a completed stage " + std::string(name_of(prev)) +
                                                   " checkpoint (" + init.string() + " not found)");
        ck = load_checkpoint(init);
        require(completed_stage_of(ck) >= stage_no - 1,
                "stage " + std::string(name_of(stage)) + " requires a completed stage " + std::string(name_of(prev)) +
                    " checkpoint; " + init.string() + " has completed stage " + std::to_string(completed_stage_of(ck)));
        ck.extra.clear();
    }
    require(ck.params.config == config.model, "train: model config differs from the checkpoint being continued");
    const int prior_completed = resuming ? ck.state.value("completed_stage", 0) : completed_stage_of(ck);

    const Codec codec(ck.params.config.patch, ck.codec_seed);
    const NoiseSchedule schedule = make_schedule(config.schedule_kind, config.schedule_steps);

    // Training data.
    std::vector<TrainSample> samples;
    for (const auto& id : training_ids(inputs)) samples.push_back(encode_sample(read_clip(inputs.data_root, id), codec));
    require(!samples.empty(), "train: no training clips under " + inputs.data_root.string());

    TrainResult result;
    if (stage == Stage::III) {
        const std::filesystem::path pseudo_root = inputs.out_dir / "pseudo";
        if (!resuming) {
            require(!inputs.pool_root.empty(), "stage III requires an unlabelled pool directory");
            std::vector<std::string> ids = inputs.pool_ids.empty() ? list_clips(inputs.pool_root) : inputs.pool_ids;
            std::vector<ClipRecord> pool;
            for (const auto& id : ids) pool.push_back(read_clip(inputs.pool_root, id, {Modality::rgb}));
            Model model{ck.params, codec, schedule};
            AugmentResult aug = self_augment(model, pool, config.thresholds, config.augment_sampling_steps,
                                             mix_seed(config.seed, 0xA06));
            for (const auto& rec : aug.survivors) {
                write_clip(rec, pseudo_root, WriteOptions{true, false});
                pseudo_ids.push_back(rec.clip_id);
            }
            if (aug.survivors.empty())
                std::cerr << "warning: self-augmentation kept no pool clips; stage III trains on the original data only\n";
        }
        for (const auto& id : pseudo_ids) samples.push_back(encode_sample(read_clip(pseudo_root, id), codec));
        result.survivors = static_cast<int>(pseudo_ids.size());
    }

    std::filesystem::create_directories(inputs.out_dir);
    const std::filesystem::path csv_path = inputs.out_dir / "metrics.csv";
    const bool fresh_csv = !std::filesystem::exists(csv_path);
    std::ofstream csv(csv_path, std::ios::app);
    if (!csv) throw RuntimeFailure("cannot open " + csv_path.string());
    if (fresh_csv) csv << csv_header() << '\n';

    const std::filesystem::path ckpt_path = stage_checkpoint_path(inputs.out_dir, stage);
    result.checkpoint = ckpt_path;
    auto save = [&](std::int64_t step, bool completed) {
        ck.state = nlohmann::json::object();
        ck.state["stage"] = name_of(stage);
        ck.state["step"] = step;
        ck.state["stage_steps"] = total_steps;
        ck.state["completed"] = completed;
        ck.state["completed_stage"] = completed ? stage_no : prior_completed;
        ck.state["rng"] = rng.state();
        ck.state["adam_step"] = adam.step;
        ck.state["schedule"] = {{"kind", name_of(config.schedule_kind)}, {"num_steps", config.schedule_steps}};
        ck.state["pseudo_ids"] = pseudo_ids;
        ck.state["train_config"] = config.to_json();
        ck.extra["adam.m"] = adam.m;
        ck.extra["adam.v"] = adam.v;
        save_checkpoint(ckpt_path, ck);
    };

    const int n = static_cast<int>(samples.size());
    const double p_text = stage == Stage::I ? 1.0 : config.p_text;
    std::vector<double> grads(ck.params.count());
    for (std::int64_t step = start + 1; step <= total_steps; ++step) {
        std::vector<const TrainSample*> batch;
        std::vector<RoleAssignment> roles;
        std::vector<int> ts;
        for (int b = 0; b < config.batch_size; ++b) {
            batch.push_back(&samples[static_cast<std::size_t>(rng.uniform_int(0, n - 1))]);
            roles.push_back(assign_roles(rng, p_text));
            ts.push_back(rng.uniform_int(0, schedule.num_steps() - 1));
        }
        std::fill(grads.begin(), grads.end(), 0.0);
        StepLog log;
        log.step = step;
        log.stage = stage;
        log.loss = masked_loss(ck.params, batch, roles, ts, schedule, rng, &grads);
        if (!std::isfinite(log.loss.total))
            throw RuntimeFailure("non-finite loss at stage " + std::string(name_of(stage)) + " step " +
                                 std::to_string(step) + "; last good checkpoint kept at " + ckpt_path.string());
        const double gnorm = adamw_step(ck.params, grads, adam, config.optimizer);
        if (!std::isfinite(gnorm))
            throw RuntimeFailure("non-finite gradient at stage " + std::string(name_of(stage)) + " step " +
                                 std::to_string(step) + "; last good checkpoint kept at " + ckpt_path.string());
        log.lr = learning_rate(config.optimizer, adam.step);

        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        csv << csv_row(log, wall) << '\n';
        csv.flush();
        if (on_step) on_step(log);
        result.log.push_back(log);

        const bool last = step == total_steps;
        const bool stop = inputs.stop_after && step >= start + *inputs.stop_after;
        if (last || stop || step % config.checkpoint_every == 0) save(step, last);
        if (last) result.completed = true;
        if (stop) break;
    }
    return result;
}

// ---- self-augmentation ----------------------------------------------------

namespace {

// Near-frontal normals carry little direction; the radial part of the ray
// distance dominates the depth gradient there.
constexpr double kMinInPlaneNormal = 0.5;

}  // namespace

double depth_normal_disagreement(const ModalityTensor& depth, const ModalityTensor& normal) {
    require(depth.shape.same_grid(normal.shape), "depth/normal consistency: grids differ");
    require(depth.shape.channels == 1 && normal.shape.channels == 3, "depth/normal consistency: wrong channel counts");
    const int T = depth.shape.frames, H = depth.shape.height, W = depth.shape.width;
    double sum = 0;
    int count = 0;
    for (int t = 0; t < T; ++t)
        for (int y = 1; y + 1 < H; ++y)
            for (int x = 1; x + 1 < W; ++x) {
                // Forward and backward differences must agree, which drops
                // pixels on depth discontinuities; the test is scale free.
                const double fx = depth.at(t, y, x + 1, 0) - depth.at(t, y, x, 0);
                const double bx = depth.at(t, y, x, 0) - depth.at(t, y, x - 1, 0);
                const double fy = depth.at(t, y - 1, x, 0) - depth.at(t, y, x, 0);
                const double by = depth.at(t, y, x, 0) - depth.at(t, y + 1, x, 0);
                auto smooth = [](double f, double b) {
                    return std::abs(f - b) <= 0.5 * std::max(std::abs(f), std::abs(b));
                };
                if (!smooth(fx, bx) || !smooth(fy, by)) continue;
                // Depth growing to the right or upward in the image means the
                // surface faces right or up.
                const double gx = 0.5 * (fx + bx), gy = 0.5 * (fy + by);
                const double nx = normal.at(t, y, x, 0), ny = normal.at(t, y, x, 1);
                const double lg = std::hypot(gx, gy), ln = std::hypot(nx, ny);
                if (lg <= 0.0 || ln < kMinInPlaneNormal) continue;
                const double c = std::clamp((gx * nx + gy * ny) / (lg * ln), -1.0, 1.0);
                sum += std::acos(c) * 180.0 / std::numbers::pi;
                ++count;
            }
    return count ? sum / count : 0.0;
}

double palette_residual(const ModalityTensor& seg_color) {
    require(seg_color.shape.channels == 3, "palette residual: expected a color-space segmentation map");
    const std::size_t px = seg_color.shape.pixels();
    require(px > 0, "palette residual: empty map");
    double sum = 0;
    for (std::size_t i = 0; i < px; ++i) {
        double r = 0;
        snap_to_palette(seg_color.data[3 * i], seg_color.data[3 * i + 1], seg_color.data[3 * i + 2], &r);
        sum += r;
    }
    return sum / static_cast<double>(px);
}

AugmentResult self_augment(const Model& model, const std::vector<ClipRecord>& pool, const AugmentThresholds& thr,
                           int sampling_steps, std::uint64_t seed) {
    AugmentResult out;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const ClipRecord& clip = pool[i];
        const ModalityTensor& rgb = clip.get(Modality::rgb);
        const GenerationResult labels = understand(model, rgb, clip.caption, sampling_steps, mix_seed(seed, 2 * i));

        GenerationRequest regen;
        regen.conditions = labels.native;
        regen.caption = clip.caption;
        regen.targets = {Modality::rgb};
        regen.steps = sampling_steps;
        regen.seed = mix_seed(seed, 2 * i + 1);
        const GenerationResult rerender = generate(model, regen);

        AugmentScores sc;
        sc.clip_id = clip.clip_id;
        sc.angle_deg = depth_normal_disagreement(labels.native.at(Modality::depth), labels.native.at(Modality::normal));
        sc.seg_residual = palette_residual(labels.color.at(Modality::segmentation));
        sc.psnr_db = psnr(rerender.native.at(Modality::rgb), rgb);
        sc.survived = sc.angle_deg <= thr.max_angle_deg && sc.seg_residual <= thr.max_seg_residual &&
                      sc.psnr_db >= thr.min_psnr_db;
        out.scores.push_back(sc);
        if (!sc.survived) continue;

        ClipRecord rec;
        rec.clip_id = "pseudo-" + clip.clip_id;
        rec.caption = clip.caption;
        rec.meta = clip.meta;
        rec.meta.tags.push_back("pseudo");
        rec.tensors.emplace(Modality::rgb, rgb);
        for (const auto& [m, t] : labels.native) rec.tensors.emplace(m, t);
        out.survivors.push_back(std::move(rec));
    }
    return out;
}

}  // namespace ctrlvdiff
