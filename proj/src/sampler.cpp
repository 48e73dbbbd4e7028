#include "ctrlvdiff/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ctrlvdiff/diffusion.hpp"

namespace ctrlvdiff {

Shape Model::native_shape(int frames, int channels) const {
    return Shape{frames, params.config.grid_rows * codec.patch(), params.config.grid_cols * codec.patch(), channels};
}

Model load_model(const std::filesystem::path& checkpoint) {
    Checkpoint ck = load_checkpoint(checkpoint);
    Model m;
    m.params = std::move(ck.params);
    m.codec = Codec(m.params.config.patch, ck.codec_seed);
    ScheduleKind kind = ScheduleKind::linear_beta;
    int steps = kDefaultScheduleSteps;
    if (ck.state.contains("schedule")) {
        kind = parse_schedule_kind(ck.state["schedule"].at("kind").get<std::string>());
        steps = ck.state["schedule"].at("num_steps").get<int>();
    }
    m.schedule = make_schedule(kind, steps);
    return m;
}

std::vector<int> sampling_timesteps(int num_steps, int steps) {
    require(num_steps >= 1, "sampling: empty schedule");
    require(steps >= 1, "sampling: steps must be at least 1");
    steps = std::min(steps, num_steps);
    std::vector<int> ts(static_cast<std::size_t>(steps));
    if (steps == 1) {
        ts[0] = num_steps - 1;
        return ts;
    }
    for (int i = 0; i < steps; ++i)
        ts[static_cast<std::size_t>(i)] = static_cast<int>(
            std::llround(static_cast<double>(steps - 1 - i) * (num_steps - 1) / static_cast<double>(steps - 1)));
    return ts;
}

namespace {

int resolve_frames(const Model& model, const GenerationRequest& req) {
    int frames = req.frames;
    const Shape expect = model.native_shape(1, 0);
    for (const auto& [m, t] : req.conditions) {
        require(t.modality == m, "generate: condition tensor keyed under the wrong modality");
        require(t.space == Space::native, std::string(name_of(m)) + ": conditions must be native-space tensors");
        require(t.shape.height == expect.height && t.shape.width == expect.width,
                std::string(name_of(m)) + ": resolution " + std::to_string(t.shape.height) + "x" +
                    std::to_string(t.shape.width) + " does not match the trained " + std::to_string(expect.height) +
                    "x" + std::to_string(expect.width));
        if (frames == 0) frames = t.shape.frames;
        require(t.shape.frames == frames, std::string(name_of(m)) + ": frame count differs from the other inputs");
    }
    require(frames >= 1, "generate: frame count required when no conditions are given");
    require(frames <= model.params.config.max_frames, "generate: more frames than the model supports");
    return frames;
}

/// Projects an x0 estimate back into the codec image of [-1, 1] data.
std::vector<double> clip_to_data_range(const Codec& codec, const LatentGrid& grid, std::vector<double> x0) {
    ModalityTensor c = codec.decode_centered(LatentTensor{Modality::rgb, grid, codec.patch(), std::move(x0)});
    for (float& v : c.data) v = std::clamp(v, 0.0f, 1.0f);
    return codec.encode_centered(c).data;
}

}  // namespace

GenerationResult generate(const Model& model, const GenerationRequest& req) {
    require(!req.targets.empty(), "generate: at least one target modality is required");
    std::set<Modality> targets(req.targets.begin(), req.targets.end());
    require(targets.size() == req.targets.size(), "generate: duplicate target modality");
    for (Modality m : targets)
        require(!req.conditions.count(m), std::string(name_of(m)) + " is both a condition and a target");
    const int frames = resolve_frames(model, req);
    const LatentGrid grid = model.codec.grid_for(model.native_shape(frames, 3));
    const std::size_t slice = grid.slice_numel();

    ModelInput in;
    in.grid = grid;
    in.stack.assign(slice * kNumModalities, 0.0);
    in.caption_tokens = tokenize_caption(req.caption);
    for (Modality m : kAllModalities) {
        const auto i = static_cast<std::size_t>(index_of(m));
        in.roles[i] = Role::none;
        in.absent[i] = 1.0f;
    }
    for (const auto& [m, native] : req.conditions) {
        const auto i = static_cast<std::size_t>(index_of(m));
        in.roles[i] = Role::condition;
        in.absent[i] = 0.0f;
        in.set_slice(m, model.codec.encode_centered(to_color_space(native).tensor).data);
    }

    Rng rng(mix_seed(req.seed, 0x5A3D1E));
    std::map<Modality, std::vector<double>> x;
    for (Modality m : kAllModalities) {
        if (!targets.count(m)) continue;
        const auto i = static_cast<std::size_t>(index_of(m));
        in.roles[i] = Role::noisy;
        in.absent[i] = 0.0f;
        std::vector<double> v(slice);
        for (double& e : v) e = rng.normal();
        x.emplace(m, std::move(v));
    }

    const std::vector<int> ts = sampling_timesteps(model.schedule.num_steps(), req.steps);
    for (std::size_t s = 0; s < ts.size(); ++s) {
        const int t = ts[s];
        const double ab_t = model.schedule.at(t);
        const bool last = s + 1 == ts.size();
        const double ab_prev = last ? 1.0 : model.schedule.at(ts[s + 1]);
        in.t = t;
        for (const auto& [m, v] : x) in.set_slice(m, v);
        const SliceSet eps = predict_eps(model.params, in);

        const double beta = 1.0 - ab_t / ab_prev;
        const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab_t);
        const double ct = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab_t);
        const double sigma = std::sqrt(std::max(0.0, (1.0 - ab_prev) / (1.0 - ab_t) * beta));
        for (auto& [m, v] : x) {
            std::vector<double> x0 = predict_x0(v, eps[static_cast<std::size_t>(index_of(m))], ab_t);
            if (last) {
                v = x0;
                continue;
            }
            x0 = clip_to_data_range(model.codec, grid, std::move(x0));
            for (std::size_t j = 0; j < v.size(); ++j) v[j] = c0 * x0[j] + ct * v[j] + sigma * rng.normal();
        }
    }

    GenerationResult out;
    ColorMeta meta;
    meta.depth = kNominalDepthRange;
    for (auto& [m, v] : x) {
        LatentTensor z{m, grid, model.codec.patch(), std::move(v)};
        ModalityTensor color = model.codec.decode_centered(z);
        color.modality = m;
        color.space = Space::color;
        for (float& c : color.data) c = std::clamp(c, 0.0f, 1.0f);
        out.native.emplace(m, from_color_space(color, meta));
        out.color.emplace(m, std::move(color));
    }
    return out;
}

GenerationResult understand(const Model& model, const ModalityTensor& rgb, const std::string& caption, int steps,
                            std::uint64_t seed) {
    require(rgb.modality == Modality::rgb, "understand: input must be an rgb tensor");
    GenerationRequest req;
    req.conditions.emplace(Modality::rgb, rgb);
    req.caption = caption;
    for (Modality m : kAllModalities)
        if (m != Modality::rgb) req.targets.push_back(m);
    req.steps = steps;
    req.seed = seed;
    return generate(model, req);
}

std::string_view name_of(EditKind k) {
    switch (k) {
        case EditKind::relight: return "relight";
        case EditKind::material: return "material";
        case EditKind::insert: return "insert";
    }
    return "?";
}

EditKind parse_edit_kind(std::string_view name) {
    for (EditKind k : {EditKind::relight, EditKind::material, EditKind::insert})
        if (name_of(k) == name) return k;
    throw ValidationError("unknown edit kind '" + std::string(name) + "' (expected relight, material or insert)");
}

namespace {

void require_modalities(const ClipRecord& clip, std::initializer_list<Modality> ms) {
    for (Modality m : ms)
        require(clip.has(m), "edit: clip " + clip.clip_id + " lacks the " + std::string(name_of(m)) + " modality");
}

void apply_material(ModalityMap& cond, const EditPayload& p, const Shape& grid) {
    if (p.mask.empty()) return;
    require(p.mask.size() == static_cast<std::size_t>(grid.frames) * grid.height * grid.width,
            "material edit: mask extends outside the clip's frame bounds");
    ModalityTensor& albedo = cond.at(Modality::albedo);
    ModalityTensor& rough = cond.at(Modality::roughness);
    ModalityTensor& metal = cond.at(Modality::metallic);
    for (std::size_t i = 0; i < p.mask.size(); ++i) {
        if (!p.mask[i]) continue;
        if (p.albedo) {
            albedo.data[3 * i + 0] = p.albedo->r;
            albedo.data[3 * i + 1] = p.albedo->g;
            albedo.data[3 * i + 2] = p.albedo->b;
        }
        if (p.roughness) rough.data[i] = static_cast<float>(*p.roughness);
        if (p.metallic) metal.data[i] = static_cast<float>(*p.metallic);
    }
}

void apply_stamps(ModalityMap& cond, const EditPayload& p, const Shape& grid) {
    ModalityTensor& albedo = cond.at(Modality::albedo);
    ModalityTensor& normal = cond.at(Modality::normal);
    for (const InsertStamp& s : p.stamps) {
        require(s.radius > 0, "insert edit: stamp radius must be positive");
        require(s.cx >= 0 && s.cx < grid.width && s.cy >= 0 && s.cy < grid.height,
                "insert edit: stamp center lies outside the frame bounds");
        for (int t = 0; t < grid.frames; ++t)
            for (int y = 0; y < grid.height; ++y)
                for (int x = 0; x < grid.width; ++x) {
                    const double dx = (x + 0.5 - s.cx) / s.radius;
                    const double dy = (y + 0.5 - s.cy) / s.radius;
                    const double r2 = dx * dx + dy * dy;
                    if (r2 >= 1.0) continue;
                    albedo.at(t, y, x, 0) = s.albedo.r;
                    albedo.at(t, y, x, 1) = s.albedo.g;
                    albedo.at(t, y, x, 2) = s.albedo.b;
                    // Hemisphere bulging toward the camera; image rows grow downward.
                    normal.at(t, y, x, 0) = static_cast<float>(dx);
                    normal.at(t, y, x, 1) = static_cast<float>(-dy);
                    normal.at(t, y, x, 2) = static_cast<float>(std::sqrt(1.0 - r2));
                }
    }
}

}  // namespace

GenerationResult edit_and_rerender(const Model& model, const ClipRecord& clip, const EditRequest& req,
                                   ModalityMap* conditions) {
    const EditPayload& p = req.payload;
    GenerationRequest gen;
    gen.caption = clip.caption;
    gen.steps = req.steps;
    gen.seed = req.seed;
    gen.targets = {Modality::rgb};

    ModalityMap cond;
    auto take = [&](Modality m) { cond.emplace(m, clip.get(m)); };
    switch (req.kind) {
        case EditKind::relight:
            require(!p.caption.empty(), "relight edit: replacement caption is empty");
            require_modalities(clip, {Modality::depth, Modality::normal, Modality::albedo, Modality::roughness,
                                      Modality::metallic, Modality::segmentation, Modality::canny});
            for (Modality m : kAllModalities)
                if (m != Modality::rgb) take(m);
            gen.caption = p.caption;
            break;
        case EditKind::material:
            require_modalities(clip, {Modality::depth, Modality::normal, Modality::albedo, Modality::roughness,
                                      Modality::metallic, Modality::segmentation, Modality::canny});
            for (Modality m : kAllModalities)
                if (m != Modality::rgb) take(m);
            apply_material(cond, p, clip.get(Modality::albedo).shape);
            break;
        case EditKind::insert:
            require_modalities(clip, {Modality::normal, Modality::albedo, Modality::roughness, Modality::metallic,
                                      Modality::segmentation});
            for (Modality m : {Modality::normal, Modality::albedo, Modality::roughness, Modality::metallic,
                               Modality::segmentation})
                take(m);
            if (p.regenerate_depth) {
                gen.targets.push_back(Modality::depth);
            } else {
                require_modalities(clip, {Modality::depth});
                take(Modality::depth);
            }
            apply_stamps(cond, p, clip.get(Modality::albedo).shape);
            break;
    }
    if (!p.caption.empty()) gen.caption = p.caption;
    gen.conditions = cond;
    if (conditions) *conditions = std::move(cond);
    return generate(model, gen);
}

}  // namespace ctrlvdiff
