#include "ctrlvdiff/scenegen.hpp"

#include <cctype>
#include <cstring>
#include <limits>
#include <set>
#include <sstream>

namespace ctrlvdiff {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
const Vec3 kWorldUp{0.0, 1.0, 0.0};

const std::array<Material, kMaterialCount> kMaterials = {{
    {"red", {0.80, 0.15, 0.12}, 0.80, 0.0},
    {"red", {0.75, 0.10, 0.15}, 0.20, 0.0},
    {"green", {0.20, 0.70, 0.25}, 0.75, 0.0},
    {"green", {0.15, 0.55, 0.30}, 0.25, 0.0},
    {"blue", {0.15, 0.30, 0.85}, 0.70, 0.0},
    {"blue", {0.20, 0.35, 0.80}, 0.25, 0.90},
    {"yellow", {0.85, 0.80, 0.20}, 0.80, 0.0},
    {"yellow", {0.90, 0.70, 0.25}, 0.30, 1.00},
    {"white", {0.90, 0.90, 0.90}, 0.85, 0.0},
    {"white", {0.85, 0.85, 0.80}, 0.15, 0.0},
    {"gray", {0.60, 0.60, 0.62}, 0.35, 1.00},
    {"gray", {0.45, 0.45, 0.45}, 0.90, 0.0},
    {"orange", {0.90, 0.50, 0.15}, 0.70, 0.0},
    {"purple", {0.55, 0.25, 0.75}, 0.20, 0.0},
    {"cyan", {0.20, 0.75, 0.80}, 0.65, 0.0},
    {"brown", {0.45, 0.30, 0.18}, 0.90, 0.0},
}};

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 normal;
    int primitive = -1;
};

bool intersect_sphere(const Vec3& o, const Vec3& d, const Primitive& p, Hit& hit) {
    const Vec3 oc = o - p.center;
    const double b = dot(oc, d);
    const double c = dot(oc, oc) - p.size * p.size;
    const double disc = b * b - c;
    if (disc < 0) return false;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t <= 1e-6) t = -b + sq;
    if (t <= 1e-6 || t >= hit.t) return false;
    hit.t = t;
    hit.normal = normalized(o + d * t - p.center);
    return true;
}

bool intersect_box(const Vec3& o, const Vec3& d, const Primitive& p, Hit& hit) {
    const double lo[3] = {p.center.x - p.size, p.center.y - p.size, p.center.z - p.size};
    const double hi[3] = {p.center.x + p.size, p.center.y + p.size, p.center.z + p.size};
    const double org[3] = {o.x, o.y, o.z};
    const double dir[3] = {d.x, d.y, d.z};
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    int axis = -1;
    double sign = 0;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dir[a]) < 1e-12) {
            if (org[a] < lo[a] || org[a] > hi[a]) return false;
            continue;
        }
        double t0 = (lo[a] - org[a]) / dir[a];
        double t1 = (hi[a] - org[a]) / dir[a];
        double s = -1.0;
        if (t0 > t1) {
            std::swap(t0, t1);
            s = 1.0;
        }
        if (t0 > tmin) {
            tmin = t0;
            axis = a;
            sign = s;
        }
        tmax = std::min(tmax, t1);
    }
    if (tmin > tmax || tmin <= 1e-6 || axis < 0 || tmin >= hit.t) return false;
    hit.t = tmin;
    hit.normal = Vec3{axis == 0 ? sign : 0.0, axis == 1 ? sign : 0.0, axis == 2 ? sign : 0.0};
    return true;
}

bool intersect_ground(const Vec3& o, const Vec3& d, Hit& hit) {
    if (d.y >= -1e-12 || o.y <= 0) return false;
    const double t = -o.y / d.y;
    if (t <= 1e-6 || t >= hit.t) return false;
    hit.t = t;
    hit.normal = kWorldUp;
    return true;
}

Hit trace(const SceneSpec& scene, const Vec3& o, const Vec3& d) {
    Hit hit;
    hit.t = kFarPlane;
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        const Primitive& p = scene.primitives[i];
        bool got = false;
        switch (p.kind) {
            case PrimitiveKind::sphere: got = intersect_sphere(o, d, p, hit); break;
            case PrimitiveKind::box: got = intersect_box(o, d, p, hit); break;
            case PrimitiveKind::ground_plane: got = intersect_ground(o, d, hit); break;
        }
        if (got) hit.primitive = static_cast<int>(i);
    }
    return hit;
}

struct CameraBasis {
    Vec3 forward, right, up;
};

CameraBasis basis_of(const CameraPose& pose) {
    CameraBasis b;
    b.forward = normalized(pose.look_at - pose.position);
    b.right = normalized(cross(b.forward, kWorldUp));
    b.up = cross(b.right, b.forward);
    return b;
}

bool inside_primitive(const Vec3& pos, const Primitive& p, double margin) {
    switch (p.kind) {
        case PrimitiveKind::sphere: return norm(pos - p.center) <= p.size + margin;
        case PrimitiveKind::box:
            return std::abs(pos.x - p.center.x) <= p.size + margin && std::abs(pos.y - p.center.y) <= p.size + margin &&
                   std::abs(pos.z - p.center.z) <= p.size + margin;
        case PrimitiveKind::ground_plane: return pos.y <= margin;
    }
    return false;
}

Vec3 scene_focus(const SceneSpec& scene) {
    Vec3 sum;
    int n = 0;
    for (const auto& p : scene.primitives)
        if (p.kind != PrimitiveKind::ground_plane) {
            sum = sum + p.center;
            ++n;
        }
    if (n == 0) return {0.0, 0.3, 0.0};
    return sum * (1.0 / n);
}

Vec3 on_circle(const Vec3& c, double radius, double angle, double height) {
    return {c.x + radius * std::cos(angle), height, c.z + radius * std::sin(angle)};
}

void feed_hash(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
}

}  // namespace

std::string_view name_of(PrimitiveKind k) {
    switch (k) {
        case PrimitiveKind::sphere: return "sphere";
        case PrimitiveKind::box: return "box";
        case PrimitiveKind::ground_plane: return "plane";
    }
    return "?";
}

std::string_view name_of(TrajectoryPattern p) {
    switch (p) {
        case TrajectoryPattern::arc: return "arc";
        case TrajectoryPattern::linear: return "linear";
        case TrajectoryPattern::zoom: return "zoom";
        case TrajectoryPattern::orbit: return "orbit";
    }
    return "?";
}

TrajectoryPattern parse_pattern(std::string_view name) {
    for (auto p : kAllPatterns)
        if (name_of(p) == name) return p;
    throw ValidationError("unknown trajectory pattern '" + std::string(name) + "'");
}

const std::array<Material, kMaterialCount>& material_table() { return kMaterials; }

void SceneSpec::validate() const {
    require(!primitives.empty() && primitives.size() <= 4, "scene: need 1-4 primitives");
    std::set<int> ids;
    for (const auto& p : primitives) {
        require(p.instance_id >= 1 && p.instance_id < kPaletteSize, "scene: instance id outside [1,256)");
        require(ids.insert(p.instance_id).second, "scene: duplicate instance id");
        require(p.roughness >= 0 && p.roughness <= 1 && p.metallic >= 0 && p.metallic <= 1,
                "scene: roughness/metallic outside [0,1]");
        require(p.kind == PrimitiveKind::ground_plane || p.size > 0, "scene: primitive size must be positive");
    }
    require(light.intensity > 0, "scene: light intensity must be positive");
}

std::uint64_t SceneSpec::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : primitives) {
        const int kind = static_cast<int>(p.kind);
        feed_hash(h, &kind, sizeof kind);
        const double vals[] = {p.center.x, p.center.y, p.center.z, p.size, p.albedo.x, p.albedo.y,
                               p.albedo.z, p.roughness, p.metallic};
        feed_hash(h, vals, sizeof vals);
        feed_hash(h, &p.material, sizeof p.material);
        feed_hash(h, &p.instance_id, sizeof p.instance_id);
    }
    const double l[] = {light.position.x, light.position.y, light.position.z, light.intensity};
    feed_hash(h, l, sizeof l);
    feed_hash(h, &seed, sizeof seed);
    return h;
}

SceneSpec sample_scene(Rng& rng) {
    SceneSpec scene;
    const int n = rng.uniform_int(1, 4);
    const bool ground = rng.bernoulli(0.6);
    const int objects = ground ? n - 1 : n;

    std::vector<int> materials(kMaterialCount);
    for (int i = 0; i < kMaterialCount; ++i) materials[static_cast<std::size_t>(i)] = i;
    rng.shuffle(materials);
    std::size_t next_material = 0;
    auto assign_material = [&](Primitive& p) {
        p.material = materials[next_material++];
        const Material& m = kMaterials[static_cast<std::size_t>(p.material)];
        p.albedo = m.albedo;
        p.roughness = m.roughness;
        p.metallic = m.metallic;
    };

    if (ground) {
        Primitive g;
        g.kind = PrimitiveKind::ground_plane;
        g.center = {0, 0, 0};
        g.size = 0;
        assign_material(g);
        scene.primitives.push_back(g);
    }
    for (int i = 0; i < objects; ++i) {
        Primitive p;
        p.kind = rng.bernoulli(0.5) ? PrimitiveKind::sphere : PrimitiveKind::box;
        p.size = rng.uniform(0.3, 0.6);
        const double footprint = p.kind == PrimitiveKind::box ? p.size * std::sqrt(2.0) : p.size;
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            const double r = 1.6 * std::sqrt(rng.uniform());
            const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
            p.center = {r * std::cos(a), p.size, r * std::sin(a)};
            placed = true;
            for (const auto& q : scene.primitives) {
                if (q.kind == PrimitiveKind::ground_plane) continue;
                const double qf = q.kind == PrimitiveKind::box ? q.size * std::sqrt(2.0) : q.size;
                const double dx = p.center.x - q.center.x, dz = p.center.z - q.center.z;
                if (std::sqrt(dx * dx + dz * dz) < footprint + qf + 0.1) placed = false;
            }
        }
        if (!placed) continue;
        assign_material(p);
        scene.primitives.push_back(p);
    }
    // A scene always keeps at least its first primitive; ids follow insertion order.
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) scene.primitives[i].instance_id = static_cast<int>(i) + 1;

    scene.light.position = {std::round(rng.uniform(-4.0, 4.0) * 2.0) / 2.0, rng.uniform(3.0, 5.0),
                            std::round(rng.uniform(-4.0, 4.0) * 2.0) / 2.0};
    scene.light.intensity = rng.uniform(0.6, 1.4);
    return scene;
}

double CameraTrajectory::max_step() const {
    double m = 0;
    for (std::size_t i = 1; i < poses.size(); ++i) m = std::max(m, norm(poses[i].position - poses[i - 1].position));
    return m;
}

CameraTrajectory linear_trajectory(const Vec3& a, const Vec3& b, const Vec3& look_at, int frames) {
    require(frames >= 2, "trajectory: need at least 2 frames");
    CameraTrajectory tr;
    tr.pattern = TrajectoryPattern::linear;
    for (int i = 0; i < frames; ++i) {
        const double s = static_cast<double>(i) / (frames - 1);
        tr.poses.push_back({lerp(a, b, s), look_at});
    }
    return tr;
}

void validate_trajectory(const SceneSpec& scene, const CameraTrajectory& traj) {
    require(traj.frames() >= 2, "trajectory: need at least 2 frames");
    for (const auto& pose : traj.poses) {
        const Vec3 f = pose.look_at - pose.position;
        require(norm(f) > 1e-6, "trajectory: camera position equals look-at point");
        require(norm(cross(normalized(f), kWorldUp)) > 1e-3, "trajectory: view direction parallel to up axis");
        for (const auto& p : scene.primitives)
            require(!inside_primitive(pose.position, p, 0.1), "trajectory: camera inside a primitive");
    }
}

CameraTrajectory camera_trajectory(TrajectoryPattern pattern, Rng& rng, int frames, const SceneSpec& scene,
                                   const TrajectoryConfig& cfg) {
    require(frames >= 2, "trajectory: need at least 2 frames");
    const Vec3 focus = scene_focus(scene);
    for (int attempt = 0; attempt < 200; ++attempt) {
        CameraTrajectory tr;
        tr.pattern = pattern;
        const double radius = rng.uniform(cfg.radius_min, cfg.radius_max);
        const double height = rng.uniform(cfg.height_min, cfg.height_max);
        const double a0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
        switch (pattern) {
            case TrajectoryPattern::arc: {
                double span = rng.uniform(20.0, cfg.max_arc_degrees);
                if (rng.bernoulli(0.5)) span = -span;
                tr.span_degrees = span;
                for (int i = 0; i < frames; ++i) {
                    const double a = a0 + span * kDegToRad * i / (frames - 1);
                    tr.poses.push_back({on_circle(focus, radius, a, height), focus});
                }
                break;
            }
            case TrajectoryPattern::linear: {
                const Vec3 a = on_circle(focus, radius, a0, height);
                const Vec3 to_focus = normalized(Vec3{focus.x - a.x, 0.0, focus.z - a.z});
                const Vec3 side = cross(to_focus, kWorldUp);
                double len = rng.uniform(1.0, 2.5);
                if (rng.bernoulli(0.5)) len = -len;
                tr = linear_trajectory(a, a + side * len, focus, frames);
                break;
            }
            case TrajectoryPattern::zoom: {
                Vec3 target = focus;
                double min_gap = 1.0;
                std::vector<const Primitive*> objs;
                for (const auto& p : scene.primitives)
                    if (p.kind != PrimitiveKind::ground_plane) objs.push_back(&p);
                if (!objs.empty()) {
                    const Primitive* p = objs[static_cast<std::size_t>(rng.uniform_int(0, int(objs.size()) - 1))];
                    target = p->center;
                    min_gap += p->size * std::sqrt(3.0);
                } else {
                    target = {rng.uniform(-1.0, 1.0), 0.0, rng.uniform(-1.0, 1.0)};
                }
                const double rise = height - target.y;
                if (std::abs(rise) >= radius) continue;
                const double horiz = std::sqrt(radius * radius - rise * rise);
                const Vec3 dir = normalized(Vec3{horiz * std::cos(a0), rise, horiz * std::sin(a0)});
                const double travel = rng.uniform(1.0, 2.0);
                const bool zoom_in = rng.bernoulli(0.5);
                const double r_end = zoom_in ? radius - travel : radius + travel;
                if (std::min(radius, r_end) < min_gap) continue;
                for (int i = 0; i < frames; ++i) {
                    const double r = radius + (r_end - radius) * i / (frames - 1);
                    tr.poses.push_back({target + dir * r, target});
                }
                break;
            }
            case TrajectoryPattern::orbit: {
                Vec3 pivot = focus;
                std::vector<Vec3> centers;
                for (const auto& p : scene.primitives)
                    if (p.kind != PrimitiveKind::ground_plane) centers.push_back(p.center);
                if (!centers.empty())
                    pivot = centers[static_cast<std::size_t>(rng.uniform_int(0, int(centers.size()) - 1))];
                double span = rng.uniform(0.0, cfg.max_orbit_degrees);
                if (rng.bernoulli(0.5)) span = -span;
                tr.span_degrees = span;
                for (int i = 0; i < frames; ++i) {
                    const double a = a0 + span * kDegToRad * i / (frames - 1);
                    tr.poses.push_back({on_circle(pivot, radius, a, height), pivot});
                }
                break;
            }
        }
        try {
            validate_trajectory(scene, tr);
        } catch (const ValidationError&) {
            continue;
        }
        return tr;
    }
    throw RuntimeFailure("trajectory: no valid camera path found after 200 attempts");
}

Vec3 camera_ray(const RenderConfig& rc, double px, double py) {
    const double tan_half = std::tan(0.5 * rc.fov_degrees * kDegToRad);
    const double aspect = static_cast<double>(rc.width) / rc.height;
    const double u = ((px + 0.5) / rc.width * 2.0 - 1.0) * tan_half * aspect;
    const double v = (1.0 - (py + 0.5) / rc.height * 2.0) * tan_half;
    return normalized(Vec3{u, v, -1.0});
}

ModalityMap render_clip(const SceneSpec& scene, const CameraTrajectory& traj, const RenderConfig& rc) {
    require(rc.height >= 8 && rc.width >= 8, "render: resolution must be at least 8x8");
    scene.validate();
    validate_trajectory(scene, traj);
    const int T = traj.frames(), H = rc.height, W = rc.width;
    auto make = [&](Modality m, int c) { return ModalityTensor(m, Space::native, Shape{T, H, W, c}); };
    ModalityMap out;
    out[Modality::rgb] = make(Modality::rgb, 3);
    out[Modality::depth] = make(Modality::depth, 1);
    out[Modality::normal] = make(Modality::normal, 3);
    out[Modality::albedo] = make(Modality::albedo, 3);
    out[Modality::roughness] = make(Modality::roughness, 1);
    out[Modality::metallic] = make(Modality::metallic, 1);
    out[Modality::segmentation] = make(Modality::segmentation, 1);

    auto& rgb = out[Modality::rgb];
    auto& depth = out[Modality::depth];
    auto& normal = out[Modality::normal];
    auto& albedo = out[Modality::albedo];
    auto& rough = out[Modality::roughness];
    auto& metal = out[Modality::metallic];
    auto& seg = out[Modality::segmentation];

    for (int t = 0; t < T; ++t) {
        const CameraPose& pose = traj.poses[static_cast<std::size_t>(t)];
        const CameraBasis cb = basis_of(pose);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const Vec3 rc_dir = camera_ray(rc, x, y);
                const Vec3 d = normalized(cb.right * rc_dir.x + cb.up * rc_dir.y + cb.forward * (-rc_dir.z));
                const Hit hit = trace(scene, pose.position, d);
                auto put3 = [&](ModalityTensor& m, const Vec3& v) {
                    m.at(t, y, x, 0) = static_cast<float>(v.x);
                    m.at(t, y, x, 1) = static_cast<float>(v.y);
                    m.at(t, y, x, 2) = static_cast<float>(v.z);
                };
                if (hit.primitive < 0) {
                    depth.at(t, y, x, 0) = static_cast<float>(kFarPlane);
                    put3(normal, -rc_dir);
                    put3(albedo, kSkyAlbedo);
                    put3(rgb, kSkyAlbedo);
                    rough.at(t, y, x, 0) = 1.0f;
                    metal.at(t, y, x, 0) = 0.0f;
                    seg.at(t, y, x, 0) = 0.0f;
                    continue;
                }
                const Primitive& p = scene.primitives[static_cast<std::size_t>(hit.primitive)];
                const Vec3 pos = pose.position + d * hit.t;
                const Vec3& n = hit.normal;
                Vec3 to_light = scene.light.position - pos;
                const double dist = norm(to_light);
                to_light = to_light * (1.0 / dist);
                const Vec3 view = -d;
                const Vec3 half = normalized(to_light + view);
                const double atten = scene.light.intensity / (1.0 + 0.02 * dist * dist);
                const double diffuse = std::max(0.0, dot(n, to_light)) * atten;
                const double ks = 0.04 + 0.96 * p.metallic;
                const double shininess = 2.0 / (p.roughness * p.roughness + 1e-3);
                const double spec = ks * std::pow(std::max(0.0, dot(n, half)), shininess);
                const Vec3 color{std::clamp(p.albedo.x * diffuse + spec, 0.0, 1.0),
                                 std::clamp(p.albedo.y * diffuse + spec, 0.0, 1.0),
                                 std::clamp(p.albedo.z * diffuse + spec, 0.0, 1.0)};
                put3(rgb, color);
                depth.at(t, y, x, 0) = static_cast<float>(hit.t);
                const Vec3 n_cam{dot(n, cb.right), dot(n, cb.up), -dot(n, cb.forward)};
                put3(normal, normalized(n_cam));
                put3(albedo, p.albedo);
                rough.at(t, y, x, 0) = static_cast<float>(p.roughness);
                metal.at(t, y, x, 0) = static_cast<float>(p.metallic);
                seg.at(t, y, x, 0) = static_cast<float>(p.instance_id);
            }
    }
    out[Modality::canny] = canny_edges(rgb);
    return out;
}

ModalityTensor normals_from_depth(const ModalityTensor& depth, const RenderConfig& rc) {
    require(depth.modality == Modality::depth && depth.shape.channels == 1, "normals_from_depth: expects depth");
    require(depth.shape.height == rc.height && depth.shape.width == rc.width,
            "normals_from_depth: render config does not match depth resolution");
    Shape s = depth.shape;
    s.channels = 3;
    ModalityTensor out(Modality::normal, Space::native, s);
    auto point = [&](int t, int y, int x) { return camera_ray(rc, x, y) * double(depth.at(t, y, x, 0)); };
    for (int t = 0; t < s.frames; ++t)
        for (int y = 1; y + 1 < s.height; ++y)
            for (int x = 1; x + 1 < s.width; ++x) {
                const Vec3 dx = point(t, y, x + 1) - point(t, y, x - 1);
                const Vec3 dy = point(t, y - 1, x) - point(t, y + 1, x);
                Vec3 n = cross(dx, dy);
                const double len = norm(n);
                if (len < 1e-12) continue;
                n = n * (1.0 / len);
                if (dot(n, camera_ray(rc, x, y)) > 0) n = -n;
                out.at(t, y, x, 0) = static_cast<float>(n.x);
                out.at(t, y, x, 1) = static_cast<float>(n.y);
                out.at(t, y, x, 2) = static_cast<float>(n.z);
            }
    return out;
}

std::vector<std::string> tokenize_caption(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string synth_caption(const SceneSpec& scene, const CameraTrajectory& traj) {
    scene.validate();
    std::vector<std::pair<std::string, int>> shapes;
    std::vector<std::string> adjectives;
    auto add_adj = [&adjectives](std::string a) {
        if (std::find(adjectives.begin(), adjectives.end(), a) == adjectives.end()) adjectives.push_back(std::move(a));
    };
    for (const auto& p : scene.primitives) {
        const std::string shape(name_of(p.kind));
        auto it = std::find_if(shapes.begin(), shapes.end(), [&](const auto& s) { return s.first == shape; });
        if (it == shapes.end())
            shapes.emplace_back(shape, 1);
        else
            ++it->second;
        add_adj(std::string(kMaterials[static_cast<std::size_t>(p.material)].color_name));
        add_adj(p.roughness >= 0.5 ? "rough" : "glossy");
        if (p.metallic >= 0.5) add_adj("metallic");
    }
    std::ostringstream os;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (i) os << " and ";
        os << shapes[i].second << ' ' << shapes[i].first << (shapes[i].second > 1 ? (shapes[i].first == "box" ? "es" : "s") : "");
    }
    for (const auto& a : adjectives) os << ", " << a;
    os << ", camera " << name_of(traj.pattern) << ", light " << (scene.light.intensity >= 1.0 ? "bright" : "dim");
    return os.str();
}

GeneratedClip generate_clip(std::uint64_t seed, int frames, const RenderConfig& rc, const TrajectoryConfig& tc) {
    Rng rng(mix_seed(seed, 0x5CE7E));
    GeneratedClip clip;
    clip.scene = sample_scene(rng);
    clip.scene.seed = seed;
    const TrajectoryPattern pattern = kAllPatterns[static_cast<std::size_t>(rng.uniform_int(0, 3))];
    clip.trajectory = camera_trajectory(pattern, rng, frames, clip.scene, tc);
    clip.modalities = render_clip(clip.scene, clip.trajectory, rc);
    clip.caption = synth_caption(clip.scene, clip.trajectory);
    return clip;
}

}  // namespace ctrlvdiff
