#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "ctrlvdiff/modality.hpp"
#include "ctrlvdiff/rng.hpp"

namespace ctrlvdiff {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    bool operator==(const Vec3&) const = default;
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) { return a * (1.0 / norm(a)); }
inline Vec3 lerp(const Vec3& a, const Vec3& b, double s) { return a + (b - a) * s; }

enum class PrimitiveKind { sphere, box, ground_plane };
std::string_view name_of(PrimitiveKind k);

struct Material {
    std::string_view color_name;
    Vec3 albedo;
    double roughness;
    double metallic;
};

inline constexpr int kMaterialCount = 16;
const std::array<Material, kMaterialCount>& material_table();

struct Primitive {
    PrimitiveKind kind = PrimitiveKind::sphere;
    Vec3 center;
    double size = 0.5;  // sphere radius or box half-extent; unused for the ground plane
    int material = 0;   // index into material_table()
    Vec3 albedo;
    double roughness = 0.5;
    double metallic = 0.0;
    int instance_id = 1;

    bool operator==(const Primitive&) const = default;
};

/// Point light; its intensity is one scalar for the whole clip.
struct Light {
    Vec3 position;
    double intensity = 1.0;
    bool operator==(const Light&) const = default;
};

struct SceneSpec {
    std::vector<Primitive> primitives;
    Light light;
    std::uint64_t seed = 0;

    bool operator==(const SceneSpec&) const = default;
    /// Checks 1-4 primitives, unique ids in [1,256), material ranges. Throws ValidationError.
    void validate() const;
    std::uint64_t hash() const;
};

inline constexpr double kSceneRadius = 2.5;
inline constexpr double kFarPlane = 10.0 * kSceneRadius;
inline const Vec3 kSkyAlbedo{0.55, 0.70, 0.95};

/// Deterministic for a given generator state.
SceneSpec sample_scene(Rng& rng);

enum class TrajectoryPattern { arc, linear, zoom, orbit };
std::string_view name_of(TrajectoryPattern p);
TrajectoryPattern parse_pattern(std::string_view name);
inline constexpr std::array<TrajectoryPattern, 4> kAllPatterns = {
    TrajectoryPattern::arc, TrajectoryPattern::linear, TrajectoryPattern::zoom, TrajectoryPattern::orbit};

struct CameraPose {
    Vec3 position;
    Vec3 look_at;
    bool operator==(const CameraPose&) const = default;
};

struct TrajectoryConfig {
    double height_min = 0.5;
    double height_max = 2.0;
    double radius_min = 3.5;
    double radius_max = 5.0;
    double max_arc_degrees = 90.0;
    double max_orbit_degrees = 180.0;

    /// Longest path any pattern can take (half an orbit at the largest radius).
    double max_travel() const { return std::numbers::pi * radius_max; }
    double max_step(int frames) const { return max_travel() / std::max(1, frames - 1); }
};

struct CameraTrajectory {
    TrajectoryPattern pattern = TrajectoryPattern::linear;
    std::vector<CameraPose> poses;
    /// Signed angular span for arc/orbit, zero otherwise.
    double span_degrees = 0.0;

    int frames() const { return static_cast<int>(poses.size()); }
    double max_step() const;
    bool operator==(const CameraTrajectory&) const = default;
};

/// Straight-line interpolation of T poses from a to b, all looking at `look_at`.
CameraTrajectory linear_trajectory(const Vec3& a, const Vec3& b, const Vec3& look_at, int frames);

/// Samples a trajectory of the given pattern that passes validate_trajectory.
CameraTrajectory camera_trajectory(TrajectoryPattern pattern, Rng& rng, int frames, const SceneSpec& scene,
                                   const TrajectoryConfig& cfg = {});

/// Rejects poses inside or touching a primitive, or with a degenerate view direction.
void validate_trajectory(const SceneSpec& scene, const CameraTrajectory& traj);

struct RenderConfig {
    int height = 32;
    int width = 32;
    double fov_degrees = 50.0;  // vertical
};

/// Per-pixel unit ray direction in camera space (x right, y up, z toward the viewer).
Vec3 camera_ray(const RenderConfig& rc, double px, double py);

using ModalityMap = std::map<Modality, ModalityTensor>;

/// Analytic ray casting: one primary ray per pixel, all eight native modalities.
/// Normals are camera-space; depth is ray-hit distance (far plane on a miss).
ModalityMap render_clip(const SceneSpec& scene, const CameraTrajectory& traj, const RenderConfig& rc);

/// Camera-space normals recovered from a depth map by central differences of
/// the back-projected points. Border pixels are left at (0,0,0).
ModalityTensor normals_from_depth(const ModalityTensor& depth, const RenderConfig& rc);

inline constexpr double kCannyLow = 0.1;
inline constexpr double kCannyHigh = 0.2;

/// Per-frame Canny: luma, 5x5 Gaussian (sigma 1), Sobel, 4-direction
/// non-maximum suppression, hysteresis. Output is {0,1} replicated to 3 channels.
ModalityTensor canny_edges(const ModalityTensor& rgb, double lo = kCannyLow, double hi = kCannyHigh);

std::string synth_caption(const SceneSpec& scene, const CameraTrajectory& traj);

/// Lowercased alphanumeric words, the unit the caption embedder hashes.
std::vector<std::string> tokenize_caption(std::string_view text);

/// One fully generated sample: scene, camera path, eight modalities, caption.
struct GeneratedClip {
    SceneSpec scene;
    CameraTrajectory trajectory;
    ModalityMap modalities;
    std::string caption;
};

GeneratedClip generate_clip(std::uint64_t seed, int frames, const RenderConfig& rc,
                            const TrajectoryConfig& tc = {});

}  // namespace ctrlvdiff
