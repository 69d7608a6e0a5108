#pragma once

#include <dynamap/scenario.hpp>

#include <cstdint>
#include <random>

namespace dynamap {

/// Stateless 64-bit mix used to derive independent per-frame RNG seeds from
/// the scenario seed. Same inputs always give the same stream.
inline uint64_t mix_seed(uint64_t seed, uint64_t index) {
    uint64_t z = seed + (index + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace detail {

/// Entry parameter of a ray o + t * dir against a map-frame box, as the
/// camera-frame depth (dir carries unit camera z). Negative result means the
/// origin is inside the box; nullopt means no intersection ahead.
inline std::optional<double> ray_box_entry(const Eigen::Vector3d& o, const Eigen::Vector3d& dir,
                                           const ObstacleBox& box) {
    const Eigen::Vector3d lo = box.min_corner();
    const Eigen::Vector3d hi = box.max_corner();
    double t_enter = -std::numeric_limits<double>::infinity();
    double t_exit = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (dir[a] == 0.0) {
            if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
            continue;
        }
        double t0 = (lo[a] - o[a]) / dir[a];
        double t1 = (hi[a] - o[a]) / dir[a];
        if (t0 > t1) std::swap(t0, t1);
        t_enter = std::max(t_enter, t0);
        t_exit = std::min(t_exit, t1);
    }
    if (t_exit < t_enter || t_exit <= 0.0) return std::nullopt;
    return t_enter;
}

}  // namespace detail

/// All solid geometry present at time t: the static boxes plus every agent
/// box at its scripted position.
inline std::vector<ObstacleBox> scene_boxes_at(const Scenario& sc, double t) {
    std::vector<ObstacleBox> boxes = sc.static_boxes;
    for (const AgentScript& a : sc.agents) boxes.push_back(a.box_at(t));
    return boxes;
}

/// Exact depth image of the boxes from the given camera pose. Each pixel
/// fires a ray through its integer coordinate; the stored depth is the
/// camera-frame z of the nearest surface. Pixels seeing nothing within
/// [depth_min, depth_max], or whose origin sits inside a box, read 0.
inline DepthImage render_depth_noiseless(const CameraIntrinsics& intr, const Pose& pose,
                                         const std::vector<ObstacleBox>& boxes) {
    DepthImage img = DepthImage::zeros(intr);
    const Eigen::Vector3d origin = pose.translation;
    for (int v = 0; v < intr.height; ++v) {
        for (int u = 0; u < intr.width; ++u) {
            const Eigen::Vector3d dir_cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
            const Eigen::Vector3d dir = pose.rotation * dir_cam;
            double depth = std::numeric_limits<double>::infinity();
            bool inside = false;
            for (const ObstacleBox& b : boxes) {
                const auto entry = detail::ray_box_entry(origin, dir, b);
                if (!entry) continue;
                if (*entry <= 0.0) inside = true;
                else depth = std::min(depth, *entry);
            }
            if (inside || depth < intr.depth_min || depth > intr.depth_max) continue;
            img.at(u, v) = static_cast<float>(depth);
        }
    }
    return img;
}

/// Simulated sensor frame at time t: exact render, then per-pixel Gaussian
/// depth noise with sigma = sigma0 + sigma1 * d^2 clamped back into the
/// valid range, then dropout. The RNG is re-seeded per frame from the
/// scenario seed and the frame index, and only pixels that hit geometry
/// consume draws (one normal, one uniform, in row-major order), so frames
/// are reproducible in isolation.
inline DepthImage render_depth(const Scenario& sc, double t, const Pose& camera_pose) {
    DepthImage img = render_depth_noiseless(sc.camera, camera_pose, scene_boxes_at(sc, t));
    const SimParams& sim = sc.sim;
    if (sim.noise_sigma0 == 0.0 && sim.noise_sigma1 == 0.0 && sim.dropout == 0.0) return img;
    const auto frame = static_cast<uint64_t>(std::llround(t / sim.dt));
    std::mt19937_64 rng(mix_seed(sim.seed, frame));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (float& d : img.data) {
        if (d <= 0.0f) continue;
        const double sigma = sim.noise_sigma0 + sim.noise_sigma1 * static_cast<double>(d) * d;
        const double noisy =
            std::clamp(d + sigma * gauss(rng), sc.camera.depth_min, sc.camera.depth_max);
        d = unit(rng) < sim.dropout ? 0.0f : static_cast<float>(noisy);
    }
    return img;
}

inline DepthImage render_depth(const Scenario& sc, int frame) {
    const double t = sc.time_of(frame);
    return render_depth(sc, t, sc.camera_pose_at(t));
}

}  // namespace dynamap
