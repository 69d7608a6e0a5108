#pragma once

#include <dynamap/geometry.hpp>

#include <cstdint>
#include <fstream>
#include <unordered_map>
#include <vector>

namespace dynamap {

/// Uniform log-odds occupancy voxel grid. Linear storage is x-fastest:
/// index = x + dims.x * (y + dims.y * z). A voxel is occupied iff its
/// log-odds is >= occupied_threshold; log-odds are clamped to +-5.
class OccupancyGrid {
public:
    double occupied_threshold = 1.5;
    double free_threshold = -1.0;
    double hit_update = 0.85;
    double miss_update = -0.4;
    static constexpr float kLogOddsClamp = 5.0f;

    OccupancyGrid() = default;
    OccupancyGrid(double resolution, const Eigen::Vector3d& origin, const Eigen::Vector3i& dims)
        : resolution_(resolution), origin_(origin), dims_(dims) {
        if (resolution <= 0.0) throw std::invalid_argument("OccupancyGrid: resolution must be > 0");
        if ((dims.array() <= 0).any())
            throw std::invalid_argument("OccupancyGrid: dims must be positive");
        cells_.assign(cell_count(), 0.0f);
        hit_stamp_.assign(cell_count(), 0);
        miss_stamp_.assign(cell_count(), 0);
    }

    double resolution() const { return resolution_; }
    const Eigen::Vector3d& origin() const { return origin_; }
    const Eigen::Vector3i& dims() const { return dims_; }
    size_t cell_count() const {
        return static_cast<size_t>(dims_.x()) * dims_.y() * dims_.z();
    }

    Eigen::Vector3i world_to_voxel(const Eigen::Vector3d& p) const {
        const Eigen::Vector3d rel = (p - origin_) / resolution_;
        return {static_cast<int>(std::floor(rel.x())), static_cast<int>(std::floor(rel.y())),
                static_cast<int>(std::floor(rel.z()))};
    }

    Eigen::Vector3d voxel_center(const Eigen::Vector3i& v) const {
        return origin_ + (v.cast<double>() + Eigen::Vector3d::Constant(0.5)) * resolution_;
    }

    bool in_bounds(const Eigen::Vector3i& v) const {
        return (v.array() >= 0).all() && (v.array() < dims_.array()).all();
    }

    int64_t linear_index(const Eigen::Vector3i& v) const {
        return v.x() + static_cast<int64_t>(dims_.x()) * (v.y() + static_cast<int64_t>(dims_.y()) * v.z());
    }

    float log_odds(const Eigen::Vector3i& v) const { return cells_[linear_index(v)]; }
    void set_log_odds(const Eigen::Vector3i& v, float value) { cells_[linear_index(v)] = value; }

    void add_log_odds(int64_t idx, double delta) {
        cells_[idx] = std::clamp(cells_[idx] + static_cast<float>(delta), -kLogOddsClamp,
                                 kLogOddsClamp);
    }

    bool is_occupied(const Eigen::Vector3i& v) const {
        return cells_[linear_index(v)] >= occupied_threshold;
    }

    /// Occupancy test for a world point; space outside the grid reads as free.
    bool is_occupied_at(const Eigen::Vector3d& p) const {
        const Eigen::Vector3i v = world_to_voxel(p);
        return in_bounds(v) && is_occupied(v);
    }

    const std::vector<float>& cells() const { return cells_; }
    std::vector<float>& cells() { return cells_; }

    // Per-integration scratch, see integrate_depth.
    uint32_t begin_integration() {
        ++integration_counter_;
        if (integration_counter_ == 0) {  // counter wrapped, invalidate stamps
            std::fill(hit_stamp_.begin(), hit_stamp_.end(), 0u);
            std::fill(miss_stamp_.begin(), miss_stamp_.end(), 0u);
            integration_counter_ = 1;
        }
        return integration_counter_;
    }
    std::vector<uint32_t>& hit_stamps() { return hit_stamp_; }
    std::vector<uint32_t>& miss_stamps() { return miss_stamp_; }

private:
    double resolution_ = 0.1;
    Eigen::Vector3d origin_ = Eigen::Vector3d::Zero();
    Eigen::Vector3i dims_ = Eigen::Vector3i::Zero();
    std::vector<float> cells_;
    std::vector<uint32_t> hit_stamp_;
    std::vector<uint32_t> miss_stamp_;
    uint32_t integration_counter_ = 0;
};

/// Hash table of voxels removed by dynamic-region cleaning within the last
/// `window` frames. Entries are treated as occupied during map refinement so
/// the refiner keeps finding support right after a region was cleaned.
struct CleanHistory {
    int window = 10;  // frames an entry stays alive
    std::unordered_map<int64_t, int64_t> entries;  // voxel linear index -> frame stamp

    bool contains(int64_t voxel_index) const { return entries.count(voxel_index) != 0; }

    void record(int64_t voxel_index, int64_t frame) { entries[voxel_index] = frame; }

    /// Drops entries older than `window` frames relative to `frame`.
    void evict(int64_t frame) {
        for (auto it = entries.begin(); it != entries.end();) {
            if (frame - it->second > window)
                it = entries.erase(it);
            else
                ++it;
        }
    }
};

struct RefineConfig {
    double c_inflate = 1.3;  // per-axis inflation of the raw proposal

    void validate() const {
        if (c_inflate < 1.0) throw std::invalid_argument("RefineConfig: c_inflate must be >= 1");
    }
};

struct RefinedBox {
    ObstacleBox box;
    bool refined = false;  // false: no qualifying voxel, raw box passed through
};

namespace detail {

/// Amanatides-Woo style uniform grid traversal from `from` to `to`,
/// clipped to the grid. Calls visit(linear_index) for every crossed voxel,
/// excluding the voxel containing `to`.
template <typename Visit>
void traverse_ray(const OccupancyGrid& grid, const Eigen::Vector3d& from,
                  const Eigen::Vector3d& to, Visit&& visit) {
    const Eigen::Vector3d dir = to - from;
    const double len = dir.norm();
    if (len <= 0.0) return;

    // Clip the segment to the grid box.
    const Eigen::Vector3d grid_lo = grid.origin();
    const Eigen::Vector3d grid_hi =
        grid.origin() + grid.dims().cast<double>() * grid.resolution();
    double t0 = 0.0, t1 = 1.0;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dir[a]) < 1e-12) {
            if (from[a] < grid_lo[a] || from[a] > grid_hi[a]) return;
            continue;
        }
        double ta = (grid_lo[a] - from[a]) / dir[a];
        double tb = (grid_hi[a] - from[a]) / dir[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t0 >= t1) return;

    const Eigen::Vector3d entry = from + (t0 + 1e-9) * dir;
    Eigen::Vector3i v = grid.world_to_voxel(entry);
    if (!grid.in_bounds(v)) return;
    const Eigen::Vector3i end_voxel = grid.world_to_voxel(to);

    Eigen::Vector3i step;
    Eigen::Vector3d t_max, t_delta;
    for (int a = 0; a < 3; ++a) {
        if (dir[a] > 0.0) {
            step[a] = 1;
            const double boundary = grid.origin()[a] + (v[a] + 1) * grid.resolution();
            t_max[a] = (boundary - from[a]) / dir[a];
            t_delta[a] = grid.resolution() / dir[a];
        } else if (dir[a] < 0.0) {
            step[a] = -1;
            const double boundary = grid.origin()[a] + v[a] * grid.resolution();
            t_max[a] = (boundary - from[a]) / dir[a];
            t_delta[a] = -grid.resolution() / dir[a];
        } else {
            step[a] = 0;
            t_max[a] = std::numeric_limits<double>::infinity();
            t_delta[a] = std::numeric_limits<double>::infinity();
        }
    }

    while (true) {
        if (v == end_voxel) return;
        visit(grid.linear_index(v));
        int axis = 0;
        if (t_max[1] < t_max[axis]) axis = 1;
        if (t_max[2] < t_max[axis]) axis = 2;
        if (t_max[axis] >= 1.0) return;  // next crossing is past the endpoint
        v[axis] += step[axis];
        if (v[axis] < 0 || v[axis] >= grid.dims()[axis]) return;
        t_max[axis] += t_delta[axis];
    }
}

}  // namespace detail

/// Integrates one depth frame into the grid. Every valid pixel (subsampled by
/// `stride`) back-projects to an endpoint whose voxel receives hit_update;
/// voxels crossed by the ray from the camera to the endpoint receive
/// miss_update. Each voxel is updated at most once per frame and endpoint
/// hits take precedence over misses.
inline void integrate_depth(OccupancyGrid& grid, const DepthImage& img, const Pose& pose,
                            int stride = 1) {
    pose.validate();
    if (stride < 1) throw std::invalid_argument("integrate_depth: stride must be >= 1");
    const CameraIntrinsics& intr = img.intrinsics;
    const uint32_t tick = grid.begin_integration();
    std::vector<uint32_t>& hit_stamp = grid.hit_stamps();
    std::vector<uint32_t>& miss_stamp = grid.miss_stamps();

    const auto endpoint_of = [&](int u, int v) -> Eigen::Vector3d {
        const double d = img.at(u, v);
        const Eigen::Vector3d cam((u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d);
        return pose.apply(cam);
    };

    // Endpoint hits first so that misses from neighboring rays never erode
    // a surface voxel observed in the same frame.
    for (int v = 0; v < intr.height; v += stride) {
        for (int u = 0; u < intr.width; u += stride) {
            if (!img.valid(u, v)) continue;
            const Eigen::Vector3i vox = grid.world_to_voxel(endpoint_of(u, v));
            if (!grid.in_bounds(vox)) continue;
            const int64_t idx = grid.linear_index(vox);
            if (hit_stamp[idx] == tick) continue;
            hit_stamp[idx] = tick;
            grid.add_log_odds(idx, grid.hit_update);
        }
    }
    for (int v = 0; v < intr.height; v += stride) {
        for (int u = 0; u < intr.width; u += stride) {
            if (!img.valid(u, v)) continue;
            detail::traverse_ray(grid, pose.translation, endpoint_of(u, v), [&](int64_t idx) {
                if (hit_stamp[idx] == tick || miss_stamp[idx] == tick) return;
                miss_stamp[idx] = tick;
                grid.add_log_odds(idx, grid.miss_update);
            });
        }
    }
}

/// Map refinement: inflates the raw proposal by c_inflate about its center,
/// collects the voxels inside that are occupied or recorded in the clean
/// history, and returns the minimal axis-aligned box over those voxel cells.
/// With no qualifying voxel the raw box comes back unchanged, flagged
/// unrefined.
inline RefinedBox refine_box(const OccupancyGrid& grid, const CleanHistory& clean,
                             const ObstacleBox& raw, const RefineConfig& cfg) {
    if (raw.frame != Frame::Map)
        throw std::invalid_argument("refine_box: raw box must be in the map frame");
    cfg.validate();
    const ObstacleBox region = raw.inflated(cfg.c_inflate);
    const Eigen::Vector3i lo = grid.world_to_voxel(region.min_corner());
    const Eigen::Vector3i hi = grid.world_to_voxel(region.max_corner());
    Eigen::Vector3i vox_min = grid.dims();
    Eigen::Vector3i vox_max = Eigen::Vector3i::Constant(-1);
    Eigen::Vector3i v;
    for (v.z() = std::max(lo.z(), 0); v.z() <= std::min(hi.z(), grid.dims().z() - 1); ++v.z())
        for (v.y() = std::max(lo.y(), 0); v.y() <= std::min(hi.y(), grid.dims().y() - 1); ++v.y())
            for (v.x() = std::max(lo.x(), 0); v.x() <= std::min(hi.x(), grid.dims().x() - 1);
                 ++v.x()) {
                if (!region.contains(grid.voxel_center(v))) continue;
                if (!grid.is_occupied(v) && !clean.contains(grid.linear_index(v))) continue;
                vox_min = vox_min.cwiseMin(v);
                vox_max = vox_max.cwiseMax(v);
            }
    if (vox_max.x() < 0) return {raw, false};
    RefinedBox out;
    out.refined = true;
    out.box.frame = Frame::Map;
    const Eigen::Vector3d lo_corner = grid.origin() + vox_min.cast<double>() * grid.resolution();
    const Eigen::Vector3d hi_corner =
        grid.origin() + (vox_max + Eigen::Vector3i::Ones()).cast<double>() * grid.resolution();
    out.box.center = 0.5 * (lo_corner + hi_corner);
    out.box.size = hi_corner - lo_corner;
    return out;
}

/// Dynamic-region cleaning: frees every occupied voxel inside the given
/// dynamic-obstacle boxes (the caller passes the last-f-frames history) and
/// records each freed voxel in the clean history under the current frame.
/// Entries older than the clean-history window are evicted.
inline void clean_dynamic_region(OccupancyGrid& grid, CleanHistory& clean,
                                 const std::vector<ObstacleBox>& dynamic_boxes, int64_t frame) {
    clean.evict(frame);
    for (const ObstacleBox& box : dynamic_boxes) {
        const Eigen::Vector3i lo = grid.world_to_voxel(box.min_corner());
        const Eigen::Vector3i hi = grid.world_to_voxel(box.max_corner());
        Eigen::Vector3i v;
        for (v.z() = std::max(lo.z(), 0); v.z() <= std::min(hi.z(), grid.dims().z() - 1); ++v.z())
            for (v.y() = std::max(lo.y(), 0); v.y() <= std::min(hi.y(), grid.dims().y() - 1);
                 ++v.y())
                for (v.x() = std::max(lo.x(), 0); v.x() <= std::min(hi.x(), grid.dims().x() - 1);
                     ++v.x()) {
                    if (!box.contains(grid.voxel_center(v))) continue;
                    if (!grid.is_occupied(v)) continue;
                    grid.set_log_odds(v, static_cast<float>(grid.free_threshold - 1.0));
                    clean.record(grid.linear_index(v), frame);
                }
    }
}

/// Arc length along the polyline to the first sample (spaced resolution/2)
/// that lands in an occupied voxel; the full polyline length when the path is
/// collision free. A path starting inside an occupied voxel reports 0.
inline double raycast_collision_distance(const OccupancyGrid& grid,
                                         const std::vector<Eigen::Vector3d>& path) {
    if (path.size() < 2)
        throw std::invalid_argument("raycast_collision_distance: path needs >= 2 points");
    const double step = grid.resolution() * 0.5;
    if (grid.is_occupied_at(path.front())) return 0.0;
    double walked = 0.0;     // arc length consumed in finished segments
    double next_sample = step;
    for (size_t i = 0; i + 1 < path.size(); ++i) {
        const Eigen::Vector3d seg = path[i + 1] - path[i];
        const double seg_len = seg.norm();
        if (seg_len <= 0.0) continue;
        while (next_sample <= walked + seg_len) {
            const double local = next_sample - walked;
            const Eigen::Vector3d p = path[i] + seg * (local / seg_len);
            if (grid.is_occupied_at(p)) return next_sample;
            next_sample += step;
        }
        walked += seg_len;
    }
    return walked;
}

/// Binary grid dump for regression tests. Header: resolution (f64), origin
/// (3 x f64), dims (3 x i32), all little-endian; payload: per-voxel f32
/// log-odds in x-fastest order.
inline void save_grid(const std::string& path, const OccupancyGrid& grid) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_grid: cannot open " + path);
    const double res = grid.resolution();
    f.write(reinterpret_cast<const char*>(&res), sizeof(double));
    for (int a = 0; a < 3; ++a) {
        const double o = grid.origin()[a];
        f.write(reinterpret_cast<const char*>(&o), sizeof(double));
    }
    for (int a = 0; a < 3; ++a) {
        const int32_t d = grid.dims()[a];
        f.write(reinterpret_cast<const char*>(&d), sizeof(int32_t));
    }
    f.write(reinterpret_cast<const char*>(grid.cells().data()),
            static_cast<std::streamsize>(grid.cells().size() * sizeof(float)));
}

inline OccupancyGrid load_grid(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_grid: cannot open " + path);
    double res = 0.0;
    Eigen::Vector3d origin;
    Eigen::Vector3i dims;
    f.read(reinterpret_cast<char*>(&res), sizeof(double));
    for (int a = 0; a < 3; ++a) f.read(reinterpret_cast<char*>(&origin[a]), sizeof(double));
    for (int a = 0; a < 3; ++a) {
        int32_t d = 0;
        f.read(reinterpret_cast<char*>(&d), sizeof(int32_t));
        dims[a] = d;
    }
    if (!f) throw std::runtime_error("load_grid: truncated header in " + path);
    OccupancyGrid grid(res, origin, dims);
    f.read(reinterpret_cast<char*>(grid.cells().data()),
           static_cast<std::streamsize>(grid.cells().size() * sizeof(float)));
    if (!f) throw std::runtime_error("load_grid: truncated payload in " + path);
    return grid;
}

}  // namespace dynamap
