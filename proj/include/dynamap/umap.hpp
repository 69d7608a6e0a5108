#pragma once

#include <dynamap/geometry.hpp>

#include <optional>
#include <vector>

namespace dynamap {

/// Column depth-value histogram of a depth image. Row b, column c counts the
/// pixels of image column c whose depth falls in
/// [depth_min + b * bin_width, depth_min + (b + 1) * bin_width).
struct UMap {
    int bins = 0;
    int cols = 0;
    double bin_width = 0.0;
    double depth_min = 0.0;
    std::vector<int> counts;  // bins * cols, row-major

    int at(int bin, int col) const { return counts[static_cast<size_t>(bin) * cols + col]; }
    int& at(int bin, int col) { return counts[static_cast<size_t>(bin) * cols + col]; }
};

/// 2D obstacle box in U-map coordinates (inclusive ranges).
struct UMapBox {
    int col_min = 0;
    int col_max = 0;
    int bin_min = 0;
    int bin_max = 0;
    int peak = 0;  // max cell count inside
};

struct DetectorConfig {
    double bin_width = 0.2;              // meters per depth bin
    int count_threshold = 10;            // min histogram count for an obstacle cell
    int min_box_cols = 2;                // min U-map box extent in columns
    int min_box_bins = 1;                // min U-map box extent in bins
    double height_depth_tolerance = 0.2; // closeness test for the height scan, meters

    void validate() const {
        if (bin_width <= 0.0 || count_threshold <= 0 || min_box_cols <= 0 ||
            min_box_bins <= 0 || height_depth_tolerance <= 0.0)
            throw std::invalid_argument("DetectorConfig: all fields must be positive");
    }
};

inline UMap compute_umap(const DepthImage& img, const DetectorConfig& cfg) {
    const CameraIntrinsics& intr = img.intrinsics;
    UMap u;
    u.bin_width = cfg.bin_width;
    u.depth_min = intr.depth_min;
    u.cols = intr.width;
    u.bins = static_cast<int>(std::ceil((intr.depth_max - intr.depth_min) / cfg.bin_width));
    if (u.bins < 1) u.bins = 1;
    u.counts.assign(static_cast<size_t>(u.bins) * u.cols, 0);
    for (int v = 0; v < intr.height; ++v) {
        for (int c = 0; c < intr.width; ++c) {
            const float d = img.at(c, v);
            if (d <= 0.0f || d < intr.depth_min || d > intr.depth_max) continue;
            int b = static_cast<int>((d - intr.depth_min) / cfg.bin_width);
            if (b >= u.bins) b = u.bins - 1;  // d == depth_max lands in the last bin
            ++u.at(b, c);
        }
    }
    return u;
}

/// Connected components (4-connectivity) of supra-threshold U-map cells,
/// reported as bounding boxes. Components narrower than min_box_cols or
/// shorter than min_box_bins are discarded. Output is sorted by
/// (col_min, bin_min) so detection order is deterministic.
inline std::vector<UMapBox> extract_umap_boxes(const UMap& umap, const DetectorConfig& cfg) {
    std::vector<UMapBox> boxes;
    if (umap.counts.empty()) return boxes;
    std::vector<uint8_t> visited(umap.counts.size(), 0);
    std::vector<int> stack;
    for (int b0 = 0; b0 < umap.bins; ++b0) {
        for (int c0 = 0; c0 < umap.cols; ++c0) {
            const size_t idx0 = static_cast<size_t>(b0) * umap.cols + c0;
            if (visited[idx0] || umap.counts[idx0] < cfg.count_threshold) continue;
            UMapBox box{c0, c0, b0, b0, umap.counts[idx0]};
            stack.assign(1, static_cast<int>(idx0));
            visited[idx0] = 1;
            while (!stack.empty()) {
                const int idx = stack.back();
                stack.pop_back();
                const int b = idx / umap.cols;
                const int c = idx % umap.cols;
                box.col_min = std::min(box.col_min, c);
                box.col_max = std::max(box.col_max, c);
                box.bin_min = std::min(box.bin_min, b);
                box.bin_max = std::max(box.bin_max, b);
                box.peak = std::max(box.peak, umap.counts[idx]);
                const int nb[4][2] = {{b - 1, c}, {b + 1, c}, {b, c - 1}, {b, c + 1}};
                for (const auto& n : nb) {
                    if (n[0] < 0 || n[0] >= umap.bins || n[1] < 0 || n[1] >= umap.cols) continue;
                    const size_t nidx = static_cast<size_t>(n[0]) * umap.cols + n[1];
                    if (visited[nidx] || umap.counts[nidx] < cfg.count_threshold) continue;
                    visited[nidx] = 1;
                    stack.push_back(static_cast<int>(nidx));
                }
            }
            if (box.col_max - box.col_min + 1 >= cfg.min_box_cols &&
                box.bin_max - box.bin_min + 1 >= cfg.min_box_bins)
                boxes.push_back(box);
        }
    }
    std::sort(boxes.begin(), boxes.end(), [](const UMapBox& a, const UMapBox& b) {
        if (a.col_min != b.col_min) return a.col_min < b.col_min;
        return a.bin_min < b.bin_min;
    });
    return boxes;
}

/// Recovers the image-frame box of a U-map detection by scanning each column
/// for pixels whose depth lies in the U-map box depth range (within
/// height_depth_tolerance). Returns nothing when no column has a qualifying
/// pixel; the detection is dropped.
inline std::optional<ObstacleBox> extract_image_box(const DepthImage& img, const UMapBox& ubox,
                                                    const DetectorConfig& cfg) {
    const CameraIntrinsics& intr = img.intrinsics;
    if (ubox.col_min < 0 || ubox.col_max >= intr.width)
        throw std::invalid_argument("extract_image_box: U-map box outside image columns");
    const double d_lo = intr.depth_min + ubox.bin_min * cfg.bin_width - cfg.height_depth_tolerance;
    const double d_hi =
        intr.depth_min + (ubox.bin_max + 1) * cfg.bin_width + cfg.height_depth_tolerance;
    int row_min = intr.height, row_max = -1;
    for (int c = ubox.col_min; c <= ubox.col_max; ++c) {
        for (int v = 0; v < intr.height; ++v) {
            const float d = img.at(c, v);
            if (d <= 0.0f || d < d_lo || d > d_hi) continue;
            row_min = std::min(row_min, v);
            row_max = std::max(row_max, v);
        }
    }
    if (row_max < 0) return std::nullopt;
    ObstacleBox box;
    box.frame = Frame::Image;
    box.center = {0.5 * (ubox.col_min + ubox.col_max + 1), 0.5 * (row_min + row_max + 1), 0.0};
    box.size = {static_cast<double>(ubox.col_max - ubox.col_min + 1),
                static_cast<double>(row_max - row_min + 1), 0.0};
    box.depth = intr.depth_min + 0.5 * (ubox.bin_min + ubox.bin_max + 1) * cfg.bin_width;
    return box;
}

/// Full region-proposal detection: U-map, 2D boxes, height recovery, pinhole
/// back-projection at the box depth, and the camera-to-map transform. The
/// depth-bin extent of the U-map box becomes the box length along the optical
/// axis. Output order follows the sorted U-map boxes.
inline std::vector<ObstacleBox> detect_raw_boxes(const DepthImage& img, const Pose& pose,
                                                 const DetectorConfig& cfg) {
    const CameraIntrinsics& intr = img.intrinsics;
    std::vector<ObstacleBox> out;
    const UMap umap = compute_umap(img, cfg);
    for (const UMapBox& ubox : extract_umap_boxes(umap, cfg)) {
        const std::optional<ObstacleBox> ibox = extract_image_box(img, ubox, cfg);
        if (!ibox) continue;
        const double d = ibox->depth;
        ObstacleBox cam;
        cam.frame = Frame::Camera;
        cam.center = project_pixel_to_camera(ibox->center.x(), ibox->center.y(), d, intr);
        cam.size = {ibox->size.x() * d / intr.fx, ibox->size.y() * d / intr.fy,
                    (ubox.bin_max - ubox.bin_min + 1) * cfg.bin_width};
        out.push_back(transform_box_camera_to_map(cam, pose));
    }
    return out;
}

}  // namespace dynamap
