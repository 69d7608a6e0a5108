#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace dynamap {

/// Pinhole camera model. Pixel (u, v) with depth d back-projects to
/// [(u - cx) * d / fx, (v - cy) * d / fy, d] in the camera frame
/// (x right, y down, z along the optical axis).
struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;
    double depth_min = 0.0;  // meters
    double depth_max = 0.0;  // meters

    void validate() const {
        if (fx <= 0.0 || fy <= 0.0)
            throw std::invalid_argument("CameraIntrinsics: focal lengths must be positive");
        if (width <= 0 || height <= 0)
            throw std::invalid_argument("CameraIntrinsics: image dimensions must be positive");
        if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
            throw std::invalid_argument("CameraIntrinsics: principal point outside image");
        if (!(0.0 < depth_min && depth_min < depth_max))
            throw std::invalid_argument("CameraIntrinsics: need 0 < depth_min < depth_max");
    }
};

/// Rigid camera-to-map transform: p_map = rotation * p_camera + translation.
struct Pose {
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();

    static Pose identity() { return Pose{}; }

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

    Pose inverse() const {
        Pose inv;
        inv.rotation = rotation.transpose();
        inv.translation = -inv.rotation * translation;
        return inv;
    }

    bool is_orthonormal(double tol = 1e-9) const {
        return (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
                   .cwiseAbs()
                   .maxCoeff() <= tol;
    }

    void validate() const {
        if (!is_orthonormal())
            throw std::invalid_argument("Pose: rotation is not orthonormal");
    }
};

/// Dense row-major depth image in meters. Invalid pixels hold 0.
struct DepthImage {
    CameraIntrinsics intrinsics;
    std::vector<float> data;  // width * height, row-major

    static DepthImage zeros(const CameraIntrinsics& intr) {
        intr.validate();
        DepthImage img;
        img.intrinsics = intr;
        img.data.assign(static_cast<size_t>(intr.width) * intr.height, 0.0f);
        return img;
    }

    float at(int u, int v) const { return data[static_cast<size_t>(v) * intrinsics.width + u]; }
    float& at(int u, int v) { return data[static_cast<size_t>(v) * intrinsics.width + u]; }
    bool valid(int u, int v) const { return at(u, v) > 0.0f; }

    void validate() const {
        intrinsics.validate();
        if (data.size() != static_cast<size_t>(intrinsics.width) * intrinsics.height)
            throw std::invalid_argument("DepthImage: data length != width * height");
        for (float d : data) {
            if (d != 0.0f && (d < intrinsics.depth_min || d > intrinsics.depth_max))
                throw std::invalid_argument("DepthImage: depth value outside valid range");
        }
    }
};

enum class Frame { Image, Camera, Map };

/// Axis-aligned obstacle bounding box.
///
/// Image frame: center = (u, v, 0) pixels, size = (w, h, 0) pixels and the
/// depth field holds the box depth in meters. Camera/Map frame: center and
/// size are 3-vectors in meters and depth is unused.
struct ObstacleBox {
    Frame frame = Frame::Map;
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Vector3d size = Eigen::Vector3d::Zero();
    double depth = 0.0;

    Eigen::Vector3d min_corner() const { return center - 0.5 * size; }
    Eigen::Vector3d max_corner() const { return center + 0.5 * size; }

    /// Top-view footprint area in m^2 (Camera/Map frames).
    double footprint_area() const { return size.x() * size.y(); }

    std::array<Eigen::Vector3d, 8> corners() const {
        const Eigen::Vector3d lo = min_corner();
        const Eigen::Vector3d hi = max_corner();
        return {Eigen::Vector3d(lo.x(), lo.y(), lo.z()), Eigen::Vector3d(hi.x(), lo.y(), lo.z()),
                Eigen::Vector3d(lo.x(), hi.y(), lo.z()), Eigen::Vector3d(hi.x(), hi.y(), lo.z()),
                Eigen::Vector3d(lo.x(), lo.y(), hi.z()), Eigen::Vector3d(hi.x(), lo.y(), hi.z()),
                Eigen::Vector3d(lo.x(), hi.y(), hi.z()), Eigen::Vector3d(hi.x(), hi.y(), hi.z())};
    }

    bool contains(const Eigen::Vector3d& p) const {
        const Eigen::Vector3d lo = min_corner();
        const Eigen::Vector3d hi = max_corner();
        return p.x() >= lo.x() && p.x() <= hi.x() && p.y() >= lo.y() && p.y() <= hi.y() &&
               p.z() >= lo.z() && p.z() <= hi.z();
    }

    /// Same box scaled about its center, used for proposal-region inflation.
    ObstacleBox inflated(double factor) const {
        ObstacleBox out = *this;
        out.size *= factor;
        return out;
    }
};

/// Back-projects a pixel sample at depth d to the camera frame.
/// Continuous pixel coordinates; the closed interval [0, width] x [0, height]
/// is accepted so box corners on the image border stay projectable.
inline Eigen::Vector3d project_pixel_to_camera(double u, double v, double d,
                                               const CameraIntrinsics& intr) {
    if (d <= 0.0) throw std::invalid_argument("project_pixel_to_camera: depth must be positive");
    if (u < 0.0 || u > intr.width || v < 0.0 || v > intr.height)
        throw std::invalid_argument("project_pixel_to_camera: pixel outside image bounds");
    return {(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d};
}

/// Forward projection of a camera-frame point to continuous pixel coordinates.
inline Eigen::Vector2d project_camera_to_pixel(const Eigen::Vector3d& p,
                                               const CameraIntrinsics& intr) {
    if (p.z() <= 0.0)
        throw std::invalid_argument("project_camera_to_pixel: point behind the camera");
    return {intr.fx * p.x() / p.z() + intr.cx, intr.fy * p.y() / p.z() + intr.cy};
}

/// Rigidly transforms a camera-frame box to the map frame. The result stays
/// axis-aligned in the map frame: all 8 corners are transformed and the
/// enclosing extent is taken, so arbitrary rotations are handled.
inline ObstacleBox transform_box_camera_to_map(const ObstacleBox& box, const Pose& pose) {
    if (box.frame != Frame::Camera)
        throw std::invalid_argument("transform_box_camera_to_map: box must be in the camera frame");
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (const Eigen::Vector3d& c : box.corners()) {
        const Eigen::Vector3d m = pose.apply(c);
        lo = lo.cwiseMin(m);
        hi = hi.cwiseMax(m);
    }
    ObstacleBox out;
    out.frame = Frame::Map;
    out.center = 0.5 * (lo + hi);
    out.size = hi - lo;
    return out;
}

/// Area of the x-y footprint intersection of two map-frame boxes; 0 when disjoint.
inline double top_view_overlap_area(const ObstacleBox& a, const ObstacleBox& b) {
    const double w = std::min(a.max_corner().x(), b.max_corner().x()) -
                     std::max(a.min_corner().x(), b.min_corner().x());
    const double h = std::min(a.max_corner().y(), b.max_corner().y()) -
                     std::max(a.min_corner().y(), b.min_corner().y());
    if (w <= 0.0 || h <= 0.0) return 0.0;
    return w * h;
}

}  // namespace dynamap
