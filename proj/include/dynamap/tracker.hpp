#pragma once

#include <dynamap/geometry.hpp>

#include <deque>
#include <optional>
#include <tuple>
#include <vector>

namespace dynamap {

struct TrackerConfig {
    // Association gates: a detection may claim a track only if their top-view
    // overlap is large enough relative to the detection footprint and the
    // horizontal center distance is small enough.
    double overlap_ratio_min = 0.3;
    double max_center_distance = 0.5;

    // A track keeps the last history_frames + 1 positions; the continuity
    // test needs that full window. Tracks unmatched for more than
    // history_frames frames are retired.
    int history_frames = 6;
    int continuity_span = 2;       // frames spanned by one displacement sample
    double continuity_threshold = 0.5;
    double dynamic_velocity_min = 0.3;  // m/s, below this a track cannot vote dynamic
    int vote_window = 5;
    int vote_threshold = 3;        // dynamic votes within the window needed to flip

    int size_lock_frames = 5;      // consecutive fully-visible frames before the size locks
    double dt = 1.0 / 30.0;

    void validate() const {
        if (overlap_ratio_min <= 0.0 || overlap_ratio_min > 1.0)
            throw std::invalid_argument("TrackerConfig: overlap_ratio_min must be in (0, 1]");
        if (max_center_distance <= 0.0)
            throw std::invalid_argument("TrackerConfig: max_center_distance must be > 0");
        if (continuity_span < 1)
            throw std::invalid_argument("TrackerConfig: continuity_span must be >= 1");
        if (history_frames <= continuity_span)
            throw std::invalid_argument("TrackerConfig: history_frames must exceed the span");
        if (vote_window < 1 || vote_threshold < 1 || vote_threshold > vote_window)
            throw std::invalid_argument("TrackerConfig: invalid vote window");
        if (size_lock_frames < 1)
            throw std::invalid_argument("TrackerConfig: size_lock_frames must be >= 1");
        if (dt <= 0.0) throw std::invalid_argument("TrackerConfig: dt must be > 0");
    }
};

/// Pixel margin a box projection must keep from the image border to count as
/// fully visible.
inline constexpr double kFovMarginPx = 2.0;

/// Constant-velocity filter over state [x, y, vx, vy] with a full-state
/// measurement [x, y, vx, vy].
struct KalmanParams {
    Eigen::Matrix4d A;
    Eigen::Matrix4d H;
    Eigen::Matrix4d Q;
    Eigen::Matrix4d R;

    static KalmanParams for_dt(double dt, double q_pos = 0.01, double q_vel = 0.04,
                               double r_pos = 0.04, double r_vel = 0.09) {
        KalmanParams p;
        p.A = Eigen::Matrix4d::Identity();
        p.A(0, 2) = dt;
        p.A(1, 3) = dt;
        p.H = Eigen::Matrix4d::Identity();
        p.Q = Eigen::Vector4d(q_pos, q_pos, q_vel, q_vel).asDiagonal();
        p.R = Eigen::Vector4d(r_pos, r_pos, r_vel, r_vel).asDiagonal();
        return p;
    }
};

struct KalmanState {
    Eigen::Vector4d x = Eigen::Vector4d::Zero();
    Eigen::Matrix4d P = Eigen::Matrix4d::Identity();
};

/// One predict-update cycle. The covariance update uses the Joseph form so P
/// stays symmetric positive semidefinite under roundoff.
inline void kalman_step(KalmanState& s, const KalmanParams& p, const Eigen::Vector4d& z) {
    s.x = p.A * s.x;
    s.P = p.A * s.P * p.A.transpose() + p.Q;
    const Eigen::Matrix4d S = p.H * s.P * p.H.transpose() + p.R;
    const Eigen::Matrix4d K = S.llt().solve(p.H * s.P).transpose();
    s.x += K * (z - p.H * s.x);
    const Eigen::Matrix4d IKH = Eigen::Matrix4d::Identity() - K * p.H;
    s.P = IKH * s.P * IKH.transpose() + K * p.R * K.transpose();
}

struct Association {
    std::vector<std::pair<int, int>> matches;  // (detection index, track index)
    std::vector<int> unmatched_detections;
    std::vector<int> unmatched_tracks;
};

/// Greedy one-to-one matching. Admissible pairs are ordered by ascending
/// horizontal center distance (ties by detection index, then track index) and
/// claimed in that order.
inline Association associate(const std::vector<ObstacleBox>& detections,
                             const std::vector<ObstacleBox>& track_boxes,
                             const TrackerConfig& cfg) {
    struct Candidate {
        double dist;
        int det;
        int track;
    };
    std::vector<Candidate> candidates;
    for (int d = 0; d < static_cast<int>(detections.size()); ++d) {
        const double footprint = detections[d].footprint_area();
        if (footprint <= 0.0) continue;
        for (int t = 0; t < static_cast<int>(track_boxes.size()); ++t) {
            const double dist =
                (detections[d].center.head<2>() - track_boxes[t].center.head<2>()).norm();
            if (dist > cfg.max_center_distance) continue;
            const double ratio = top_view_overlap_area(detections[d], track_boxes[t]) / footprint;
            if (ratio < cfg.overlap_ratio_min) continue;
            candidates.push_back({dist, d, t});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(a.dist, a.det, a.track) < std::tie(b.dist, b.det, b.track);
    });
    Association out;
    std::vector<bool> det_claimed(detections.size(), false);
    std::vector<bool> track_claimed(track_boxes.size(), false);
    for (const Candidate& c : candidates) {
        if (det_claimed[c.det] || track_claimed[c.track]) continue;
        det_claimed[c.det] = true;
        track_claimed[c.track] = true;
        out.matches.emplace_back(c.det, c.track);
    }
    for (int d = 0; d < static_cast<int>(detections.size()); ++d)
        if (!det_claimed[d]) out.unmatched_detections.push_back(d);
    for (int t = 0; t < static_cast<int>(track_boxes.size()); ++t)
        if (!track_claimed[t]) out.unmatched_tracks.push_back(t);
    return out;
}

/// Mean cosine between consecutive displacement samples of a position
/// history, measured in the horizontal plane. Displacement i connects
/// position i to position i + span. A zero-length displacement contributes
/// cosine 0 to each pair it appears in. Needs at least two displacement
/// samples, otherwise nullopt.
inline std::optional<double> continuity_coefficient(const std::vector<Eigen::Vector3d>& positions,
                                                    int span) {
    if (span < 1) throw std::invalid_argument("continuity_coefficient: span must be >= 1");
    const int count = static_cast<int>(positions.size()) - span;  // displacement samples
    if (count < 2) return std::nullopt;
    std::vector<Eigen::Vector2d> disp(count);
    for (int i = 0; i < count; ++i)
        disp[i] = (positions[i + span] - positions[i]).head<2>();
    double sum = 0.0;
    for (int i = 0; i + 1 < count; ++i) {
        const double qa = disp[i].dot(disp[i]);
        const double qb = disp[i + 1].dot(disp[i + 1]);
        if (qa == 0.0 || qb == 0.0) continue;  // contributes 0
        const double c = disp[i].dot(disp[i + 1]) / std::sqrt(qa * qb);
        sum += std::clamp(c, -1.0, 1.0);
    }
    return sum / (count - 1);
}

/// All eight box corners project inside the image with the given pixel margin
/// and lie inside the camera depth range.
inline bool box_fully_in_fov(const ObstacleBox& box, const Pose& camera_pose,
                             const CameraIntrinsics& intr, double margin_px) {
    const Pose inv = camera_pose.inverse();
    for (const Eigen::Vector3d& corner : box.corners()) {
        const Eigen::Vector3d c = inv.apply(corner);
        if (c.z() < intr.depth_min || c.z() > intr.depth_max) return false;
        const double u = intr.fx * c.x() / c.z() + intr.cx;
        const double v = intr.fy * c.y() / c.z() + intr.cy;
        if (u < margin_px || u > intr.width - margin_px) return false;
        if (v < margin_px || v > intr.height - margin_px) return false;
    }
    return true;
}

struct TrackedObstacle {
    int id = -1;
    ObstacleBox box;  // map frame; horizontal center follows the filter state
    KalmanState kf;
    bool dynamic = false;
    bool size_locked = false;
    Eigen::Vector3d locked_size = Eigen::Vector3d::Zero();
    int age = 0;     // matched frames so far
    int misses = 0;  // consecutive unmatched frames
    std::optional<double> continuity;
    std::deque<Eigen::Vector3d> centers;  // recent filtered centers, newest last
    std::deque<Eigen::Vector3d> sizes;    // sizes from consecutive fully-visible frames
    std::deque<bool> votes;               // recent dynamic votes, newest last
    Eigen::Vector3d last_meas_center = Eigen::Vector3d::Zero();
};

/// Stateful multi-obstacle tracker. Per frame: associate detections to
/// tracks, filter matched tracks (velocity measured from the last two
/// detection centers), classify each matched track by motion continuity
/// voting, lock sizes after enough fully-visible frames, spawn tracks for
/// unmatched detections, retire tracks unmatched for too long. Unmatched
/// tracks keep their last box; there is no coasting.
class Tracker {
public:
    Tracker() : Tracker(TrackerConfig{}) {}
    explicit Tracker(const TrackerConfig& cfg)
        : Tracker(cfg, KalmanParams::for_dt(cfg.dt)) {}
    Tracker(const TrackerConfig& cfg, const KalmanParams& params) : cfg_(cfg), kalman_(params) {
        cfg_.validate();
    }

    const std::vector<TrackedObstacle>& step(const std::vector<ObstacleBox>& detections,
                                             const Pose& camera_pose,
                                             const CameraIntrinsics& intr) {
        std::vector<ObstacleBox> track_boxes;
        track_boxes.reserve(tracks_.size());
        for (const TrackedObstacle& t : tracks_) track_boxes.push_back(t.box);
        const Association assoc = associate(detections, track_boxes, cfg_);
        for (const auto& [d, t] : assoc.matches)
            update_track(tracks_[t], detections[d], camera_pose, intr);
        for (int t : assoc.unmatched_tracks) {
            tracks_[t].misses++;
            if (!tracks_[t].size_locked) tracks_[t].sizes.clear();  // streak broken
        }
        std::erase_if(tracks_,
                      [&](const TrackedObstacle& t) { return t.misses > cfg_.history_frames; });
        for (int d : assoc.unmatched_detections) spawn(detections[d], camera_pose, intr);
        return tracks_;
    }

    const std::vector<TrackedObstacle>& tracks() const { return tracks_; }
    const TrackerConfig& config() const { return cfg_; }
    const KalmanParams& kalman_params() const { return kalman_; }

private:
    void observe_size(TrackedObstacle& t, const ObstacleBox& det, const Pose& camera_pose,
                      const CameraIntrinsics& intr) {
        if (t.size_locked) return;
        if (!box_fully_in_fov(det, camera_pose, intr, kFovMarginPx)) {
            t.sizes.clear();
            return;
        }
        t.sizes.push_back(det.size);
        if (static_cast<int>(t.sizes.size()) == cfg_.size_lock_frames) {
            Eigen::Vector3d mean = Eigen::Vector3d::Zero();
            for (const Eigen::Vector3d& s : t.sizes) mean += s;
            t.locked_size = mean / static_cast<double>(t.sizes.size());
            t.size_locked = true;
            t.sizes.clear();
        }
    }

    void classify(TrackedObstacle& t) {
        t.continuity = std::nullopt;
        if (static_cast<int>(t.centers.size()) == cfg_.history_frames + 1) {
            const std::vector<Eigen::Vector3d> hist(t.centers.begin(), t.centers.end());
            t.continuity = continuity_coefficient(hist, cfg_.continuity_span);
        }
        const double speed = std::hypot(t.kf.x[2], t.kf.x[3]);
        const bool vote = t.continuity.has_value() &&
                          *t.continuity >= cfg_.continuity_threshold &&
                          speed >= cfg_.dynamic_velocity_min;
        t.votes.push_back(vote);
        while (static_cast<int>(t.votes.size()) > cfg_.vote_window) t.votes.pop_front();
        int dynamic_votes = 0;
        for (bool v : t.votes) dynamic_votes += v ? 1 : 0;
        t.dynamic = dynamic_votes >= cfg_.vote_threshold;
    }

    void update_track(TrackedObstacle& t, const ObstacleBox& det, const Pose& camera_pose,
                      const CameraIntrinsics& intr) {
        Eigen::Vector4d z;
        z << det.center.x(), det.center.y(), (det.center.x() - t.last_meas_center.x()) / cfg_.dt,
            (det.center.y() - t.last_meas_center.y()) / cfg_.dt;
        kalman_step(t.kf, kalman_, z);
        t.last_meas_center = det.center;
        t.misses = 0;
        t.age++;
        observe_size(t, det, camera_pose, intr);
        t.box.frame = Frame::Map;
        t.box.center = {t.kf.x[0], t.kf.x[1], det.center.z()};
        t.box.size = t.size_locked ? t.locked_size : det.size;
        t.box.depth = det.depth;
        t.centers.push_back(t.box.center);
        while (static_cast<int>(t.centers.size()) > cfg_.history_frames + 1) t.centers.pop_front();
        classify(t);
    }

    void spawn(const ObstacleBox& det, const Pose& camera_pose, const CameraIntrinsics& intr) {
        TrackedObstacle t;
        t.id = next_id_++;
        t.kf.x << det.center.x(), det.center.y(), 0.0, 0.0;
        t.kf.P = Eigen::Matrix4d::Identity();
        t.box = det;
        t.last_meas_center = det.center;
        t.age = 1;
        t.centers.push_back(det.center);
        observe_size(t, det, camera_pose, intr);
        if (t.size_locked) t.box.size = t.locked_size;
        t.votes.push_back(false);
        tracks_.push_back(std::move(t));
    }

    TrackerConfig cfg_;
    KalmanParams kalman_;
    std::vector<TrackedObstacle> tracks_;
    int next_id_ = 0;
};

}  // namespace dynamap
