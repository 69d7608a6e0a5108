#pragma once

#include <dynamap/occupancy.hpp>
#include <dynamap/predictor.hpp>
#include <dynamap/tracker.hpp>
#include <dynamap/umap.hpp>

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace dynamap {

/// Simulated camera frame-rate, run length, and depth sensor noise model.
struct SimParams {
    double dt = 1.0 / 30.0;
    double duration = 10.0;        // s
    uint64_t seed = 1;
    double noise_sigma0 = 0.01;    // m of depth noise at zero range
    double noise_sigma1 = 0.0019;  // m of depth noise per squared meter of range
    double dropout = 0.02;         // probability a valid pixel reads invalid
    int integration_stride = 2;    // pixel subsampling when integrating depth

    void validate() const {
        if (dt <= 0.0) throw std::invalid_argument("SimParams: dt must be > 0");
        if (duration < dt) throw std::invalid_argument("SimParams: duration shorter than a frame");
        if (noise_sigma0 < 0.0 || noise_sigma1 < 0.0)
            throw std::invalid_argument("SimParams: noise sigmas must be >= 0");
        if (dropout < 0.0 || dropout >= 1.0)
            throw std::invalid_argument("SimParams: dropout must be in [0, 1)");
        if (integration_stride < 1)
            throw std::invalid_argument("SimParams: integration_stride must be >= 1");
    }
};

struct GridSpec {
    double resolution = 0.1;
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    Eigen::Vector3i dims = Eigen::Vector3i(10, 10, 10);

    OccupancyGrid make() const { return OccupancyGrid(resolution, origin, dims); }
};

/// Scripted moving obstacle: an axis-aligned box of fixed size whose center
/// follows piecewise-linear waypoints. It rests at the first waypoint before
/// its start time and at the last one after its end time.
struct AgentScript {
    Eigen::Vector3d size = Eigen::Vector3d(0.5, 0.5, 1.7);
    std::vector<double> times;
    std::vector<Eigen::Vector3d> positions;

    Eigen::Vector3d position_at(double t) const {
        if (t <= times.front()) return positions.front();
        if (t >= times.back()) return positions.back();
        size_t i = 1;
        while (times[i] < t) ++i;
        const double u = (t - times[i - 1]) / (times[i] - times[i - 1]);
        return positions[i - 1] + u * (positions[i] - positions[i - 1]);
    }

    Eigen::Vector3d velocity_at(double t) const {
        if (t < times.front() || t >= times.back()) return Eigen::Vector3d::Zero();
        size_t i = 1;
        while (times[i] <= t) ++i;
        return (positions[i] - positions[i - 1]) / (times[i] - times[i - 1]);
    }

    ObstacleBox box_at(double t) const {
        ObstacleBox b;
        b.frame = Frame::Map;
        b.center = position_at(t);
        b.size = size;
        return b;
    }
};

/// Camera body pose sample. Angles are radians; the body frame is
/// forward-left-up, rotated as yaw about z, then pitch about y, then roll
/// about x.
struct CameraWaypoint {
    double time = 0.0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    double yaw = 0.0;
    double pitch = 0.0;
    double roll = 0.0;
};

/// Fixed rotation from the camera optical frame (x right, y down, z forward)
/// to the camera body frame (x forward, y left, z up).
inline Eigen::Matrix3d camera_mount_rotation() {
    Eigen::Matrix3d m;
    m << 0, 0, 1,
        -1, 0, 0,
         0, -1, 0;
    return m;
}

inline Eigen::Matrix3d body_rotation(double yaw, double pitch, double roll) {
    return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
            Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
            Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
        .toRotationMatrix();
}

/// Complete simulated world: camera, static geometry, scripted agents, and
/// per-module parameter overrides.
struct Scenario {
    std::string name = "scenario";
    CameraIntrinsics camera{170.0, 170.0, 160.0, 120.0, 320, 240, 0.3, 8.0};
    SimParams sim;
    GridSpec grid;
    std::vector<ObstacleBox> static_boxes;
    std::vector<AgentScript> agents;
    std::vector<CameraWaypoint> camera_waypoints;

    DetectorConfig detector;
    RefineConfig refine;
    TrackerConfig tracker;
    MarkovParams markov;
    double kalman_q_pos = 0.01;
    double kalman_q_vel = 0.04;
    double kalman_r_pos = 0.04;
    double kalman_r_vel = 0.09;

    int frame_count() const {
        return static_cast<int>(std::floor(sim.duration / sim.dt + 1e-9));
    }
    double time_of(int frame) const { return frame * sim.dt; }

    /// Camera-to-map pose: waypoint positions are lerped, body orientations
    /// slerped, and the optical mount rotation appended.
    Pose camera_pose_at(double t) const {
        const auto body_pose = [&](const CameraWaypoint& w) {
            return std::make_pair(w.position, Eigen::Quaterniond(body_rotation(w.yaw, w.pitch, w.roll)));
        };
        Eigen::Vector3d pos;
        Eigen::Quaterniond q;
        if (t <= camera_waypoints.front().time || camera_waypoints.size() == 1) {
            std::tie(pos, q) = body_pose(camera_waypoints.front());
        } else if (t >= camera_waypoints.back().time) {
            std::tie(pos, q) = body_pose(camera_waypoints.back());
        } else {
            size_t i = 1;
            while (camera_waypoints[i].time < t) ++i;
            const CameraWaypoint& a = camera_waypoints[i - 1];
            const CameraWaypoint& b = camera_waypoints[i];
            const double u = (t - a.time) / (b.time - a.time);
            const auto [pa, qa] = body_pose(a);
            const auto [pb, qb] = body_pose(b);
            pos = pa + u * (pb - pa);
            q = qa.slerp(u, qb);
        }
        Pose p;
        p.translation = pos;
        p.rotation = q.toRotationMatrix() * camera_mount_rotation();
        return p;
    }

    void validate() const {
        camera.validate();
        sim.validate();
        detector.validate();
        refine.validate();
        tracker.validate();
        markov.validate();
        if (grid.resolution <= 0.0) throw std::invalid_argument("Scenario: grid resolution <= 0");
        if ((grid.dims.array() <= 0).any())
            throw std::invalid_argument("Scenario: grid dims must be positive");
        if (frame_count() < 1) throw std::invalid_argument("Scenario: no frames to simulate");
        if (camera_waypoints.empty())
            throw std::invalid_argument("Scenario: needs at least one camera waypoint");
        for (size_t i = 1; i < camera_waypoints.size(); ++i)
            if (camera_waypoints[i].time <= camera_waypoints[i - 1].time)
                throw std::invalid_argument("Scenario: camera waypoint times must increase");
        for (const AgentScript& a : agents) {
            if (a.times.empty()) throw std::invalid_argument("Scenario: agent has no waypoints");
            if ((a.size.array() <= 0.0).any())
                throw std::invalid_argument("Scenario: agent size must be positive");
            for (size_t i = 1; i < a.times.size(); ++i)
                if (a.times[i] <= a.times[i - 1])
                    throw std::invalid_argument("Scenario: agent waypoint times must increase");
        }
        for (const ObstacleBox& b : static_boxes)
            if ((b.size.array() <= 0.0).any())
                throw std::invalid_argument("Scenario: static box size must be positive");
        if (kalman_q_pos <= 0.0 || kalman_q_vel <= 0.0 || kalman_r_pos <= 0.0 ||
            kalman_r_vel <= 0.0)
            throw std::invalid_argument("Scenario: filter noise parameters must be > 0");
    }

    KalmanParams kalman_params() const {
        return KalmanParams::for_dt(sim.dt, kalman_q_pos, kalman_q_vel, kalman_r_pos,
                                    kalman_r_vel);
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] inline void parse_fail(int line_no, const std::string& what) {
    throw std::runtime_error("scenario line " + std::to_string(line_no) + ": " + what);
}

template <typename T>
T read_value(std::istringstream& in, int line_no, const char* key) {
    T v{};
    if (!(in >> v)) parse_fail(line_no, std::string("expected value for ") + key);
    return v;
}

inline Eigen::Vector3d read_vec3(std::istringstream& in, int line_no, const char* key) {
    Eigen::Vector3d v;
    if (!(in >> v.x() >> v.y() >> v.z()))
        parse_fail(line_no, std::string("expected three values for ") + key);
    return v;
}

}  // namespace detail

/// Section-based text format. `[section]` headers switch context; other
/// lines are `key value...` pairs. Repeating [static_box], [agent], or
/// [camera_waypoint] starts a new object. '#' lines are comments.
/// Applies onto an existing scenario, so a second file can override scalar
/// parameters; object sections always append. Does not validate.
inline void apply_scenario_text(Scenario& sc, std::istream& in) {
    using detail::parse_fail;
    using detail::read_value;
    using detail::read_vec3;
    enum class Section {
        None, Camera, Sim, Grid, StaticBox, Agent, CameraWaypoint,
        Detector, Refine, Tracker, Kalman, Markov
    };
    Section section = Section::None;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = detail::trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']') parse_fail(line_no, "unterminated section header");
            const std::string name = line.substr(1, line.size() - 2);
            if (name == "camera") section = Section::Camera;
            else if (name == "sim") section = Section::Sim;
            else if (name == "grid") section = Section::Grid;
            else if (name == "static_box") { section = Section::StaticBox; sc.static_boxes.emplace_back(); sc.static_boxes.back().frame = Frame::Map; }
            else if (name == "agent") { section = Section::Agent; sc.agents.emplace_back(); }
            else if (name == "camera_waypoint") { section = Section::CameraWaypoint; sc.camera_waypoints.emplace_back(); }
            else if (name == "detector") section = Section::Detector;
            else if (name == "refine") section = Section::Refine;
            else if (name == "tracker") section = Section::Tracker;
            else if (name == "kalman") section = Section::Kalman;
            else if (name == "markov") section = Section::Markov;
            else parse_fail(line_no, "unknown section [" + name + "]");
            continue;
        }
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        switch (section) {
            case Section::None:
                parse_fail(line_no, "key '" + key + "' outside any section");
            case Section::Camera: {
                CameraIntrinsics& c = sc.camera;
                if (key == "fx") c.fx = read_value<double>(ls, line_no, "fx");
                else if (key == "fy") c.fy = read_value<double>(ls, line_no, "fy");
                else if (key == "cx") c.cx = read_value<double>(ls, line_no, "cx");
                else if (key == "cy") c.cy = read_value<double>(ls, line_no, "cy");
                else if (key == "width") c.width = read_value<int>(ls, line_no, "width");
                else if (key == "height") c.height = read_value<int>(ls, line_no, "height");
                else if (key == "depth_min") c.depth_min = read_value<double>(ls, line_no, "depth_min");
                else if (key == "depth_max") c.depth_max = read_value<double>(ls, line_no, "depth_max");
                else parse_fail(line_no, "unknown camera key '" + key + "'");
                break;
            }
            case Section::Sim: {
                SimParams& s = sc.sim;
                if (key == "dt") s.dt = read_value<double>(ls, line_no, "dt");
                else if (key == "duration") s.duration = read_value<double>(ls, line_no, "duration");
                else if (key == "seed") s.seed = read_value<uint64_t>(ls, line_no, "seed");
                else if (key == "noise_sigma0") s.noise_sigma0 = read_value<double>(ls, line_no, "noise_sigma0");
                else if (key == "noise_sigma1") s.noise_sigma1 = read_value<double>(ls, line_no, "noise_sigma1");
                else if (key == "dropout") s.dropout = read_value<double>(ls, line_no, "dropout");
                else if (key == "integration_stride") s.integration_stride = read_value<int>(ls, line_no, "integration_stride");
                else parse_fail(line_no, "unknown sim key '" + key + "'");
                break;
            }
            case Section::Grid: {
                if (key == "resolution") sc.grid.resolution = read_value<double>(ls, line_no, "resolution");
                else if (key == "origin") sc.grid.origin = read_vec3(ls, line_no, "origin");
                else if (key == "dims") {
                    sc.grid.dims.x() = read_value<int>(ls, line_no, "dims");
                    sc.grid.dims.y() = read_value<int>(ls, line_no, "dims");
                    sc.grid.dims.z() = read_value<int>(ls, line_no, "dims");
                } else parse_fail(line_no, "unknown grid key '" + key + "'");
                break;
            }
            case Section::StaticBox: {
                ObstacleBox& b = sc.static_boxes.back();
                if (key == "center") b.center = read_vec3(ls, line_no, "center");
                else if (key == "size") b.size = read_vec3(ls, line_no, "size");
                else parse_fail(line_no, "unknown static_box key '" + key + "'");
                break;
            }
            case Section::Agent: {
                AgentScript& a = sc.agents.back();
                if (key == "size") a.size = read_vec3(ls, line_no, "size");
                else if (key == "waypoint") {
                    a.times.push_back(read_value<double>(ls, line_no, "waypoint"));
                    a.positions.push_back(read_vec3(ls, line_no, "waypoint"));
                } else parse_fail(line_no, "unknown agent key '" + key + "'");
                break;
            }
            case Section::CameraWaypoint: {
                CameraWaypoint& w = sc.camera_waypoints.back();
                if (key == "time") w.time = read_value<double>(ls, line_no, "time");
                else if (key == "position") w.position = read_vec3(ls, line_no, "position");
                else if (key == "yaw") w.yaw = read_value<double>(ls, line_no, "yaw");
                else if (key == "pitch") w.pitch = read_value<double>(ls, line_no, "pitch");
                else if (key == "roll") w.roll = read_value<double>(ls, line_no, "roll");
                else parse_fail(line_no, "unknown camera_waypoint key '" + key + "'");
                break;
            }
            case Section::Detector: {
                DetectorConfig& d = sc.detector;
                if (key == "bin_width") d.bin_width = read_value<double>(ls, line_no, "bin_width");
                else if (key == "count_threshold") d.count_threshold = read_value<int>(ls, line_no, "count_threshold");
                else if (key == "min_box_cols") d.min_box_cols = read_value<int>(ls, line_no, "min_box_cols");
                else if (key == "min_box_bins") d.min_box_bins = read_value<int>(ls, line_no, "min_box_bins");
                else if (key == "height_depth_tolerance") d.height_depth_tolerance = read_value<double>(ls, line_no, "height_depth_tolerance");
                else parse_fail(line_no, "unknown detector key '" + key + "'");
                break;
            }
            case Section::Refine: {
                if (key == "c_inflate") sc.refine.c_inflate = read_value<double>(ls, line_no, "c_inflate");
                else parse_fail(line_no, "unknown refine key '" + key + "'");
                break;
            }
            case Section::Tracker: {
                TrackerConfig& t = sc.tracker;
                if (key == "overlap_ratio_min") t.overlap_ratio_min = read_value<double>(ls, line_no, key.c_str());
                else if (key == "max_center_distance") t.max_center_distance = read_value<double>(ls, line_no, key.c_str());
                else if (key == "history_frames") t.history_frames = read_value<int>(ls, line_no, key.c_str());
                else if (key == "continuity_span") t.continuity_span = read_value<int>(ls, line_no, key.c_str());
                else if (key == "continuity_threshold") t.continuity_threshold = read_value<double>(ls, line_no, key.c_str());
                else if (key == "dynamic_velocity_min") t.dynamic_velocity_min = read_value<double>(ls, line_no, key.c_str());
                else if (key == "vote_window") t.vote_window = read_value<int>(ls, line_no, key.c_str());
                else if (key == "vote_threshold") t.vote_threshold = read_value<int>(ls, line_no, key.c_str());
                else if (key == "size_lock_frames") t.size_lock_frames = read_value<int>(ls, line_no, key.c_str());
                else parse_fail(line_no, "unknown tracker key '" + key + "'");
                break;
            }
            case Section::Kalman: {
                if (key == "q_pos") sc.kalman_q_pos = read_value<double>(ls, line_no, "q_pos");
                else if (key == "q_vel") sc.kalman_q_vel = read_value<double>(ls, line_no, "q_vel");
                else if (key == "r_pos") sc.kalman_r_pos = read_value<double>(ls, line_no, "r_pos");
                else if (key == "r_vel") sc.kalman_r_vel = read_value<double>(ls, line_no, "r_vel");
                else parse_fail(line_no, "unknown kalman key '" + key + "'");
                break;
            }
            case Section::Markov: {
                MarkovParams& m = sc.markov;
                if (key == "template_count") m.template_count = read_value<int>(ls, line_no, key.c_str());
                else if (key == "sigma_init") m.sigma_init = read_value<double>(ls, line_no, key.c_str());
                else if (key == "sigma_trans") m.sigma_trans = read_value<double>(ls, line_no, key.c_str());
                else if (key == "softmax_temperature") m.softmax_temperature = read_value<double>(ls, line_no, key.c_str());
                else if (key == "max_curvature") m.max_curvature = read_value<double>(ls, line_no, key.c_str());
                else if (key == "horizon") m.horizon = read_value<double>(ls, line_no, key.c_str());
                else if (key == "nominal_speed") m.nominal_speed = read_value<double>(ls, line_no, key.c_str());
                else if (key == "min_speed") m.min_speed = read_value<double>(ls, line_no, key.c_str());
                else parse_fail(line_no, "unknown markov key '" + key + "'");
                break;
            }
        }
    }
}

/// The tracker frame interval always follows the simulated one.
inline void finalize_scenario(Scenario& sc) {
    sc.tracker.dt = sc.sim.dt;
    sc.validate();
}

inline Scenario parse_scenario(std::istream& in) {
    Scenario sc;
    apply_scenario_text(sc, in);
    finalize_scenario(sc);
    return sc;
}

/// Layers a second scenario file on top of an already loaded one, then
/// re-validates. Used for parameter-override files.
inline void apply_scenario_overrides(Scenario& sc, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("apply_scenario_overrides: cannot open " + path);
    apply_scenario_text(sc, f);
    finalize_scenario(sc);
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_scenario: cannot open " + path);
    Scenario sc = parse_scenario(f);
    // Name from the file stem, used to label outputs.
    std::string stem = path;
    const auto slash = stem.find_last_of("/\\");
    if (slash != std::string::npos) stem = stem.substr(slash + 1);
    const auto dot = stem.find_last_of('.');
    if (dot != std::string::npos && dot > 0) stem = stem.substr(0, dot);
    sc.name = stem;
    return sc;
}

}  // namespace dynamap
