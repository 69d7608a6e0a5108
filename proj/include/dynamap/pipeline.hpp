#pragma once

#include <dynamap/render.hpp>

#include <chrono>
#include <iomanip>

namespace dynamap {

enum class PredictorKind { Markov, Linear };

inline const char* to_string(PredictorKind k) {
    return k == PredictorKind::Markov ? "markov" : "linear";
}

/// Ground-truth state of one scripted agent at a frame.
struct AgentTruth {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
    Eigen::Vector3d size = Eigen::Vector3d::Zero();
};

/// One refined detection handed to the tracker.
struct DetectionRecord {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Vector3d size = Eigen::Vector3d::Zero();
    bool refined = false;  // occupancy refinement produced this box
};

/// Tracker and predictor outputs for one track at one frame.
struct TrackRecord {
    int id = -1;
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Vector3d size = Eigen::Vector3d::Zero();
    Eigen::Vector2d velocity = Eigen::Vector2d::Zero();
    bool dynamic = false;
    bool size_locked = false;
    bool has_continuity = false;
    double continuity = 0.0;
    // Prediction fields, meaningful only for dynamic tracks.
    int template_index = -1;  // -1 also marks the straight-line predictor
    bool collision_free = true;
    bool reset = false;
    std::vector<Eigen::Vector3d> predicted;  // map-frame polyline, empty when static
};

struct FrameRecord {
    int frame = 0;
    double time = 0.0;
    Pose camera_pose;
    std::vector<AgentTruth> truth;
    std::vector<DetectionRecord> detections;
    std::vector<TrackRecord> tracks;
    // Wall-clock cost of the frame, split by stage. Rendering simulates the
    // sensor and is kept out of the pipeline stage totals.
    double render_ms = 0.0;
    double detection_ms = 0.0;   // depth integration, proposal extraction, refinement
    double tracking_ms = 0.0;    // association, filtering, classification, map cleaning
    double prediction_ms = 0.0;  // template distribution updates and trajectory choice
};

struct RunRecords {
    std::string scenario;
    std::string predictor;  // "markov" or "linear"
    uint64_t seed = 0;
    double dt = 0.0;
    std::vector<FrameRecord> frames;
};

struct PipelineResult {
    RunRecords records;
    OccupancyGrid grid;
};

namespace detail {

inline bool polyline_collision_free(const OccupancyGrid& grid,
                                    const std::vector<Eigen::Vector3d>& pts) {
    if (pts.empty()) return true;
    if (pts.size() == 1) return !grid.is_occupied_at(pts.front());
    const double len = polyline_length(pts);
    return raycast_collision_distance(grid, pts) >= len - 1e-9;
}

}  // namespace detail

/// Runs the full perception stack over every frame of the scenario: render
/// the depth image, integrate it into the occupancy grid, extract and refine
/// obstacle proposals, track and classify them, carve dynamic obstacles out
/// of the grid, and predict a trajectory for each dynamic track with the
/// chosen predictor. Returns the per-frame records and the final grid.
inline PipelineResult run_pipeline(const Scenario& sc,
                                   PredictorKind kind = PredictorKind::Markov) {
    sc.validate();
    PipelineResult result{{sc.name, to_string(kind), sc.sim.seed, sc.sim.dt, {}},
                          sc.grid.make()};
    OccupancyGrid& grid = result.grid;
    Tracker tracker(sc.tracker, sc.kalman_params());
    MarkovPredictor markov(sc.markov);
    const PathLibrary& library = markov.library();
    CleanHistory clean_history;
    result.records.frames.reserve(sc.frame_count());

    using clock = std::chrono::steady_clock;
    const auto ms_between = [](clock::time_point a, clock::time_point b) {
        return std::chrono::duration<double, std::milli>(b - a).count();
    };

    for (int frame = 0; frame < sc.frame_count(); ++frame) {
        try {
            FrameRecord rec;
            rec.frame = frame;
            rec.time = sc.time_of(frame);
            rec.camera_pose = sc.camera_pose_at(rec.time);
            for (const AgentScript& a : sc.agents)
                rec.truth.push_back({a.position_at(rec.time), a.velocity_at(rec.time), a.size});

            const auto t0 = clock::now();
            const DepthImage img = render_depth(sc, rec.time, rec.camera_pose);
            const auto t1 = clock::now();

            integrate_depth(grid, img, rec.camera_pose, sc.sim.integration_stride);
            const std::vector<ObstacleBox> raw =
                detect_raw_boxes(img, rec.camera_pose, sc.detector);
            std::vector<ObstacleBox> refined;
            refined.reserve(raw.size());
            for (const ObstacleBox& box : raw) {
                const RefinedBox r = refine_box(grid, clean_history, box, sc.refine);
                refined.push_back(r.box);
                rec.detections.push_back({r.box.center, r.box.size, r.refined});
            }
            const auto t2 = clock::now();

            const std::vector<TrackedObstacle>& tracks =
                tracker.step(refined, rec.camera_pose, sc.camera);
            // Cleaning runs every frame so clean-history entries age out even
            // when nothing is currently dynamic.
            std::vector<ObstacleBox> dynamic_boxes;
            for (const TrackedObstacle& t : tracks)
                if (t.dynamic) dynamic_boxes.push_back(t.box.inflated(sc.refine.c_inflate));
            clean_dynamic_region(grid, clean_history, dynamic_boxes, frame);
            const auto t3 = clock::now();

            std::vector<int> dynamic_ids;
            for (const TrackedObstacle& t : tracks) {
                TrackRecord tr;
                tr.id = t.id;
                tr.center = t.box.center;
                tr.size = t.box.size;
                tr.velocity = {t.kf.x[2], t.kf.x[3]};
                tr.dynamic = t.dynamic;
                tr.size_locked = t.size_locked;
                tr.has_continuity = t.continuity.has_value();
                tr.continuity = t.continuity.value_or(0.0);
                if (t.dynamic) {
                    dynamic_ids.push_back(t.id);
                    if (kind == PredictorKind::Markov) {
                        const PredictorFrameOutput out =
                            markov.step(grid, t.id, t.box.center, tr.velocity);
                        tr.template_index = out.trajectory.template_index;
                        tr.collision_free = out.trajectory.collision_free;
                        tr.reset = out.reset;
                        tr.predicted = out.trajectory.points;
                    } else {
                        tr.predicted = linear_trajectory(t.box.center, tr.velocity,
                                                         library.horizon, sc.markov.min_speed);
                        tr.collision_free = detail::polyline_collision_free(grid, tr.predicted);
                    }
                }
                rec.tracks.push_back(std::move(tr));
            }
            markov.retain(dynamic_ids);
            const auto t4 = clock::now();

            rec.render_ms = ms_between(t0, t1);
            rec.detection_ms = ms_between(t1, t2);
            rec.tracking_ms = ms_between(t2, t3);
            rec.prediction_ms = ms_between(t3, t4);
            result.records.frames.push_back(std::move(rec));
        } catch (const std::exception& e) {
            throw std::runtime_error("frame " + std::to_string(frame) + ": " + e.what());
        }
    }
    return result;
}

/// Text serialization of run records. Lines starting with "timing" carry the
/// wall-clock stage costs and are the only part that varies between repeated
/// runs of the same scenario and seed.
inline void write_records(std::ostream& out, const RunRecords& rec) {
    out << "dynamap-records 1\n";
    out << "scenario " << rec.scenario << '\n';
    out << "predictor " << rec.predictor << '\n';
    out << "seed " << rec.seed << '\n';
    out << std::setprecision(17);
    out << "dt " << rec.dt << '\n';
    out << "frames " << rec.frames.size() << '\n';
    const auto v3 = [&out](const Eigen::Vector3d& v) {
        out << v.x() << ' ' << v.y() << ' ' << v.z();
    };
    for (const FrameRecord& f : rec.frames) {
        out << "frame " << f.frame << ' ' << f.time << '\n';
        out << "camera ";
        v3(f.camera_pose.translation);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) out << ' ' << f.camera_pose.rotation(r, c);
        out << '\n';
        out << "truth " << f.truth.size() << '\n';
        for (const AgentTruth& a : f.truth) {
            out << "agent ";
            v3(a.position);
            out << ' ';
            v3(a.velocity);
            out << ' ';
            v3(a.size);
            out << '\n';
        }
        out << "detections " << f.detections.size() << '\n';
        for (const DetectionRecord& d : f.detections) {
            out << "detection ";
            v3(d.center);
            out << ' ';
            v3(d.size);
            out << ' ' << d.refined << '\n';
        }
        out << "tracks " << f.tracks.size() << '\n';
        for (const TrackRecord& t : f.tracks) {
            out << "track " << t.id << ' ';
            v3(t.center);
            out << ' ';
            v3(t.size);
            out << ' ' << t.velocity.x() << ' ' << t.velocity.y() << ' ' << t.dynamic << ' '
                << t.size_locked << ' ' << t.has_continuity << ' ' << t.continuity << ' '
                << t.template_index << ' ' << t.collision_free << ' ' << t.reset << ' '
                << t.predicted.size();
            for (const Eigen::Vector3d& p : t.predicted) {
                out << ' ';
                v3(p);
            }
            out << '\n';
        }
        out << "timing " << f.render_ms << ' ' << f.detection_ms << ' ' << f.tracking_ms << ' '
            << f.prediction_ms << '\n';
    }
}

inline RunRecords read_records(std::istream& in) {
    const auto fail = [](const std::string& what) {
        throw std::runtime_error("read_records: " + what);
    };
    std::string line;
    if (!std::getline(in, line) || line != "dynamap-records 1") fail("bad header");
    RunRecords rec;
    size_t frame_count = 0;
    const auto expect = [&](std::istringstream& ls, const char* tag) {
        std::string word;
        if (!(ls >> word) || word != tag) fail(std::string("expected '") + tag + "'");
    };
    const auto read_line = [&](const char* tag) {
        if (!std::getline(in, line)) fail(std::string("truncated before '") + tag + "'");
        std::istringstream ls(line);
        expect(ls, tag);
        return ls;
    };
    {
        auto ls = read_line("scenario");
        ls >> rec.scenario;
    }
    {
        auto ls = read_line("predictor");
        ls >> rec.predictor;
    }
    {
        auto ls = read_line("seed");
        if (!(ls >> rec.seed)) fail("bad seed");
    }
    {
        auto ls = read_line("dt");
        if (!(ls >> rec.dt)) fail("bad dt");
    }
    {
        auto ls = read_line("frames");
        if (!(ls >> frame_count)) fail("bad frame count");
    }
    const auto v3 = [&](std::istringstream& ls, Eigen::Vector3d& v) {
        if (!(ls >> v.x() >> v.y() >> v.z())) fail("bad vector");
    };
    rec.frames.resize(frame_count);
    for (FrameRecord& f : rec.frames) {
        {
            auto ls = read_line("frame");
            if (!(ls >> f.frame >> f.time)) fail("bad frame line");
        }
        {
            auto ls = read_line("camera");
            v3(ls, f.camera_pose.translation);
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    if (!(ls >> f.camera_pose.rotation(r, c))) fail("bad camera rotation");
        }
        {
            auto ls = read_line("truth");
            size_t n = 0;
            if (!(ls >> n)) fail("bad truth count");
            f.truth.resize(n);
        }
        for (AgentTruth& a : f.truth) {
            auto ls = read_line("agent");
            v3(ls, a.position);
            v3(ls, a.velocity);
            v3(ls, a.size);
        }
        {
            auto ls = read_line("detections");
            size_t n = 0;
            if (!(ls >> n)) fail("bad detection count");
            f.detections.resize(n);
        }
        for (DetectionRecord& d : f.detections) {
            auto ls = read_line("detection");
            v3(ls, d.center);
            v3(ls, d.size);
            if (!(ls >> d.refined)) fail("bad detection line");
        }
        {
            auto ls = read_line("tracks");
            size_t n = 0;
            if (!(ls >> n)) fail("bad track count");
            f.tracks.resize(n);
        }
        for (TrackRecord& t : f.tracks) {
            auto ls = read_line("track");
            size_t points = 0;
            if (!(ls >> t.id)) fail("bad track id");
            v3(ls, t.center);
            v3(ls, t.size);
            if (!(ls >> t.velocity.x() >> t.velocity.y() >> t.dynamic >> t.size_locked >>
                  t.has_continuity >> t.continuity >> t.template_index >> t.collision_free >>
                  t.reset >> points))
                fail("bad track line");
            t.predicted.resize(points);
            for (Eigen::Vector3d& p : t.predicted) v3(ls, p);
        }
        {
            auto ls = read_line("timing");
            if (!(ls >> f.render_ms >> f.detection_ms >> f.tracking_ms >> f.prediction_ms))
                fail("bad timing line");
        }
    }
    return rec;
}

inline void save_records(const std::string& path, const RunRecords& rec) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_records: cannot open " + path);
    write_records(f, rec);
}

inline RunRecords load_records(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_records: cannot open " + path);
    return read_records(f);
}

}  // namespace dynamap
