#include <dynamap/metrics.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

using namespace dynamap;

namespace {

/// Level camera at standing height looking along map +x over an 8 x 8 m area.
Scenario base_scenario() {
    Scenario sc;
    CameraWaypoint w;
    w.position = {0.0, 0.0, 1.2};
    sc.camera_waypoints.push_back(w);
    sc.grid.resolution = 0.1;
    sc.grid.origin = {0.0, -4.0, 0.0};
    sc.grid.dims = {80, 80, 30};
    return sc;
}

ObstacleBox map_box(const Eigen::Vector3d& center, const Eigen::Vector3d& size) {
    ObstacleBox b;
    b.frame = Frame::Map;
    b.center = center;
    b.size = size;
    return b;
}

/// Wall whose front face sits 3 m ahead and spans the whole field of view.
ObstacleBox full_view_wall() { return map_box({3.5, 0.0, 1.2}, {1.0, 8.0, 8.0}); }

Scenario single_walker_scenario() {
    Scenario sc = base_scenario();
    sc.sim.duration = 4.0;
    sc.sim.seed = 5;
    // Velocity pseudo-measurements from frame differences are far noisier at
    // 30 Hz than the default measurement covariance assumes; trust them less
    // and let the filter average instead.
    sc.kalman_q_vel = 0.05;
    sc.kalman_r_vel = 9.0;
    AgentScript a;
    a.size = {0.25, 0.5, 1.7};
    a.times = {0.0, 4.0};
    a.positions = {{4.5, -2.0, 0.85}, {4.5, 2.0, 0.85}};
    sc.agents.push_back(a);
    finalize_scenario(sc);
    return sc;
}

std::string records_text_without_timing(const RunRecords& rec) {
    std::ostringstream out;
    write_records(out, rec);
    std::istringstream in(out.str());
    std::string kept, line;
    while (std::getline(in, line))
        if (line.rfind("timing ", 0) != 0) kept += line + '\n';
    return kept;
}

std::string error_message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

FrameRecord scored_frame(int frame, const Eigen::Vector3d& agent_pos,
                         const Eigen::Vector3d& agent_vel, const Eigen::Vector3d& track_center,
                         const Eigen::Vector2d& track_vel, bool dynamic, bool collision_free) {
    FrameRecord f;
    f.frame = frame;
    f.time = 0.1 * frame;
    f.truth.push_back({agent_pos, agent_vel, {0.25, 0.5, 1.7}});
    TrackRecord t;
    t.id = 0;
    t.center = track_center;
    t.size = {0.25, 0.5, 1.7};
    t.velocity = track_vel;
    t.dynamic = dynamic;
    t.collision_free = collision_free;
    f.tracks.push_back(t);
    return f;
}

RunRecords scored_records(std::vector<FrameRecord> frames) {
    RunRecords rec;
    rec.scenario = "scored";
    rec.predictor = "markov";
    rec.seed = 1;
    rec.dt = 0.1;
    rec.frames = std::move(frames);
    return rec;
}

}  // namespace

TEST(Render, EmptySceneReadsInvalid) {
    const Scenario sc = base_scenario();
    const DepthImage img = render_depth_noiseless(sc.camera, sc.camera_pose_at(0.0), {});
    for (float d : img.data) ASSERT_EQ(d, 0.0f);
}

TEST(Render, FrontoParallelWallDepthIsExact) {
    const Scenario sc = base_scenario();
    const DepthImage img =
        render_depth_noiseless(sc.camera, sc.camera_pose_at(0.0), {full_view_wall()});
    // Every ray meets the x = 3 plane at camera depth exactly 3, independent
    // of the pixel direction, because depth is the camera-z component.
    for (int v = 0; v < img.intrinsics.height; ++v)
        for (int u = 0; u < img.intrinsics.width; ++u)
            ASSERT_EQ(img.at(u, v), 3.0f) << "pixel " << u << ' ' << v;
}

TEST(Render, BackProjectedPixelsLieOnBoxSurface) {
    const Scenario sc = base_scenario();
    const ObstacleBox box = map_box({4.0, 0.5, 1.0}, {1.0, 1.0, 1.0});
    const Pose pose = sc.camera_pose_at(0.0);
    const DepthImage img = render_depth_noiseless(sc.camera, pose, {box});
    int valid = 0;
    for (int v = 0; v < img.intrinsics.height; ++v) {
        for (int u = 0; u < img.intrinsics.width; ++u) {
            if (!img.valid(u, v)) continue;
            ++valid;
            const Eigen::Vector3d p =
                pose.apply(project_pixel_to_camera(u, v, img.at(u, v), sc.camera));
            // On the surface: inside the box on every axis, on a face in one.
            const Eigen::Vector3d slack =
                (p - box.center).cwiseAbs() - 0.5 * Eigen::Vector3d(box.size);
            ASSERT_LE(slack.maxCoeff(), 1e-5);
            ASSERT_GE(slack.maxCoeff(), -1e-5);
        }
    }
    EXPECT_GT(valid, 500);
}

TEST(Render, NoiseIsReproduciblePerFrameOnly) {
    Scenario sc = base_scenario();
    sc.static_boxes.push_back(full_view_wall());
    const DepthImage a = render_depth(sc, 5);
    const DepthImage b = render_depth(sc, 5);
    EXPECT_EQ(a.data, b.data);
    const DepthImage c = render_depth(sc, 6);
    EXPECT_NE(a.data, c.data);
}

TEST(Render, DropoutMatchesConfiguredRate) {
    Scenario sc = base_scenario();
    sc.static_boxes.push_back(full_view_wall());
    const DepthImage img = render_depth(sc, 0);
    int dropped = 0;
    for (float d : img.data) dropped += d == 0.0f ? 1 : 0;
    const double rate = static_cast<double>(dropped) / static_cast<double>(img.data.size());
    EXPECT_GT(rate, 0.012);
    EXPECT_LT(rate, 0.028);
}

TEST(Pipeline, StaticSceneNeverReportsDynamicTracks) {
    Scenario sc = base_scenario();
    sc.sim.duration = 3.0;
    sc.static_boxes.push_back(map_box({3.0, 0.5, 1.25}, {0.4, 0.4, 2.5}));
    finalize_scenario(sc);
    const PipelineResult result = run_pipeline(sc, PredictorKind::Markov);
    int frames_with_tracks = 0;
    for (const FrameRecord& f : result.records.frames) {
        frames_with_tracks += f.tracks.empty() ? 0 : 1;
        for (const TrackRecord& t : f.tracks) ASSERT_FALSE(t.dynamic) << "frame " << f.frame;
    }
    EXPECT_GT(frames_with_tracks, 50);
}

TEST(Pipeline, SingleWalkerYieldsOnePersistentDynamicTrack) {
    const Scenario sc = single_walker_scenario();
    const PipelineResult result = run_pipeline(sc, PredictorKind::Markov);
    const int warmup = sc.tracker.history_frames + sc.tracker.vote_window;
    int dynamic_id = -1;
    for (const FrameRecord& f : result.records.frames) {
        if (f.frame < warmup) continue;
        int dynamic_count = 0;
        for (const TrackRecord& t : f.tracks) {
            if (!t.dynamic) continue;
            ++dynamic_count;
            if (dynamic_id < 0) dynamic_id = t.id;
            ASSERT_EQ(t.id, dynamic_id) << "frame " << f.frame;
            const double err = (t.center.head<2>() - f.truth[0].position.head<2>()).norm();
            ASSERT_LT(err, 0.5) << "frame " << f.frame;
        }
        ASSERT_EQ(dynamic_count, 1) << "frame " << f.frame;
    }
    EXPECT_GE(dynamic_id, 0);
}

TEST(Metrics, PerfectTrackingScoresZeroError) {
    std::vector<FrameRecord> frames;
    for (int i = 0; i < 20; ++i) {
        const Eigen::Vector3d pos(2.0 + 0.1 * i, 0.0, 0.85);
        frames.push_back(scored_frame(i, pos, {1.0, 0.0, 0.0}, pos, {1.0, 0.0}, true, true));
    }
    const MetricsReport rep = evaluate(scored_records(std::move(frames)));
    EXPECT_EQ(rep.matched_samples, 20);
    EXPECT_EQ(rep.unmatched_dynamic_samples, 0);
    EXPECT_DOUBLE_EQ(rep.position_rmse, 0.0);
    EXPECT_DOUBLE_EQ(rep.velocity_rmse, 0.0);
    EXPECT_DOUBLE_EQ(rep.failure_ratio, 0.0);
    EXPECT_EQ(rep.true_dynamic, 20);
    EXPECT_EQ(rep.false_dynamic, 0);
    EXPECT_EQ(rep.false_static, 0);
    EXPECT_EQ(rep.true_static, 0);
}

TEST(Metrics, ConstantOffsetAppearsAsMeanError) {
    std::vector<FrameRecord> frames;
    for (int i = 0; i < 20; ++i) {
        const Eigen::Vector3d pos(2.0 + 0.1 * i, 0.0, 0.85);
        const Eigen::Vector3d off = pos + Eigen::Vector3d(0.1, 0.0, 0.0);
        frames.push_back(scored_frame(i, pos, {1.0, 0.0, 0.0}, off, {1.0, 0.0}, true, true));
    }
    const MetricsReport rep = evaluate(scored_records(std::move(frames)));
    EXPECT_NEAR(rep.position_mean_error, 0.1, 1e-12);
    EXPECT_NEAR(rep.position_rmse, 0.1, 1e-12);
    EXPECT_DOUBLE_EQ(rep.velocity_rmse, 0.0);
}

TEST(Metrics, FailureRatioCountsBlockedPredictions) {
    std::vector<FrameRecord> frames;
    for (int i = 0; i < 10; ++i) {
        const Eigen::Vector3d pos(2.0 + 0.1 * i, 0.0, 0.85);
        frames.push_back(scored_frame(i, pos, {1.0, 0.0, 0.0}, pos, {1.0, 0.0}, true, i >= 3));
    }
    const MetricsReport rep = evaluate(scored_records(std::move(frames)));
    EXPECT_EQ(rep.prediction_attempts, 10);
    EXPECT_EQ(rep.prediction_failures, 3);
    EXPECT_DOUBLE_EQ(rep.failure_ratio, 0.3);
}

TEST(Metrics, LabelConfusionAgainstTruthMotion) {
    const Eigen::Vector3d pos(3.0, 0.0, 0.85);
    const Eigen::Vector3d moving(1.0, 0.0, 0.0);
    const Eigen::Vector3d still = Eigen::Vector3d::Zero();
    std::vector<FrameRecord> frames;
    frames.push_back(scored_frame(0, pos, moving, pos, {1.0, 0.0}, true, true));
    frames.push_back(scored_frame(1, pos, moving, pos, {1.0, 0.0}, false, true));
    frames.push_back(scored_frame(2, pos, still, pos, {1.0, 0.0}, true, true));
    frames.push_back(scored_frame(3, pos, still, pos, {0.0, 0.0}, false, true));
    const MetricsReport rep = evaluate(scored_records(std::move(frames)));
    EXPECT_EQ(rep.true_dynamic, 1);
    EXPECT_EQ(rep.false_static, 1);
    EXPECT_EQ(rep.false_dynamic, 1);
    EXPECT_EQ(rep.true_static, 1);
}

TEST(Metrics, FarDynamicTrackCountsUnmatched) {
    const Eigen::Vector3d pos(3.0, 0.0, 0.85);
    const Eigen::Vector3d far = pos + Eigen::Vector3d(0.0, 2.0, 0.0);
    std::vector<FrameRecord> frames;
    frames.push_back(scored_frame(0, pos, {1.0, 0.0, 0.0}, far, {1.0, 0.0}, true, true));
    const MetricsReport rep = evaluate(scored_records(std::move(frames)));
    EXPECT_EQ(rep.matched_samples, 0);
    EXPECT_EQ(rep.unmatched_dynamic_samples, 1);
    EXPECT_DOUBLE_EQ(rep.position_rmse, 0.0);
    // Unmatched means no agent nearby, so the dynamic label is wrong.
    EXPECT_EQ(rep.false_dynamic, 1);
}

TEST(Records, RoundTripPreservesEveryField) {
    const Scenario sc = base_scenario();
    RunRecords rec;
    rec.scenario = "roundtrip";
    rec.predictor = "linear";
    rec.seed = 42;
    rec.dt = 1.0 / 30.0;
    FrameRecord f;
    f.frame = 3;
    f.time = 0.1;
    f.camera_pose = sc.camera_pose_at(0.0);
    f.truth.push_back({{1.0 / 3.0, std::sqrt(2.0), 0.85}, {0.3, -0.7, 0.0}, {0.25, 0.5, 1.7}});
    f.detections.push_back({{2.0 / 3.0, -1.0 / 7.0, 0.9}, {0.3, 0.4, 1.6}, true});
    TrackRecord t;
    t.id = 4;
    t.center = {4.0 / 3.0, 0.1, 0.8};
    t.size = {0.3, 0.5, 1.7};
    t.velocity = {0.9, -1.0 / 9.0};
    t.dynamic = true;
    t.size_locked = true;
    t.has_continuity = true;
    t.continuity = 0.97;
    t.template_index = 2;
    t.collision_free = false;
    t.reset = true;
    t.predicted = {{1.0, 2.0, 3.0}, {4.0 / 7.0, 5.0, 6.0}};
    f.tracks.push_back(t);
    f.render_ms = 1.25;
    f.detection_ms = 2.5;
    f.tracking_ms = 0.125;
    f.prediction_ms = 0.0625;
    FrameRecord empty;
    empty.frame = 4;
    empty.time = 2.0 / 15.0;
    empty.camera_pose = f.camera_pose;
    rec.frames = {f, empty};

    std::stringstream ss;
    write_records(ss, rec);
    const RunRecords back = read_records(ss);

    ASSERT_EQ(back.scenario, rec.scenario);
    ASSERT_EQ(back.predictor, rec.predictor);
    ASSERT_EQ(back.seed, rec.seed);
    ASSERT_EQ(back.dt, rec.dt);
    ASSERT_EQ(back.frames.size(), rec.frames.size());
    for (size_t i = 0; i < rec.frames.size(); ++i) {
        const FrameRecord& a = rec.frames[i];
        const FrameRecord& b = back.frames[i];
        EXPECT_EQ(b.frame, a.frame);
        EXPECT_EQ(b.time, a.time);
        EXPECT_EQ(b.camera_pose.translation, a.camera_pose.translation);
        EXPECT_EQ(b.camera_pose.rotation, a.camera_pose.rotation);
        ASSERT_EQ(b.truth.size(), a.truth.size());
        for (size_t j = 0; j < a.truth.size(); ++j) {
            EXPECT_EQ(b.truth[j].position, a.truth[j].position);
            EXPECT_EQ(b.truth[j].velocity, a.truth[j].velocity);
            EXPECT_EQ(b.truth[j].size, a.truth[j].size);
        }
        ASSERT_EQ(b.detections.size(), a.detections.size());
        for (size_t j = 0; j < a.detections.size(); ++j) {
            EXPECT_EQ(b.detections[j].center, a.detections[j].center);
            EXPECT_EQ(b.detections[j].size, a.detections[j].size);
            EXPECT_EQ(b.detections[j].refined, a.detections[j].refined);
        }
        ASSERT_EQ(b.tracks.size(), a.tracks.size());
        for (size_t j = 0; j < a.tracks.size(); ++j) {
            const TrackRecord& ta = a.tracks[j];
            const TrackRecord& tb = b.tracks[j];
            EXPECT_EQ(tb.id, ta.id);
            EXPECT_EQ(tb.center, ta.center);
            EXPECT_EQ(tb.size, ta.size);
            EXPECT_EQ(tb.velocity, ta.velocity);
            EXPECT_EQ(tb.dynamic, ta.dynamic);
            EXPECT_EQ(tb.size_locked, ta.size_locked);
            EXPECT_EQ(tb.has_continuity, ta.has_continuity);
            EXPECT_EQ(tb.continuity, ta.continuity);
            EXPECT_EQ(tb.template_index, ta.template_index);
            EXPECT_EQ(tb.collision_free, ta.collision_free);
            EXPECT_EQ(tb.reset, ta.reset);
            ASSERT_EQ(tb.predicted.size(), ta.predicted.size());
            for (size_t k = 0; k < ta.predicted.size(); ++k)
                EXPECT_EQ(tb.predicted[k], ta.predicted[k]);
        }
        EXPECT_EQ(b.render_ms, a.render_ms);
        EXPECT_EQ(b.detection_ms, a.detection_ms);
        EXPECT_EQ(b.tracking_ms, a.tracking_ms);
        EXPECT_EQ(b.prediction_ms, a.prediction_ms);
    }
}

TEST(Records, RepeatRunsDifferOnlyInTimingLines) {
    Scenario sc = single_walker_scenario();
    sc.sim.duration = 1.5;
    finalize_scenario(sc);
    const PipelineResult a = run_pipeline(sc, PredictorKind::Markov);
    const PipelineResult b = run_pipeline(sc, PredictorKind::Markov);
    EXPECT_EQ(records_text_without_timing(a.records), records_text_without_timing(b.records));
}

TEST(Scenario, CameraPoseInterpolatesBetweenWaypoints) {
    Scenario sc = base_scenario();
    sc.camera_waypoints.clear();
    CameraWaypoint w0;
    w0.time = 0.0;
    w0.position = {0.0, 0.0, 1.0};
    CameraWaypoint w1;
    w1.time = 2.0;
    w1.position = {1.0, 0.0, 1.0};
    w1.yaw = std::numbers::pi / 2.0;
    sc.camera_waypoints = {w0, w1};

    const Pose mid = sc.camera_pose_at(1.0);
    EXPECT_LT((mid.translation - Eigen::Vector3d(0.5, 0.0, 1.0)).norm(), 1e-12);
    const Eigen::Matrix3d expected =
        body_rotation(std::numbers::pi / 4.0, 0.0, 0.0) * camera_mount_rotation();
    EXPECT_LT((mid.rotation - expected).cwiseAbs().maxCoeff(), 1e-12);

    // Clamped to the end waypoints outside the scripted interval.
    EXPECT_EQ(sc.camera_pose_at(-1.0).translation, w0.position);
    EXPECT_LT((sc.camera_pose_at(5.0).translation - w1.position).norm(), 1e-15);
}

TEST(Scenario, AgentRestsOutsideItsSchedule) {
    AgentScript a;
    a.times = {1.0, 3.0};
    a.positions = {{0.0, 0.0, 0.85}, {2.0, 0.0, 0.85}};
    EXPECT_EQ(a.position_at(0.0), a.positions.front());
    EXPECT_EQ(a.velocity_at(0.5), Eigen::Vector3d::Zero());
    EXPECT_LT((a.position_at(2.0) - Eigen::Vector3d(1.0, 0.0, 0.85)).norm(), 1e-12);
    EXPECT_LT((a.velocity_at(2.0) - Eigen::Vector3d(1.0, 0.0, 0.0)).norm(), 1e-12);
    EXPECT_EQ(a.position_at(4.0), a.positions.back());
    EXPECT_EQ(a.velocity_at(3.0), Eigen::Vector3d::Zero());
}

TEST(Scenario, ParseErrorsCarryLineNumbers) {
    const auto parse = [](const std::string& text) {
        return [text] {
            std::istringstream in(text);
            Scenario sc;
            apply_scenario_text(sc, in);
        };
    };
    std::string msg = error_message_of(parse("[sim]\ndt 0.1\nbogus_key 1\n"));
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("unknown sim key"), std::string::npos) << msg;

    msg = error_message_of(parse("center 1 2 3\n"));
    EXPECT_NE(msg.find("line 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("outside any section"), std::string::npos) << msg;

    msg = error_message_of(parse("[sim\n"));
    EXPECT_NE(msg.find("unterminated"), std::string::npos) << msg;

    msg = error_message_of(parse("[agent]\nwaypoint 1.0 2.0\n"));
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("expected three values"), std::string::npos) << msg;

    msg = error_message_of(parse("[warp]\n"));
    EXPECT_NE(msg.find("unknown section"), std::string::npos) << msg;
}

TEST(Scenario, OverrideFileLayersOnTopOfBase) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "dynamap_scenario_overrides";
    fs::create_directories(dir);
    const fs::path base = dir / "base.scn";
    const fs::path extra = dir / "extra.scn";
    {
        std::ofstream f(base);
        f << "[camera_waypoint]\ntime 0\nposition 0 0 1.2\nyaw 0\n"
          << "[sim]\ndt 0.05\nduration 2.0\nseed 3\n"
          << "[grid]\nresolution 0.1\norigin 0 -4 0\ndims 80 80 30\n"
          << "[static_box]\ncenter 2 0 1\nsize 1 1 2\n";
    }
    {
        std::ofstream f(extra);
        f << "[sim]\nseed 9\ndt 0.1\n"
          << "[static_box]\ncenter 4 0 1\nsize 1 1 2\n"
          << "[tracker]\nvote_window 7\n";
    }
    Scenario sc = load_scenario(base.string());
    EXPECT_EQ(sc.name, "base");
    EXPECT_EQ(sc.sim.seed, 3u);
    EXPECT_DOUBLE_EQ(sc.tracker.dt, 0.05);
    ASSERT_EQ(sc.static_boxes.size(), 1u);

    apply_scenario_overrides(sc, extra.string());
    EXPECT_EQ(sc.sim.seed, 9u);
    EXPECT_DOUBLE_EQ(sc.sim.dt, 0.1);
    EXPECT_DOUBLE_EQ(sc.tracker.dt, 0.1);  // follows the overridden frame interval
    EXPECT_EQ(sc.tracker.vote_window, 7);
    EXPECT_DOUBLE_EQ(sc.sim.duration, 2.0);
    ASSERT_EQ(sc.static_boxes.size(), 2u);
    EXPECT_EQ(sc.static_boxes[1].center, Eigen::Vector3d(4.0, 0.0, 1.0));
}

TEST(Scenario, BundledScenarioFilesLoadAndValidate) {
    const std::string dir = DYNAMAP_SCENARIO_DIR;
    const Scenario a = load_scenario(dir + "/golden_a.scn");
    const Scenario b = load_scenario(dir + "/golden_b.scn");
    const Scenario b640 = load_scenario(dir + "/golden_b_640.scn");
    const Scenario c = load_scenario(dir + "/golden_c.scn");
    EXPECT_EQ(a.name, "golden_a");
    EXPECT_GE(a.frame_count(), 300);
    EXPECT_EQ(b.frame_count(), 330);
    EXPECT_EQ(b640.camera.width, 640);
    EXPECT_EQ(b640.camera.height, 480);
    EXPECT_GE(c.frame_count(), 300);
    EXPECT_EQ(c.camera_waypoints.size(), 2u);
    EXPECT_EQ(b.agents.size(), 3u);
    EXPECT_EQ(b.static_boxes.size(), 2u);
}
