#pragma once

#include <dynamap/pipeline.hpp>

namespace dynamap {

struct MetricsConfig {
    // A dynamic track is scored against the nearest scripted agent if their
    // horizontal center distance is below this.
    double match_distance = 1.0;
    // Ground-truth label: an agent moving at least this fast counts dynamic.
    double truth_dynamic_speed = 0.3;

    void validate() const {
        if (match_distance <= 0.0)
            throw std::invalid_argument("MetricsConfig: match_distance must be > 0");
        if (truth_dynamic_speed < 0.0)
            throw std::invalid_argument("MetricsConfig: truth_dynamic_speed must be >= 0");
    }
};

/// Accuracy, prediction reliability, label confusion, and runtime cost of one
/// pipeline run. Error statistics cover dynamic tracks matched to an agent;
/// runtime portions split the pipeline stage total (rendering excluded).
struct MetricsReport {
    std::string scenario;
    std::string predictor;
    uint64_t seed = 0;
    int frames = 0;

    int matched_samples = 0;
    int unmatched_dynamic_samples = 0;
    double position_rmse = 0.0;
    double position_mean_error = 0.0;
    double velocity_rmse = 0.0;
    double velocity_mean_error = 0.0;

    int prediction_attempts = 0;
    int prediction_failures = 0;
    double failure_ratio = 0.0;

    // Track-frame label counts against the ground-truth motion state.
    int true_dynamic = 0;
    int false_dynamic = 0;
    int false_static = 0;
    int true_static = 0;

    double render_ms_mean = 0.0;
    double detection_ms_mean = 0.0;
    double tracking_ms_mean = 0.0;
    double prediction_ms_mean = 0.0;
    double detection_portion = 0.0;   // percent of the stage total
    double tracking_portion = 0.0;
    double prediction_portion = 0.0;
};

/// Scores recorded pipeline output against the scripted ground truth. Every
/// track-frame is matched to the nearest agent in the horizontal plane;
/// matches farther than the gate count as matching no agent (and therefore a
/// static part of the scene).
inline MetricsReport evaluate(const RunRecords& rec, const MetricsConfig& cfg = {}) {
    cfg.validate();
    MetricsReport rep;
    rep.scenario = rec.scenario;
    rep.predictor = rec.predictor;
    rep.seed = rec.seed;
    rep.frames = static_cast<int>(rec.frames.size());
    double pos_sq = 0.0, pos_abs = 0.0, vel_sq = 0.0, vel_abs = 0.0;
    double render_total = 0.0, detection_total = 0.0, tracking_total = 0.0,
           prediction_total = 0.0;
    for (const FrameRecord& f : rec.frames) {
        render_total += f.render_ms;
        detection_total += f.detection_ms;
        tracking_total += f.tracking_ms;
        prediction_total += f.prediction_ms;
        for (const TrackRecord& t : f.tracks) {
            const AgentTruth* nearest = nullptr;
            double nearest_dist = std::numeric_limits<double>::infinity();
            for (const AgentTruth& a : f.truth) {
                const double d = (t.center.head<2>() - a.position.head<2>()).norm();
                if (d < nearest_dist) {
                    nearest_dist = d;
                    nearest = &a;
                }
            }
            const bool matched = nearest != nullptr && nearest_dist <= cfg.match_distance;
            const bool truth_dynamic =
                matched && nearest->velocity.head<2>().norm() >= cfg.truth_dynamic_speed;
            if (t.dynamic) {
                rep.prediction_attempts++;
                if (!t.collision_free) rep.prediction_failures++;
                if (matched) {
                    rep.matched_samples++;
                    const double vel_err =
                        (t.velocity - nearest->velocity.head<2>()).norm();
                    pos_sq += nearest_dist * nearest_dist;
                    pos_abs += nearest_dist;
                    vel_sq += vel_err * vel_err;
                    vel_abs += vel_err;
                } else {
                    rep.unmatched_dynamic_samples++;
                }
            }
            if (truth_dynamic)
                t.dynamic ? rep.true_dynamic++ : rep.false_static++;
            else
                t.dynamic ? rep.false_dynamic++ : rep.true_static++;
        }
    }
    if (rep.matched_samples > 0) {
        rep.position_rmse = std::sqrt(pos_sq / rep.matched_samples);
        rep.position_mean_error = pos_abs / rep.matched_samples;
        rep.velocity_rmse = std::sqrt(vel_sq / rep.matched_samples);
        rep.velocity_mean_error = vel_abs / rep.matched_samples;
    }
    if (rep.prediction_attempts > 0)
        rep.failure_ratio =
            static_cast<double>(rep.prediction_failures) / rep.prediction_attempts;
    if (rep.frames > 0) {
        rep.render_ms_mean = render_total / rep.frames;
        rep.detection_ms_mean = detection_total / rep.frames;
        rep.tracking_ms_mean = tracking_total / rep.frames;
        rep.prediction_ms_mean = prediction_total / rep.frames;
    }
    const double stage_total = detection_total + tracking_total + prediction_total;
    if (stage_total > 0.0) {
        rep.detection_portion = 100.0 * detection_total / stage_total;
        rep.tracking_portion = 100.0 * tracking_total / stage_total;
        rep.prediction_portion = 100.0 * prediction_total / stage_total;
    }
    return rep;
}

/// Machine-readable key,value metrics. Runtime statistics vary between runs
/// and are deliberately left out: two runs with the same scenario and seed
/// must produce identical files.
inline void write_metrics_csv(std::ostream& out, const MetricsReport& r) {
    out << "# dynamap-metrics 1\n";
    out << std::setprecision(17);
    out << "scenario," << r.scenario << '\n';
    out << "predictor," << r.predictor << '\n';
    out << "seed," << r.seed << '\n';
    out << "frames," << r.frames << '\n';
    out << "matched_samples," << r.matched_samples << '\n';
    out << "unmatched_dynamic_samples," << r.unmatched_dynamic_samples << '\n';
    out << "position_rmse," << r.position_rmse << '\n';
    out << "position_mean_error," << r.position_mean_error << '\n';
    out << "velocity_rmse," << r.velocity_rmse << '\n';
    out << "velocity_mean_error," << r.velocity_mean_error << '\n';
    out << "prediction_attempts," << r.prediction_attempts << '\n';
    out << "prediction_failures," << r.prediction_failures << '\n';
    out << "failure_ratio," << r.failure_ratio << '\n';
    out << "true_dynamic," << r.true_dynamic << '\n';
    out << "false_dynamic," << r.false_dynamic << '\n';
    out << "false_static," << r.false_static << '\n';
    out << "true_static," << r.true_static << '\n';
}

inline void write_metrics_summary(std::ostream& out, const MetricsReport& r) {
    out << std::setprecision(6);
    out << "scenario " << r.scenario << " (" << r.predictor << " predictor, seed " << r.seed
        << ", " << r.frames << " frames)\n";
    out << "tracking accuracy over " << r.matched_samples << " matched dynamic samples";
    if (r.unmatched_dynamic_samples > 0)
        out << " (" << r.unmatched_dynamic_samples << " unmatched)";
    out << "\n";
    out << "  position rmse  " << r.position_rmse << " m (mean " << r.position_mean_error
        << " m)\n";
    out << "  velocity rmse  " << r.velocity_rmse << " m/s (mean " << r.velocity_mean_error
        << " m/s)\n";
    out << "prediction failures " << r.prediction_failures << " / " << r.prediction_attempts
        << " (ratio " << r.failure_ratio << ")\n";
    out << "labels: dynamic right " << r.true_dynamic << ", dynamic wrong " << r.false_dynamic
        << ", static wrong " << r.false_static << ", static right " << r.true_static << '\n';
    out << "runtime per frame (render " << r.render_ms_mean << " ms excluded from portions)\n";
    out << "  detection  " << r.detection_ms_mean << " ms  " << r.detection_portion << "%\n";
    out << "  tracking   " << r.tracking_ms_mean << " ms  " << r.tracking_portion << "%\n";
    out << "  prediction " << r.prediction_ms_mean << " ms  " << r.prediction_portion << "%\n";
}

inline void save_metrics_csv(const std::string& path, const MetricsReport& r) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_metrics_csv: cannot open " + path);
    write_metrics_csv(f, r);
}

struct PredictorComparison {
    MetricsReport markov;
    MetricsReport linear;
};

/// Runs the identical scenario (same seed, same frames) once per predictor
/// and scores both. The predictor never feeds back into tracking, so the two
/// runs see identical detections and tracks and the failure ratios are
/// directly comparable.
inline PredictorComparison compare_predictors(const Scenario& sc,
                                              const MetricsConfig& cfg = {}) {
    PredictorComparison out;
    out.markov = evaluate(run_pipeline(sc, PredictorKind::Markov).records, cfg);
    out.linear = evaluate(run_pipeline(sc, PredictorKind::Linear).records, cfg);
    return out;
}

}  // namespace dynamap
