#pragma once

#include <dynamap/occupancy.hpp>

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

namespace dynamap {

/// One motion template: a cubic lateral offset y(x) in the track-local frame
/// (x forward along the heading, y to the left) plus its nominal arc length.
/// `points` is the sampled polyline starting at x = 0.
struct PathTemplate {
    Eigen::Vector4d coeffs = Eigen::Vector4d::Zero();  // y = c0 + c1 x + c2 x^2 + c3 x^3
    double arc_length = 0.0;
    std::vector<Eigen::Vector3d> points;
};

struct PathLibraryConfig {
    int count = 5;               // number of templates, must be odd and >= 3
    double max_curvature = 0.5;  // 1/m of the sharpest template
    double horizon = 3.0;        // s of lookahead the templates cover
    double nominal_speed = 1.0;  // m/s assumed when sizing template arc length
    double sample_step = 0.03;   // m between polyline samples

    double arc_length() const { return horizon * nominal_speed; }

    void validate() const {
        if (count < 3 || count % 2 == 0)
            throw std::invalid_argument("PathLibraryConfig: count must be odd and >= 3");
        if (horizon <= 0.0 || nominal_speed <= 0.0)
            throw std::invalid_argument("PathLibraryConfig: horizon and nominal_speed must be > 0");
        if (sample_step <= 0.0 || sample_step > arc_length())
            throw std::invalid_argument("PathLibraryConfig: invalid sample_step");
        if (max_curvature < 0.0)
            throw std::invalid_argument("PathLibraryConfig: max_curvature must be >= 0");
        // Headings past a quarter turn would make the lateral offset
        // multivalued in x, so the cubic form could not represent the path.
        if (max_curvature * arc_length() >= 1.5707)
            throw std::invalid_argument(
                "PathLibraryConfig: max_curvature * arc_length must stay below a quarter turn");
    }
};

namespace detail {

inline double eval_cubic(const Eigen::Vector4d& c, double x) {
    return ((c[3] * x + c[2]) * x + c[1]) * x + c[0];
}

inline double eval_cubic_slope(const Eigen::Vector4d& c, double x) {
    return (3.0 * c[3] * x + 2.0 * c[2]) * x + c[1];
}

/// Least-squares cubic y(x) through a constant-curvature arc of the given
/// length, constrained to start at the origin heading along +x.
inline Eigen::Vector4d fit_arc_cubic(double curvature, double arc_length) {
    Eigen::Vector4d coeffs = Eigen::Vector4d::Zero();
    if (std::abs(curvature) < 1e-12) return coeffs;
    constexpr int kSamples = 200;
    Eigen::MatrixXd basis(kSamples, 2);
    Eigen::VectorXd target(kSamples);
    for (int k = 0; k < kSamples; ++k) {
        const double s = arc_length * (k + 1) / kSamples;
        const double x = std::sin(curvature * s) / curvature;
        const double y = (1.0 - std::cos(curvature * s)) / curvature;
        basis(k, 0) = x * x;
        basis(k, 1) = x * x * x;
        target(k) = y;
    }
    const Eigen::Vector2d sol = basis.colPivHouseholderQr().solve(target);
    coeffs[2] = sol[0];
    coeffs[3] = sol[1];
    return coeffs;
}

}  // namespace detail

/// Samples the cubic as a polyline of the given total arc length, with
/// segments of roughly `step` length.
inline std::vector<Eigen::Vector3d> sample_cubic_path(const Eigen::Vector4d& coeffs,
                                                      double arc_length, double step) {
    if (arc_length <= 0.0 || step <= 0.0)
        throw std::invalid_argument("sample_cubic_path: arc_length and step must be > 0");
    std::vector<Eigen::Vector3d> pts;
    double x = 0.0;
    double y = detail::eval_cubic(coeffs, 0.0);
    pts.emplace_back(x, y, 0.0);
    double s = 0.0;
    while (s < arc_length) {
        const double slope = detail::eval_cubic_slope(coeffs, x);
        const double dx = step / std::sqrt(1.0 + slope * slope);
        const double x_next = x + dx;
        const double y_next = detail::eval_cubic(coeffs, x_next);
        const double seg = std::hypot(x_next - x, y_next - y);
        if (s + seg >= arc_length) {
            const double frac = (arc_length - s) / seg;
            pts.emplace_back(x + (x_next - x) * frac, y + (y_next - y) * frac, 0.0);
            break;
        }
        s += seg;
        x = x_next;
        y = y_next;
        pts.emplace_back(x, y, 0.0);
    }
    return pts;
}

/// Templates ordered from the sharpest left turn to the sharpest right turn
/// with the exactly straight one in the middle. Curvatures are spaced
/// uniformly and right templates are exact mirrors of left ones.
struct PathLibrary {
    std::vector<PathTemplate> templates;
    double horizon = 3.0;      // s the templates are meant to cover
    double sample_step = 0.03; // m between polyline samples

    void validate() const {
        const int l = static_cast<int>(templates.size());
        if (l < 3 || l % 2 == 0)
            throw std::invalid_argument("PathLibrary: template count must be odd and >= 3");
        if (horizon <= 0.0) throw std::invalid_argument("PathLibrary: horizon must be > 0");
        for (const PathTemplate& t : templates)
            if (t.arc_length <= 0.0 || t.points.size() < 2)
                throw std::invalid_argument("PathLibrary: degenerate template");
    }

    static PathLibrary build(const PathLibraryConfig& cfg) {
        cfg.validate();
        PathLibrary lib;
        lib.horizon = cfg.horizon;
        lib.sample_step = cfg.sample_step;
        lib.templates.resize(cfg.count);
        for (int j = 0; j < cfg.count; ++j) {
            PathTemplate& tpl = lib.templates[j];
            tpl.arc_length = cfg.arc_length();
            if (2 * j < cfg.count - 1) {
                const double curvature =
                    cfg.max_curvature * (1.0 - 2.0 * j / (cfg.count - 1.0));
                tpl.coeffs = detail::fit_arc_cubic(curvature, tpl.arc_length);
            } else if (2 * j > cfg.count - 1) {
                tpl.coeffs = -lib.templates[cfg.count - 1 - j].coeffs;  // exact mirror
            }  // middle template stays straight
            tpl.points = sample_cubic_path(tpl.coeffs, tpl.arc_length, cfg.sample_step);
        }
        return lib;
    }
};

/// Text form, one template per line: c0 c1 c2 c3 arc_length, ordered from
/// the sharpest left turn to the sharpest right turn.
inline PathLibrary load_path_library(const std::string& path, double horizon = 3.0,
                                     double sample_step = 0.03) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_path_library: cannot open " + path);
    PathLibrary lib;
    lib.horizon = horizon;
    lib.sample_step = sample_step;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream in(line);
        PathTemplate tpl;
        if (!(in >> tpl.coeffs[0] >> tpl.coeffs[1] >> tpl.coeffs[2] >> tpl.coeffs[3] >>
              tpl.arc_length))
            throw std::runtime_error("load_path_library: bad line " + std::to_string(line_no) +
                                     " in " + path);
        if (tpl.arc_length <= 0.0)
            throw std::runtime_error("load_path_library: non-positive arc length at line " +
                                     std::to_string(line_no));
        tpl.points = sample_cubic_path(tpl.coeffs, tpl.arc_length, sample_step);
        lib.templates.push_back(std::move(tpl));
    }
    lib.validate();
    return lib;
}

inline void save_path_library(const std::string& path, const PathLibrary& lib) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_path_library: cannot open " + path);
    f.precision(17);
    for (const PathTemplate& tpl : lib.templates)
        f << tpl.coeffs[0] << ' ' << tpl.coeffs[1] << ' ' << tpl.coeffs[2] << ' ' << tpl.coeffs[3]
          << ' ' << tpl.arc_length << '\n';
}

struct MarkovParams {
    int template_count = 5;           // odd, >= 3
    double sigma_init = 1.0;          // kernel width of the initial distribution, index units
    double sigma_trans = 1.0;         // kernel width of the transition rows, index units
    double softmax_temperature = 1.0; // 1/m scaling of collision distances
    double max_curvature = 0.5;       // 1/m, sharpest library template
    double horizon = 3.0;             // s of lookahead
    double nominal_speed = 1.0;       // m/s assumed when building templates
    double min_speed = 0.05;          // m/s below which the heading is unreliable

    void validate() const {
        if (template_count < 3 || template_count % 2 == 0)
            throw std::invalid_argument("MarkovParams: template_count must be odd and >= 3");
        if (sigma_init <= 0.0 || sigma_trans <= 0.0)
            throw std::invalid_argument("MarkovParams: sigmas must be > 0");
        if (softmax_temperature <= 0.0)
            throw std::invalid_argument("MarkovParams: softmax_temperature must be > 0");
        if (horizon <= 0.0) throw std::invalid_argument("MarkovParams: horizon must be > 0");
        if (nominal_speed <= 0.0)
            throw std::invalid_argument("MarkovParams: nominal_speed must be > 0");
        if (min_speed < 0.0) throw std::invalid_argument("MarkovParams: min_speed must be >= 0");
    }

    PathLibraryConfig library_config() const {
        PathLibraryConfig cfg;
        cfg.count = template_count;
        cfg.max_curvature = max_curvature;
        cfg.horizon = horizon;
        cfg.nominal_speed = nominal_speed;
        return cfg;
    }
};

/// Gaussian kernel over template indices centered on the middle one,
/// normalized to sum 1.
inline Eigen::VectorXd build_initial_distribution(int count, double sigma) {
    if (count < 1 || count % 2 == 0)
        throw std::invalid_argument("build_initial_distribution: count must be odd");
    const double mid = (count - 1) / 2.0;
    Eigen::VectorXd w(count);
    for (int i = 0; i < count; ++i) {
        const double d = i - mid;
        w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    return w / w.sum();
}

/// Row-stochastic transition matrix; each row is a Gaussian kernel centered
/// on the diagonal, so a track prefers staying near its current template.
inline Eigen::MatrixXd build_transition_matrix(int count, double sigma) {
    if (count < 1 || count % 2 == 0)
        throw std::invalid_argument("build_transition_matrix: count must be odd");
    Eigen::MatrixXd m(count, count);
    for (int r = 0; r < count; ++r) {
        for (int c = 0; c < count; ++c) {
            const double d = c - r;
            m(r, c) = std::exp(-d * d / (2.0 * sigma * sigma));
        }
        m.row(r) /= m.row(r).sum();
    }
    return m;
}

inline Eigen::VectorXd softmax_scaled(const Eigen::VectorXd& values, double temperature) {
    const Eigen::ArrayXd scaled = temperature * values.array();
    const Eigen::ArrayXd e = (scaled - scaled.maxCoeff()).exp();
    return e / e.sum();
}

/// Template polyline placed at a track: scaled, rotated to the heading, and
/// translated to the track position (z is carried from the position).
inline std::vector<Eigen::Vector3d> place_template(const std::vector<Eigen::Vector3d>& points,
                                                   const Eigen::Vector3d& position, double heading,
                                                   double scale = 1.0) {
    const double c = std::cos(heading), s = std::sin(heading);
    std::vector<Eigen::Vector3d> out;
    out.reserve(points.size());
    for (const Eigen::Vector3d& p : points)
        out.emplace_back(position.x() + scale * (c * p.x() - s * p.y()),
                         position.y() + scale * (s * p.x() + c * p.y()), position.z());
    return out;
}

inline double polyline_length(const std::vector<Eigen::Vector3d>& pts) {
    double len = 0.0;
    for (size_t i = 0; i + 1 < pts.size(); ++i) len += (pts[i + 1] - pts[i]).norm();
    return len;
}

/// Per-template collision distances raycast through the map (templates at
/// their nominal scale, aligned to the track velocity), squashed by a
/// softmax: templates with more free space ahead get proportionally more
/// probability mass. Below min_speed the heading is undefined and the
/// result is uniform.
inline Eigen::VectorXd environment_probability(const OccupancyGrid& grid, const PathLibrary& lib,
                                               const Eigen::Vector3d& position,
                                               const Eigen::Vector2d& velocity,
                                               double temperature, double min_speed = 0.05) {
    const int l = static_cast<int>(lib.templates.size());
    if (velocity.norm() < min_speed) return Eigen::VectorXd::Constant(l, 1.0 / l);
    const double heading = std::atan2(velocity.y(), velocity.x());
    Eigen::VectorXd dist(l);
    for (int i = 0; i < l; ++i)
        dist[i] = raycast_collision_distance(
            grid, place_template(lib.templates[i].points, position, heading));
    return softmax_scaled(dist, temperature);
}

struct PredictResult {
    Eigen::VectorXd distribution;
    bool reset = false;  // the propagated mass vanished and was re-seeded
};

/// One Markov update: propagate the template distribution through the
/// transition matrix, weight by the environment probabilities, renormalize.
/// A vanishing product re-seeds from the initial distribution.
inline PredictResult predict_step(const Eigen::VectorXd& distribution,
                                  const Eigen::MatrixXd& transition,
                                  const Eigen::VectorXd& environment,
                                  const Eigen::VectorXd& initial) {
    const Eigen::VectorXd propagated = transition.transpose() * distribution;
    const Eigen::VectorXd combined = propagated.cwiseProduct(environment);
    const double total = combined.sum();
    if (!(total > 0.0)) return {initial, true};
    return {combined / total, false};
}

struct TrajectoryPrediction {
    std::vector<Eigen::Vector3d> points;  // map frame
    int template_index = -1;
    double scale = 0.0;  // template scaling, speed * horizon / arc length
    bool collision_free = true;
};

/// Most probable template, scaled so its arc length covers the distance the
/// track would travel over the library horizon at its current speed, placed
/// at the track. Near-zero speed degenerates to staying in place.
inline TrajectoryPrediction predicted_trajectory(const OccupancyGrid& grid,
                                                 const PathLibrary& lib,
                                                 const Eigen::VectorXd& distribution,
                                                 const Eigen::Vector3d& position,
                                                 const Eigen::Vector2d& velocity,
                                                 double min_speed = 0.05) {
    if (distribution.size() != static_cast<int>(lib.templates.size()))
        throw std::invalid_argument("predicted_trajectory: distribution/library size mismatch");
    TrajectoryPrediction out;
    distribution.maxCoeff(&out.template_index);
    const double speed = velocity.norm();
    if (speed < min_speed) {
        out.points = {position};
        out.collision_free = !grid.is_occupied_at(position);
        return out;
    }
    const PathTemplate& tpl = lib.templates[out.template_index];
    out.scale = speed * lib.horizon / tpl.arc_length;
    const double heading = std::atan2(velocity.y(), velocity.x());
    out.points = place_template(tpl.points, position, heading, out.scale);
    const double len = polyline_length(out.points);
    out.collision_free = raycast_collision_distance(grid, out.points) >= len - 1e-9;
    return out;
}

/// Straight-line baseline predictor covering the same horizon.
inline std::vector<Eigen::Vector3d> linear_trajectory(const Eigen::Vector3d& position,
                                                      const Eigen::Vector2d& velocity,
                                                      double horizon, double min_speed = 0.05) {
    if (velocity.norm() < min_speed) return {position};
    return {position, position + Eigen::Vector3d(velocity.x(), velocity.y(), 0.0) * horizon};
}

struct PredictorFrameOutput {
    Eigen::VectorXd environment;
    Eigen::VectorXd distribution;
    bool reset = false;
    TrajectoryPrediction trajectory;
};

/// Keeps one template distribution per tracked obstacle and advances it every
/// frame from the occupancy map around the track. Distributions start from
/// the initial kernel and are dropped when a track is forgotten.
class MarkovPredictor {
public:
    MarkovPredictor() : MarkovPredictor(MarkovParams{}) {}
    explicit MarkovPredictor(const MarkovParams& params)
        : MarkovPredictor(params, PathLibrary::build(params.library_config())) {}
    MarkovPredictor(const MarkovParams& params, PathLibrary library)
        : params_(params), library_(std::move(library)) {
        params_.validate();
        library_.validate();
        if (static_cast<int>(library_.templates.size()) != params_.template_count)
            throw std::invalid_argument("MarkovPredictor: library size != template_count");
        initial_ = build_initial_distribution(params_.template_count, params_.sigma_init);
        transition_ = build_transition_matrix(params_.template_count, params_.sigma_trans);
    }

    PredictorFrameOutput step(const OccupancyGrid& grid, int track_id,
                              const Eigen::Vector3d& position, const Eigen::Vector2d& velocity) {
        PredictorFrameOutput out;
        out.environment = environment_probability(grid, library_, position, velocity,
                                                  params_.softmax_temperature, params_.min_speed);
        auto [it, inserted] = state_.try_emplace(track_id, initial_);
        const PredictResult r = predict_step(it->second, transition_, out.environment, initial_);
        it->second = r.distribution;
        out.distribution = r.distribution;
        out.reset = r.reset;
        out.trajectory = predicted_trajectory(grid, library_, r.distribution, position, velocity,
                                              params_.min_speed);
        return out;
    }

    void forget(int track_id) { state_.erase(track_id); }
    void clear() { state_.clear(); }

    /// Drops chain state for every track not in the given set, so retired
    /// tracks and tracks that reverted to static restart from the initial
    /// distribution if they turn dynamic again.
    void retain(const std::vector<int>& live_ids) {
        std::erase_if(state_, [&](const auto& kv) {
            return std::find(live_ids.begin(), live_ids.end(), kv.first) == live_ids.end();
        });
    }

    std::optional<Eigen::VectorXd> distribution(int track_id) const {
        const auto it = state_.find(track_id);
        if (it == state_.end()) return std::nullopt;
        return it->second;
    }

    const MarkovParams& params() const { return params_; }
    const PathLibrary& library() const { return library_; }
    const Eigen::VectorXd& initial_distribution() const { return initial_; }
    const Eigen::MatrixXd& transition_matrix() const { return transition_; }

private:
    MarkovParams params_;
    PathLibrary library_;
    Eigen::VectorXd initial_;
    Eigen::MatrixXd transition_;
    std::map<int, Eigen::VectorXd> state_;
};

}  // namespace dynamap
