#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "softworld/rng.hpp"

namespace softworld::sim {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm2() const { return dot(*this); }
    double norm() const;
};

enum class Task { rolling, cutting, gathering, shaping };
enum class ToolKind { rolling_pin, knife, dual_flats, rolling_ball };
enum class InitShape { ball, two_balls, cuboid, random_scatter };

std::string to_string(Task t);
std::string to_string(ToolKind t);
std::string to_string(InitShape s);
Task task_from_string(const std::string& s);
ToolKind tool_from_string(const std::string& s);
InitShape shape_from_string(const std::string& s);

/// Rigid tool primitive; geometry is fixed per kind, poses move it around.
struct ToolSpec {
    ToolKind kind = ToolKind::rolling_pin;
    // capsule (rolling pin)
    double capsule_radius = 0.04;
    double capsule_half_len = 0.20;
    // thin box (knife)
    Vec3 knife_half_extents{0.010, 0.16, 0.12};
    // paired boxes (dual flats)
    Vec3 flat_half_extents{0.010, 0.10, 0.08};
    double flat_min_separation = 0.0;
    double flat_max_separation = 0.6;
    // sphere (rolling ball)
    double ball_radius = 0.06;

    int action_dim() const { return kind == ToolKind::dual_flats ? 7 : 3; }
    /// Per-action-coordinate pose bounds (lo, hi).
    std::array<std::pair<double, double>, 7> action_bounds() const;

    static ToolSpec for_kind(ToolKind kind);
    static ToolSpec for_task(Task task);
    static ToolKind tool_for_task(Task task);
    /// Initial shapes this tool explores/trains on.
    static bool pairing_allowed(ToolKind tool, InitShape shape);
};

/// Tool placement. 3-dim tools use q[0..2] (center); dual flats use
/// q[0..2] (flat A center), q[3..5] (flat B center), q[6] (shared yaw).
struct ToolPose {
    std::array<double, 7> q{};
    int dim = 3;

    static ToolPose single(Vec3 center);
    static ToolPose flats(Vec3 a, Vec3 b, double yaw);
    Vec3 center_a() const { return {q[0], q[1], q[2]}; }
    Vec3 center_b() const { return {q[3], q[4], q[5]}; }
    double yaw() const { return q[6]; }
};

struct MetricWeights {
    double w_iou = 1.0;
    double w_sdf = 1.0;
    double w_density = 0.5;
};

struct SimConfig {
    double gravity = 9.8;          // m/s^2, along -z
    int substeps = 10;             // per waypoint
    double damping = 0.98;         // velocity retained per substep
    double dt = 0.001;             // seconds per substep
    double xsph = 0.5;             // neighbor velocity smoothing (shear viscosity)
    double friction = 0.9;         // tangential anti-slip between neighbors
    double shape_hold = 0.9;       // neighborhood-translation matching strength
    double sleep_speed = 0.05;     // supported particles below this speed freeze
    double rest_spacing = 0.02;    // meters; also the particle lattice pitch
    double relaxation = 0.8;       // fraction of the spacing error corrected per pass
    int relax_iterations = 3;      // Jacobi passes per substep
    double cohesion_band = 1.30;   // neighbors within band*rest pull back to rest
    int grid_res = 32;             // metric grids are grid_res^3
    double occupancy_threshold = 0.5;  // splatted mass that marks a cell occupied
    Vec3 workspace_lo{0.0, 0.0, 0.0};
    Vec3 workspace_hi{1.0, 1.0, 1.0};
    MetricWeights weights;
};

struct ParticleSystem {
    std::vector<Vec3> pos;
    std::vector<Vec3> vel;
    double rest_spacing = 0.02;

    int64_t count() const { return static_cast<int64_t>(pos.size()); }
};

struct Grid3 {
    int res = 0;
    std::vector<double> v;  // res^3, index (i + res*(j + res*k))

    static Grid3 zeros(int res) { return Grid3{res, std::vector<double>(static_cast<size_t>(res) * res * res, 0.0)}; }
    double& at(int i, int j, int k) { return v[static_cast<size_t>(i + res * (j + res * k))]; }
    double at(int i, int j, int k) const { return v[static_cast<size_t>(i + res * (j + res * k))]; }
};

struct TargetState {
    std::vector<uint8_t> occupancy;  // res^3 booleans
    Grid3 density;
    Grid3 sdf;  // signed distance to the target surface, meters; negative inside
};

struct MetricReport {
    double iou = 0.0;
    double density_score = 0.0;  // <= 0
    double sdf_score = 0.0;      // <= 0
    double reward = 0.0;
};

struct ResetResult {
    ParticleSystem particles;
    ToolPose tool_pose;
    TargetState target;
    std::vector<Vec3> target_particles;  // synthetic fill the target was rasterized from
};

// ---------------------------------------------------------------------------
// Core operations
// ---------------------------------------------------------------------------

/// Deterministic episode start: jittered-lattice particle fill of the initial
/// shape, tool parked above the dough, task target built and rasterized.
/// Throws ConfigError for pairings outside the exploration table.
ResetResult reset(Task task, InitShape shape, uint64_t seed, const SimConfig& config);

/// Runs the substep loop for each waypoint: gravity, tool-contact projection,
/// plastic position relaxation, damping, ground/workspace clamp. Updates
/// `pose` to the last waypoint. Returns true if any particle touched the tool.
/// Throws SimulationError (with the step index) if a NaN appears.
bool step(ParticleSystem& ps, const ToolSpec& tool, ToolPose& pose,
          std::span<const ToolPose> waypoints, const SimConfig& config);

MetricReport compute_metrics(const ParticleSystem& ps, const TargetState& target,
                             const MetricWeights& weights, const SimConfig& config);

/// Boundary particles: neighbor count within 1.5*rest_spacing below the 40th
/// percentile. Throws DegenerateInputError if fewer than `min_points` result.
std::vector<Vec3> surface_particles(const ParticleSystem& ps, int min_points = 30);

// ---------------------------------------------------------------------------
// Building blocks (exposed for tests and the metric suite)
// ---------------------------------------------------------------------------

/// Signed distance from point to the tool at the given pose (negative inside).
double tool_sdf(const ToolSpec& tool, const ToolPose& pose, const Vec3& p);
/// Outward surface normal (unit) at p.
Vec3 tool_normal(const ToolSpec& tool, const ToolPose& pose, const Vec3& p);

Grid3 rasterize_density(std::span<const Vec3> points, const SimConfig& config);
std::vector<uint8_t> occupancy_from_density(const Grid3& density, double threshold);
double iou_occupancy(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);
/// Exact Euclidean signed distance grid from an occupancy mask.
Grid3 sdf_from_occupancy(const std::vector<uint8_t>& occ, int res, double cell_size);
double sample_trilinear(const Grid3& grid, const Vec3& p, const SimConfig& config);

/// Convenience wrapper owning episode state.
class Environment {
public:
    Environment(Task task, InitShape shape, uint64_t seed, SimConfig config);

    void reset(uint64_t seed);
    /// Steps through waypoints; returns contact flag.
    bool step_waypoints(std::span<const ToolPose> waypoints);
    MetricReport metrics() const;

    Task task() const { return task_; }
    InitShape shape() const { return shape_; }
    const SimConfig& config() const { return config_; }
    const ToolSpec& tool() const { return tool_; }
    const ToolPose& tool_pose() const { return pose_; }
    const ParticleSystem& particles() const { return particles_; }
    const TargetState& target() const { return target_; }
    const std::vector<Vec3>& target_particles() const { return target_particles_; }

private:
    Task task_;
    InitShape shape_;
    SimConfig config_;
    ToolSpec tool_;
    ToolPose pose_;
    ParticleSystem particles_;
    TargetState target_;
    std::vector<Vec3> target_particles_;
};

/// Trajectory dump: per-step particle positions as float32 binary plus a JSON
/// manifest ("manifest.json" and "step_NNNNN.bin" under dir).
void dump_snapshot(const std::filesystem::path& dir, int step_index,
                   std::span<const Vec3> positions);
void write_snapshot_manifest(const std::filesystem::path& dir, int steps, int64_t particle_count,
                             const std::string& task, uint64_t seed);

}  // namespace softworld::sim
