#include "softworld/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "softworld/errors.hpp"

namespace softworld::sim {

double Vec3::norm() const { return std::sqrt(norm2()); }

namespace {

Vec3 rotate_z(const Vec3& p, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * p.x - s * p.y, s * p.x + c * p.y, p.z};
}

double box_sdf_local(const Vec3& p, const Vec3& h) {
    const Vec3 q{std::fabs(p.x) - h.x, std::fabs(p.y) - h.y, std::fabs(p.z) - h.z};
    const Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
    const double outside = qp.norm();
    const double inside = std::min(std::max(q.x, std::max(q.y, q.z)), 0.0);
    return outside + inside;
}

double capsule_sdf(const Vec3& p, const Vec3& center, double half_len, double radius) {
    // axis along y
    const double dy = std::clamp(p.y - center.y, -half_len, half_len);
    const Vec3 closest{center.x, center.y + dy, center.z};
    return (p - closest).norm() - radius;
}

}  // namespace

std::string to_string(Task t) {
    switch (t) {
        case Task::rolling: return "rolling";
        case Task::cutting: return "cutting";
        case Task::gathering: return "gathering";
        case Task::shaping: return "shaping";
    }
    return "?";
}

std::string to_string(ToolKind t) {
    switch (t) {
        case ToolKind::rolling_pin: return "rolling_pin";
        case ToolKind::knife: return "knife";
        case ToolKind::dual_flats: return "dual_flats";
        case ToolKind::rolling_ball: return "rolling_ball";
    }
    return "?";
}

std::string to_string(InitShape s) {
    switch (s) {
        case InitShape::ball: return "ball";
        case InitShape::two_balls: return "two_balls";
        case InitShape::cuboid: return "cuboid";
        case InitShape::random_scatter: return "random";
    }
    return "?";
}

Task task_from_string(const std::string& s) {
    if (s == "rolling") return Task::rolling;
    if (s == "cutting") return Task::cutting;
    if (s == "gathering") return Task::gathering;
    if (s == "shaping") return Task::shaping;
    throw ConfigError("unknown task '" + s + "'");
}

ToolKind tool_from_string(const std::string& s) {
    if (s == "rolling_pin") return ToolKind::rolling_pin;
    if (s == "knife") return ToolKind::knife;
    if (s == "dual_flats") return ToolKind::dual_flats;
    if (s == "rolling_ball") return ToolKind::rolling_ball;
    throw ConfigError("unknown tool '" + s + "'");
}

InitShape shape_from_string(const std::string& s) {
    if (s == "ball") return InitShape::ball;
    if (s == "two_balls") return InitShape::two_balls;
    if (s == "cuboid") return InitShape::cuboid;
    if (s == "random") return InitShape::random_scatter;
    throw ConfigError("unknown shape '" + s + "'");
}

ToolSpec ToolSpec::for_kind(ToolKind kind) {
    ToolSpec spec;
    spec.kind = kind;
    return spec;
}

ToolKind ToolSpec::tool_for_task(Task task) {
    switch (task) {
        case Task::rolling: return ToolKind::rolling_pin;
        case Task::cutting: return ToolKind::knife;
        case Task::gathering: return ToolKind::dual_flats;
        case Task::shaping: return ToolKind::rolling_ball;
    }
    return ToolKind::rolling_pin;
}

ToolSpec ToolSpec::for_task(Task task) { return for_kind(tool_for_task(task)); }

bool ToolSpec::pairing_allowed(ToolKind tool, InitShape shape) {
    switch (tool) {
        case ToolKind::rolling_pin:
        case ToolKind::knife:
        case ToolKind::rolling_ball:
            return shape == InitShape::ball || shape == InitShape::cuboid;
        case ToolKind::dual_flats:
            return shape == InitShape::two_balls || shape == InitShape::random_scatter;
    }
    return false;
}

std::array<std::pair<double, double>, 7> ToolSpec::action_bounds() const {
    std::array<std::pair<double, double>, 7> b{};
    if (kind == ToolKind::dual_flats) {
        for (int i = 0; i < 6; i += 3) {
            b[static_cast<size_t>(i + 0)] = {0.20, 0.80};
            b[static_cast<size_t>(i + 1)] = {0.20, 0.80};
            b[static_cast<size_t>(i + 2)] = {0.01, 0.22};
        }
        b[6] = {-1.5707963267948966, 1.5707963267948966};
    } else {
        b[0] = {0.25, 0.75};
        b[1] = {0.25, 0.75};
        b[2] = {0.005, 0.30};
    }
    return b;
}

ToolPose ToolPose::single(Vec3 center) {
    ToolPose p;
    p.dim = 3;
    p.q[0] = center.x;
    p.q[1] = center.y;
    p.q[2] = center.z;
    return p;
}

ToolPose ToolPose::flats(Vec3 a, Vec3 b, double yaw) {
    ToolPose p;
    p.dim = 7;
    p.q = {a.x, a.y, a.z, b.x, b.y, b.z, yaw};
    return p;
}

double tool_sdf(const ToolSpec& tool, const ToolPose& pose, const Vec3& p) {
    switch (tool.kind) {
        case ToolKind::rolling_pin:
            return capsule_sdf(p, pose.center_a(), tool.capsule_half_len, tool.capsule_radius);
        case ToolKind::knife:
            return box_sdf_local(p - pose.center_a(), tool.knife_half_extents);
        case ToolKind::rolling_ball:
            return (p - pose.center_a()).norm() - tool.ball_radius;
        case ToolKind::dual_flats: {
            const double a =
                box_sdf_local(rotate_z(p - pose.center_a(), -pose.yaw()), tool.flat_half_extents);
            const double b =
                box_sdf_local(rotate_z(p - pose.center_b(), -pose.yaw()), tool.flat_half_extents);
            return std::min(a, b);
        }
    }
    return 1e30;
}

Vec3 tool_normal(const ToolSpec& tool, const ToolPose& pose, const Vec3& p) {
    // central-difference gradient of the SDF; robust across all primitives
    const double h = 1e-6;
    Vec3 n{tool_sdf(tool, pose, {p.x + h, p.y, p.z}) - tool_sdf(tool, pose, {p.x - h, p.y, p.z}),
           tool_sdf(tool, pose, {p.x, p.y + h, p.z}) - tool_sdf(tool, pose, {p.x, p.y - h, p.z}),
           tool_sdf(tool, pose, {p.x, p.y, p.z + h}) - tool_sdf(tool, pose, {p.x, p.y, p.z - h})};
    const double len = n.norm();
    if (len < 1e-12) return {0.0, 0.0, 1.0};
    return n * (1.0 / len);
}

// ---------------------------------------------------------------------------
// Particle fills
// ---------------------------------------------------------------------------

namespace {

template <typename Inside>
void lattice_fill(std::vector<Vec3>& out, const Vec3& lo, const Vec3& hi, double spacing,
                  double jitter, Rng& rng, Inside inside) {
    for (double z = lo.z; z <= hi.z; z += spacing) {
        for (double y = lo.y; y <= hi.y; y += spacing) {
            for (double x = lo.x; x <= hi.x; x += spacing) {
                const Vec3 p{x, y, z};
                if (!inside(p)) continue;
                Vec3 q = p;
                if (jitter > 0.0) {
                    q.x += (rng.uniform() - 0.5) * jitter * spacing;
                    q.y += (rng.uniform() - 0.5) * jitter * spacing;
                    q.z += (rng.uniform() - 0.5) * jitter * spacing;
                }
                out.push_back(q);
            }
        }
    }
}

void fill_ball(std::vector<Vec3>& out, const Vec3& c, double r, double spacing, double jitter,
               Rng& rng) {
    lattice_fill(out, {c.x - r, c.y - r, std::max(c.z - r, 0.0)}, {c.x + r, c.y + r, c.z + r},
                 spacing, jitter, rng, [&](const Vec3& p) { return (p - c).norm2() <= r * r; });
}

void fill_box(std::vector<Vec3>& out, const Vec3& c, const Vec3& h, double spacing, double jitter,
              Rng& rng) {
    lattice_fill(out, {c.x - h.x, c.y - h.y, std::max(c.z - h.z, 0.0)},
                 {c.x + h.x, c.y + h.y, c.z + h.z}, spacing, jitter, rng,
                 [&](const Vec3&) { return true; });
}

void fill_disk(std::vector<Vec3>& out, const Vec3& c, double r, double height, double spacing,
               double jitter, Rng& rng) {
    lattice_fill(out, {c.x - r, c.y - r, 0.5 * spacing}, {c.x + r, c.y + r, height}, spacing,
                 jitter, rng, [&](const Vec3& p) {
                     const double dx = p.x - c.x, dy = p.y - c.y;
                     return dx * dx + dy * dy <= r * r;
                 });
}

std::vector<Vec3> initial_fill(InitShape shape, Rng& rng, double spacing) {
    std::vector<Vec3> pts;
    const double jitter = 0.6;
    switch (shape) {
        case InitShape::ball:
            fill_ball(pts, {0.5, 0.5, 0.13}, 0.12, spacing, jitter, rng);
            break;
        case InitShape::two_balls:
            fill_ball(pts, {0.35, 0.5, 0.105}, 0.095, spacing, jitter, rng);
            fill_ball(pts, {0.65, 0.5, 0.105}, 0.095, spacing, jitter, rng);
            break;
        case InitShape::cuboid:
            fill_box(pts, {0.5, 0.5, 0.07}, {0.12, 0.12, 0.06}, spacing, jitter, rng);
            break;
        case InitShape::random_scatter: {
            const int blobs = 2 + static_cast<int>(rng.uniform_int(2));  // 2 or 3
            for (int b = 0; b < blobs; ++b) {
                const double r = rng.uniform(0.07, 0.10);
                const Vec3 c{rng.uniform(0.30, 0.70), rng.uniform(0.30, 0.70), r + 0.01};
                fill_ball(pts, c, r, spacing, jitter, rng);
            }
            break;
        }
    }
    return pts;
}

double particle_volume(const ParticleSystem& ps) {
    const double s = ps.rest_spacing;
    return static_cast<double>(ps.count()) * s * s * s;
}

constexpr double kPi = 3.14159265358979323846;

std::vector<Vec3> target_fill(Task task, const ParticleSystem& ps, double spacing, Rng& rng) {
    std::vector<Vec3> pts;
    const double volume = particle_volume(ps);
    switch (task) {
        case Task::rolling: {
            const double height = 0.06;
            const double radius = std::sqrt(volume / (kPi * height));
            fill_disk(pts, {0.5, 0.5, 0.0}, radius, height, spacing, 0.0, rng);
            break;
        }
        case Task::shaping: {
            const double height = 0.08;
            const double radius = std::sqrt(volume / (kPi * height));
            fill_disk(pts, {0.5, 0.5, 0.0}, radius, height, spacing, 0.0, rng);
            break;
        }
        case Task::cutting: {
            const double r = std::cbrt(3.0 * (volume / 2.0) / (4.0 * kPi));
            fill_ball(pts, {0.35, 0.5, r + 0.005}, r, spacing, 0.0, rng);
            fill_ball(pts, {0.65, 0.5, r + 0.005}, r, spacing, 0.0, rng);
            break;
        }
        case Task::gathering: {
            const double r = std::cbrt(3.0 * volume / (4.0 * kPi));
            fill_ball(pts, {0.5, 0.5, r + 0.005}, r, spacing, 0.0, rng);
            break;
        }
    }
    return pts;
}

// ---------------------------------------------------------------------------
// Neighbor grid
// ---------------------------------------------------------------------------

class UniformGrid {
public:
    UniformGrid(std::span<const Vec3> pts, double cell) : cell_(cell), pts_(pts) {
        nx_ = ny_ = nz_ = 0;
        if (pts.empty()) return;
        lo_ = pts[0];
        Vec3 hi = pts[0];
        for (const Vec3& p : pts) {
            lo_.x = std::min(lo_.x, p.x);
            lo_.y = std::min(lo_.y, p.y);
            lo_.z = std::min(lo_.z, p.z);
            hi.x = std::max(hi.x, p.x);
            hi.y = std::max(hi.y, p.y);
            hi.z = std::max(hi.z, p.z);
        }
        nx_ = static_cast<int>((hi.x - lo_.x) / cell_) + 1;
        ny_ = static_cast<int>((hi.y - lo_.y) / cell_) + 1;
        nz_ = static_cast<int>((hi.z - lo_.z) / cell_) + 1;
        cells_.assign(static_cast<size_t>(nx_) * ny_ * nz_ + 1, 0);
        std::vector<int> cell_of(pts.size());
        for (size_t i = 0; i < pts.size(); ++i) {
            cell_of[i] = cell_index(pts[i]);
            ++cells_[static_cast<size_t>(cell_of[i]) + 1];
        }
        for (size_t c = 1; c < cells_.size(); ++c) cells_[c] += cells_[c - 1];
        order_.resize(pts.size());
        std::vector<int> cursor(cells_.begin(), cells_.end());
        for (size_t i = 0; i < pts.size(); ++i) {
            order_[static_cast<size_t>(cursor[static_cast<size_t>(cell_of[i])]++)] =
                static_cast<int>(i);
        }
    }

    /// Visits pairs (i, j) with i < j and |pi - pj| < radius in index order.
    template <typename Fn>
    void for_each_pair(double radius, Fn fn) const {
        const double r2 = radius * radius;
        for (int i = 0; i < static_cast<int>(pts_.size()); ++i) {
            visit_neighbors(pts_[static_cast<size_t>(i)], r2, [&](int j) {
                if (j > i) fn(i, j);
            });
        }
    }

    /// Sums current and previous positions of neighbors within radius
    /// (excluding `exclude`); returns the neighbor count.
    int accumulate_neighbors(const Vec3& p, double radius, int exclude,
                             std::span<const Vec3> cur, std::span<const Vec3> prev,
                             Vec3& cur_sum, Vec3& prev_sum) const {
        const double r2 = radius * radius;
        int count = 0;
        visit_neighbors(p, r2, [&](int j) {
            if (j == exclude) return;
            cur_sum += cur[static_cast<size_t>(j)];
            prev_sum += prev[static_cast<size_t>(j)];
            ++count;
        });
        return count;
    }

    bool has_lower_neighbor(const Vec3& p, double radius, int exclude,
                            std::span<const Vec3> pts, double drop) const {
        const double r2 = radius * radius;
        bool found = false;
        visit_neighbors(p, r2, [&](int j) {
            if (j == exclude || found) return;
            if (pts[static_cast<size_t>(j)].z <= p.z - drop) found = true;
        });
        return found;
    }

    int count_within(const Vec3& p, double radius, int exclude = -1) const {
        const double r2 = radius * radius;
        int count = 0;
        visit_neighbors(p, r2, [&](int j) {
            if (j != exclude) ++count;
        });
        return count;
    }

private:
    template <typename Fn>
    void visit_neighbors(const Vec3& p, double r2, Fn fn) const {
        if (pts_.empty()) return;
        const int ci = std::clamp(static_cast<int>((p.x - lo_.x) / cell_), 0, nx_ - 1);
        const int cj = std::clamp(static_cast<int>((p.y - lo_.y) / cell_), 0, ny_ - 1);
        const int ck = std::clamp(static_cast<int>((p.z - lo_.z) / cell_), 0, nz_ - 1);
        for (int dk = -1; dk <= 1; ++dk) {
            const int k = ck + dk;
            if (k < 0 || k >= nz_) continue;
            for (int dj = -1; dj <= 1; ++dj) {
                const int j = cj + dj;
                if (j < 0 || j >= ny_) continue;
                for (int di = -1; di <= 1; ++di) {
                    const int i = ci + di;
                    if (i < 0 || i >= nx_) continue;
                    const int c = i + nx_ * (j + ny_ * k);
                    for (int s = cells_[static_cast<size_t>(c)];
                         s < cells_[static_cast<size_t>(c) + 1]; ++s) {
                        const int idx = order_[static_cast<size_t>(s)];
                        if ((pts_[static_cast<size_t>(idx)] - p).norm2() < r2) fn(idx);
                    }
                }
            }
        }
    }

    int cell_index(const Vec3& p) const {
        const int i = std::clamp(static_cast<int>((p.x - lo_.x) / cell_), 0, nx_ - 1);
        const int j = std::clamp(static_cast<int>((p.y - lo_.y) / cell_), 0, ny_ - 1);
        const int k = std::clamp(static_cast<int>((p.z - lo_.z) / cell_), 0, nz_ - 1);
        return i + nx_ * (j + ny_ * k);
    }

    double cell_;
    std::span<const Vec3> pts_;
    Vec3 lo_;
    int nx_, ny_, nz_;
    std::vector<int> cells_;
    std::vector<int> order_;
};

void clamp_workspace(ParticleSystem& ps, const SimConfig& cfg) {
    for (int64_t i = 0; i < ps.count(); ++i) {
        Vec3& p = ps.pos[static_cast<size_t>(i)];
        Vec3& v = ps.vel[static_cast<size_t>(i)];
        if (p.x < cfg.workspace_lo.x) { p.x = cfg.workspace_lo.x; v.x = std::max(v.x, 0.0); }
        if (p.x > cfg.workspace_hi.x) { p.x = cfg.workspace_hi.x; v.x = std::min(v.x, 0.0); }
        if (p.y < cfg.workspace_lo.y) { p.y = cfg.workspace_lo.y; v.y = std::max(v.y, 0.0); }
        if (p.y > cfg.workspace_hi.y) { p.y = cfg.workspace_hi.y; v.y = std::min(v.y, 0.0); }
        if (p.z < cfg.workspace_lo.z) { p.z = cfg.workspace_lo.z; v.z = std::max(v.z, 0.0); }
        if (p.z > cfg.workspace_hi.z) { p.z = cfg.workspace_hi.z; v.z = std::min(v.z, 0.0); }
    }
}

/// Neighbor pairs within the cohesion band, built once per substep and
/// shared by the relaxation passes, the shape matching and the velocity
/// smoothing.
struct PairCache {
    std::vector<std::pair<int32_t, int32_t>> pairs;
    std::vector<int32_t> degree;

    void build(std::span<const Vec3> pts, double radius) {
        pairs.clear();
        degree.assign(pts.size(), 0);
        UniformGrid grid(pts, radius);
        grid.for_each_pair(radius, [&](int i, int j) {
            pairs.emplace_back(i, j);
            ++degree[static_cast<size_t>(i)];
            ++degree[static_cast<size_t>(j)];
        });
    }
};

/// Jacobi relaxation toward the rest spacing with pairwise stick friction.
/// Overlapping neighbors are pushed apart; neighbors inside the cohesion
/// band are pulled back toward rest distance and their tangential relative
/// slide (displacement since the start of the substep) is removed, which is
/// what lets the material hold a shape under gravity. The neighbor set is
/// re-derived from current positions every substep, so deformation is
/// permanent.
void relax_pass(ParticleSystem& ps, std::span<const Vec3> prev, const PairCache& cache,
                const SimConfig& cfg, std::vector<Vec3>& disp) {
    const double rest = ps.rest_spacing;
    disp.assign(ps.pos.size(), Vec3{});
    for (const auto& [i, j] : cache.pairs) {
        const Vec3 delta = ps.pos[static_cast<size_t>(i)] - ps.pos[static_cast<size_t>(j)];
        const double d = delta.norm();
        if (d < 1e-12) continue;  // coincident points: resolved by later jitter
        const Vec3 n = delta * (1.0 / d);
        const double corr = 0.5 * cfg.relaxation * (rest - d);
        Vec3 di = n * corr;
        if (cfg.friction > 0.0) {
            const Vec3 rel = (ps.pos[static_cast<size_t>(i)] - prev[static_cast<size_t>(i)]) -
                             (ps.pos[static_cast<size_t>(j)] - prev[static_cast<size_t>(j)]);
            const Vec3 tangential = rel - n * rel.dot(n);
            di -= tangential * (0.5 * cfg.friction);
        }
        disp[static_cast<size_t>(i)] += di;
        disp[static_cast<size_t>(j)] -= di;
    }
    for (size_t i = 0; i < ps.pos.size(); ++i) {
        if (cache.degree[i] > 0) ps.pos[i] += disp[i] * (1.0 / cache.degree[i]);
    }
}

/// One substep: integrate, project out of the tool, hold neighborhood
/// shapes, relax spacing, then derive velocities from the actual
/// displacement (position-based update, no stored elastic response),
/// inherit tool normal velocity on contacts, smooth, damp and clamp.
/// Returns true if any particle touched the tool.
bool run_substep(ParticleSystem& ps, const SimConfig& cfg, const ToolSpec* tool,
                 const ToolPose& tool_pose, const Vec3& tool_vel_a, const Vec3& tool_vel_b) {
    bool contact = false;
    static thread_local std::vector<Vec3> prev;
    static thread_local std::vector<Vec3> contact_normal;
    static thread_local std::vector<uint8_t> contacted;
    static thread_local std::vector<Vec3> scratch;
    static thread_local PairCache cache;
    prev = ps.pos;
    contact_normal.assign(ps.pos.size(), Vec3{});
    contacted.assign(ps.pos.size(), 0);

    for (int64_t i = 0; i < ps.count(); ++i) {
        ps.vel[static_cast<size_t>(i)].z -= cfg.gravity * cfg.dt;
        ps.pos[static_cast<size_t>(i)] += ps.vel[static_cast<size_t>(i)] * cfg.dt;
    }
    if (tool != nullptr) {
        for (int64_t i = 0; i < ps.count(); ++i) {
            Vec3& p = ps.pos[static_cast<size_t>(i)];
            const double sd = tool_sdf(*tool, tool_pose, p);
            if (sd >= 0.0) continue;
            contact = true;
            const Vec3 n = tool_normal(*tool, tool_pose, p);
            p += n * (-sd + 1e-6);
            contacted[static_cast<size_t>(i)] = 1;
            contact_normal[static_cast<size_t>(i)] = n;
        }
    }

    const double band = cfg.cohesion_band * ps.rest_spacing;
    cache.build(ps.pos, band);

    if (cfg.shape_hold > 0.0) {
        // neighborhood matching against the substep start: each particle is
        // pulled toward the spot its neighborhood's common translation
        // predicts. Within-substep deformation below the tool/constraint
        // scale cancels, so resting shapes hold; the reference resets every
        // substep, so imposed deformation is permanent.
        static thread_local std::vector<Vec3> cur_sum;
        static thread_local std::vector<Vec3> prev_sum;
        cur_sum = ps.pos;
        prev_sum = prev;
        for (const auto& [i, j] : cache.pairs) {
            cur_sum[static_cast<size_t>(i)] += ps.pos[static_cast<size_t>(j)];
            cur_sum[static_cast<size_t>(j)] += ps.pos[static_cast<size_t>(i)];
            prev_sum[static_cast<size_t>(i)] += prev[static_cast<size_t>(j)];
            prev_sum[static_cast<size_t>(j)] += prev[static_cast<size_t>(i)];
        }
        for (int64_t i = 0; i < ps.count(); ++i) {
            if (contacted[static_cast<size_t>(i)]) continue;  // tool constraint wins
            const double inv = 1.0 / (cache.degree[static_cast<size_t>(i)] + 1);
            const Vec3 goal =
                cur_sum[static_cast<size_t>(i)] * inv +
                (prev[static_cast<size_t>(i)] - prev_sum[static_cast<size_t>(i)] * inv);
            Vec3& p = ps.pos[static_cast<size_t>(i)];
            p += (goal - p) * cfg.shape_hold;
        }
    }

    for (int pass = 0; pass < cfg.relax_iterations; ++pass) {
        relax_pass(ps, prev, cache, cfg, scratch);
    }

    const double inv_dt = 1.0 / cfg.dt;
    for (int64_t i = 0; i < ps.count(); ++i) {
        ps.vel[static_cast<size_t>(i)] =
            (ps.pos[static_cast<size_t>(i)] - prev[static_cast<size_t>(i)]) * inv_dt;
    }
    if (tool != nullptr) {
        for (int64_t i = 0; i < ps.count(); ++i) {
            if (!contacted[static_cast<size_t>(i)]) continue;
            const Vec3& n = contact_normal[static_cast<size_t>(i)];
            Vec3 tool_vel = tool_vel_a;
            if (tool->kind == ToolKind::dual_flats) {
                const Vec3& p = ps.pos[static_cast<size_t>(i)];
                const double da = box_sdf_local(
                    rotate_z(p - tool_pose.center_a(), -tool_pose.yaw()), tool->flat_half_extents);
                const double db = box_sdf_local(
                    rotate_z(p - tool_pose.center_b(), -tool_pose.yaw()), tool->flat_half_extents);
                tool_vel = da <= db ? tool_vel_a : tool_vel_b;
            }
            Vec3& v = ps.vel[static_cast<size_t>(i)];
            const double vn = v.dot(n);
            const double tool_vn = tool_vel.dot(n);
            if (vn < tool_vn) v += n * (tool_vn - vn);
        }
    }
    if (cfg.xsph > 0.0) {
        // viscous smoothing of relative neighbor motion
        static thread_local std::vector<Vec3> smoothed;
        smoothed.assign(ps.pos.size(), Vec3{});
        for (const auto& [i, j] : cache.pairs) {
            const Vec3 dv = ps.vel[static_cast<size_t>(j)] - ps.vel[static_cast<size_t>(i)];
            smoothed[static_cast<size_t>(i)] += dv;
            smoothed[static_cast<size_t>(j)] -= dv;
        }
        for (size_t i = 0; i < ps.pos.size(); ++i) {
            if (cache.degree[i] > 0) ps.vel[i] += smoothed[i] * (cfg.xsph / cache.degree[i]);
        }
    }
    if (cfg.sleep_speed > 0.0) {
        // support-aware static freeze: slow particles resting on the ground
        // or on a lower neighbor stop exactly (kills quasi-static creep);
        // unsupported particles keep falling no matter how slow
        static thread_local std::vector<uint8_t> supported;
        supported.assign(ps.pos.size(), 0);
        const double drop = 0.35 * band;
        for (const auto& [i, j] : cache.pairs) {
            const double dz = ps.pos[static_cast<size_t>(i)].z - ps.pos[static_cast<size_t>(j)].z;
            if (dz >= drop) supported[static_cast<size_t>(i)] = 1;
            if (-dz >= drop) supported[static_cast<size_t>(j)] = 1;
        }
        const double sleep2 = cfg.sleep_speed * cfg.sleep_speed;
        for (int64_t i = 0; i < ps.count(); ++i) {
            Vec3& v = ps.vel[static_cast<size_t>(i)];
            v = v * cfg.damping;
            if (v.norm2() >= sleep2) continue;
            const bool grounded =
                ps.pos[static_cast<size_t>(i)].z <= cfg.workspace_lo.z + 0.7 * ps.rest_spacing;
            if (grounded || supported[static_cast<size_t>(i)]) {
                v = Vec3{};
                ps.pos[static_cast<size_t>(i)] = prev[static_cast<size_t>(i)];
            }
        }
    } else {
        for (Vec3& v : ps.vel) v = v * cfg.damping;
    }
    clamp_workspace(ps, cfg);
    return contact;
}

void substep_free(ParticleSystem& ps, const SimConfig& cfg) {
    run_substep(ps, cfg, nullptr, ToolPose{}, Vec3{}, Vec3{});
}

ToolPose lerp_pose(const ToolPose& a, const ToolPose& b, double t) {
    ToolPose out = b;
    for (size_t i = 0; i < 7; ++i) out.q[i] = a.q[i] + (b.q[i] - a.q[i]) * t;
    return out;
}

void check_waypoint_bounds(const ToolPose& wp, const SimConfig& cfg) {
    const int coords = wp.dim == 7 ? 6 : 3;
    const double lo[3] = {cfg.workspace_lo.x, cfg.workspace_lo.y, cfg.workspace_lo.z};
    const double hi[3] = {cfg.workspace_hi.x, cfg.workspace_hi.y, cfg.workspace_hi.z};
    for (int i = 0; i < coords; ++i) {
        const double v = wp.q[static_cast<size_t>(i)];
        if (v < lo[i % 3] || v > hi[i % 3]) throw ConfigError("waypoint outside workspace");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// reset / step
// ---------------------------------------------------------------------------

ResetResult reset(Task task, InitShape shape, uint64_t seed, const SimConfig& config) {
    const ToolKind tool = ToolSpec::tool_for_task(task);
    if (!ToolSpec::pairing_allowed(tool, shape)) {
        throw ConfigError("task '" + to_string(task) + "' does not pair with shape '" +
                          to_string(shape) + "'");
    }
    Rng rng(seed);
    ResetResult out;
    out.particles.rest_spacing = config.rest_spacing;
    out.particles.pos = initial_fill(shape, rng, config.rest_spacing);
    out.particles.vel.assign(out.particles.pos.size(), Vec3{});
    // settle the fill into its static equilibrium so episodes start at rest
    for (int i = 0; i < 300; ++i) substep_free(out.particles, config);

    double max_z = 0.0;
    for (const Vec3& p : out.particles.pos) max_z = std::max(max_z, p.z);

    const ToolSpec spec = ToolSpec::for_kind(tool);
    switch (tool) {
        case ToolKind::rolling_pin:
            out.tool_pose = ToolPose::single({0.5, 0.5, max_z + spec.capsule_radius + 0.02});
            break;
        case ToolKind::knife:
            out.tool_pose = ToolPose::single({0.5, 0.5, max_z + spec.knife_half_extents.z + 0.02});
            break;
        case ToolKind::rolling_ball:
            out.tool_pose = ToolPose::single({0.5, 0.5, max_z + spec.ball_radius + 0.02});
            break;
        case ToolKind::dual_flats:
            out.tool_pose = ToolPose::flats({0.22, 0.5, 0.06}, {0.78, 0.5, 0.06}, 0.0);
            break;
    }

    Rng target_rng(seed ^ 0x7a11f00dULL);
    out.target_particles = target_fill(task, out.particles, config.rest_spacing, target_rng);
    out.target.density = rasterize_density(out.target_particles, config);
    out.target.occupancy = occupancy_from_density(out.target.density, config.occupancy_threshold);
    bool any = false;
    for (uint8_t o : out.target.occupancy) any = any || o != 0;
    if (!any) throw ConfigError("zero-occupancy target");
    const double cell = (config.workspace_hi.x - config.workspace_lo.x) / config.grid_res;
    out.target.sdf = sdf_from_occupancy(out.target.occupancy, config.grid_res, cell);
    return out;
}

bool step(ParticleSystem& ps, const ToolSpec& tool, ToolPose& pose,
          std::span<const ToolPose> waypoints, const SimConfig& config) {
    bool contact = false;
    const double inv_t = 1.0 / (config.substeps * config.dt);
    for (size_t w = 0; w < waypoints.size(); ++w) {
        const ToolPose& wp = waypoints[w];
        check_waypoint_bounds(wp, config);
        const ToolPose from = pose;
        const Vec3 vel_a = (wp.center_a() - from.center_a()) * inv_t;
        const Vec3 vel_b = (wp.center_b() - from.center_b()) * inv_t;
        for (int s = 0; s < config.substeps; ++s) {
            const double alpha = static_cast<double>(s + 1) / config.substeps;
            const ToolPose tp = lerp_pose(from, wp, alpha);
            contact = run_substep(ps, config, &tool, tp, vel_a, vel_b) || contact;
        }
        pose = wp;
        for (const Vec3& p : ps.pos) {
            if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
                throw SimulationError("NaN in particle state at waypoint " + std::to_string(w));
            }
        }
    }
    return contact;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

Grid3 rasterize_density(std::span<const Vec3> points, const SimConfig& config) {
    const int g = config.grid_res;
    Grid3 grid = Grid3::zeros(g);
    const double span = config.workspace_hi.x - config.workspace_lo.x;
    const double scale = g / span;
    for (const Vec3& p : points) {
        const double cx = (p.x - config.workspace_lo.x) * scale - 0.5;
        const double cy = (p.y - config.workspace_lo.y) * scale - 0.5;
        const double cz = (p.z - config.workspace_lo.z) * scale - 0.5;
        const int i0 = static_cast<int>(std::floor(cx));
        const int j0 = static_cast<int>(std::floor(cy));
        const int k0 = static_cast<int>(std::floor(cz));
        const double fx = cx - i0, fy = cy - j0, fz = cz - k0;
        for (int dk = 0; dk < 2; ++dk) {
            const int k = k0 + dk;
            if (k < 0 || k >= g) continue;
            const double wz = dk == 0 ? 1.0 - fz : fz;
            for (int dj = 0; dj < 2; ++dj) {
                const int j = j0 + dj;
                if (j < 0 || j >= g) continue;
                const double wy = dj == 0 ? 1.0 - fy : fy;
                for (int di = 0; di < 2; ++di) {
                    const int i = i0 + di;
                    if (i < 0 || i >= g) continue;
                    const double wx = di == 0 ? 1.0 - fx : fx;
                    grid.at(i, j, k) += wx * wy * wz;
                }
            }
        }
    }
    return grid;
}

std::vector<uint8_t> occupancy_from_density(const Grid3& density, double threshold) {
    std::vector<uint8_t> occ(density.v.size(), 0);
    for (size_t i = 0; i < density.v.size(); ++i) occ[i] = density.v[i] > threshold ? 1 : 0;
    return occ;
}

double iou_occupancy(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
    if (a.size() != b.size()) throw ShapeError("iou: occupancy grids differ in size");
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const bool av = a[i] != 0, bv = b[i] != 0;
        inter += av && bv ? 1 : 0;
        uni += av || bv ? 1 : 0;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

// Felzenszwalb & Huttenlocher 1-d squared distance transform.
void edt_1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z, int n) {
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            const int vk = v[static_cast<size_t>(k)];
            s = ((f[static_cast<size_t>(q)] + q * q) - (f[static_cast<size_t>(vk)] + vk * vk)) /
                (2.0 * q - 2.0 * vk);
            if (s <= z[static_cast<size_t>(k)]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[static_cast<size_t>(k)] = q;
        z[static_cast<size_t>(k)] = s;
        z[static_cast<size_t>(k) + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[static_cast<size_t>(k) + 1] < q) ++k;
        const int vk = v[static_cast<size_t>(k)];
        d[static_cast<size_t>(q)] = (q - vk) * (q - vk) + f[static_cast<size_t>(vk)];
    }
}

Grid3 squared_edt(const std::vector<uint8_t>& mask, int res, bool to_set) {
    constexpr double kInf = 1e18;
    Grid3 d2 = Grid3::zeros(res);
    for (size_t i = 0; i < mask.size(); ++i) {
        const bool in_set = (mask[i] != 0) == to_set;
        d2.v[i] = in_set ? 0.0 : kInf;
    }
    std::vector<double> f(static_cast<size_t>(res)), out(static_cast<size_t>(res));
    std::vector<int> v(static_cast<size_t>(res));
    std::vector<double> z(static_cast<size_t>(res) + 1);
    for (int k = 0; k < res; ++k)
        for (int j = 0; j < res; ++j) {
            for (int i = 0; i < res; ++i) f[static_cast<size_t>(i)] = d2.at(i, j, k);
            edt_1d(f, out, v, z, res);
            for (int i = 0; i < res; ++i) d2.at(i, j, k) = out[static_cast<size_t>(i)];
        }
    for (int k = 0; k < res; ++k)
        for (int i = 0; i < res; ++i) {
            for (int j = 0; j < res; ++j) f[static_cast<size_t>(j)] = d2.at(i, j, k);
            edt_1d(f, out, v, z, res);
            for (int j = 0; j < res; ++j) d2.at(i, j, k) = out[static_cast<size_t>(j)];
        }
    for (int j = 0; j < res; ++j)
        for (int i = 0; i < res; ++i) {
            for (int k = 0; k < res; ++k) f[static_cast<size_t>(k)] = d2.at(i, j, k);
            edt_1d(f, out, v, z, res);
            for (int k = 0; k < res; ++k) d2.at(i, j, k) = out[static_cast<size_t>(k)];
        }
    return d2;
}

}  // namespace

Grid3 sdf_from_occupancy(const std::vector<uint8_t>& occ, int res, double cell_size) {
    const Grid3 dist_out2 = squared_edt(occ, res, true);
    const Grid3 dist_in2 = squared_edt(occ, res, false);
    Grid3 sdf = Grid3::zeros(res);
    for (size_t i = 0; i < sdf.v.size(); ++i) {
        sdf.v[i] = (std::sqrt(dist_out2.v[i]) - std::sqrt(dist_in2.v[i])) * cell_size;
    }
    return sdf;
}

double sample_trilinear(const Grid3& grid, const Vec3& p, const SimConfig& config) {
    const int g = grid.res;
    const double span = config.workspace_hi.x - config.workspace_lo.x;
    const double scale = g / span;
    double cx = (p.x - config.workspace_lo.x) * scale - 0.5;
    double cy = (p.y - config.workspace_lo.y) * scale - 0.5;
    double cz = (p.z - config.workspace_lo.z) * scale - 0.5;
    cx = std::clamp(cx, 0.0, static_cast<double>(g - 1));
    cy = std::clamp(cy, 0.0, static_cast<double>(g - 1));
    cz = std::clamp(cz, 0.0, static_cast<double>(g - 1));
    const int i0 = std::min(static_cast<int>(cx), g - 2);
    const int j0 = std::min(static_cast<int>(cy), g - 2);
    const int k0 = std::min(static_cast<int>(cz), g - 2);
    const double fx = cx - i0, fy = cy - j0, fz = cz - k0;
    double acc = 0.0;
    for (int dk = 0; dk < 2; ++dk)
        for (int dj = 0; dj < 2; ++dj)
            for (int di = 0; di < 2; ++di) {
                const double w = (di == 0 ? 1.0 - fx : fx) * (dj == 0 ? 1.0 - fy : fy) *
                                 (dk == 0 ? 1.0 - fz : fz);
                acc += w * grid.at(i0 + di, j0 + dj, k0 + dk);
            }
    return acc;
}

MetricReport compute_metrics(const ParticleSystem& ps, const TargetState& target,
                             const MetricWeights& weights, const SimConfig& config) {
    bool any = false;
    for (uint8_t o : target.occupancy) any = any || o != 0;
    if (!any) throw ConfigError("zero-occupancy target");

    MetricReport report;
    const Grid3 density = rasterize_density(ps.pos, config);
    const std::vector<uint8_t> occ = occupancy_from_density(density, config.occupancy_threshold);
    report.iou = iou_occupancy(occ, target.occupancy);

    double l2 = 0.0;
    for (size_t i = 0; i < density.v.size(); ++i) {
        const double d = density.v[i] - target.density.v[i];
        l2 += d * d;
    }
    report.density_score = -std::sqrt(l2) / std::pow(static_cast<double>(config.grid_res), 1.5);

    double sdf_sum = 0.0;
    for (const Vec3& p : ps.pos) {
        sdf_sum += std::max(0.0, sample_trilinear(target.sdf, p, config));
    }
    report.sdf_score = -sdf_sum / static_cast<double>(ps.count());

    report.reward = weights.w_iou * report.iou + weights.w_sdf * report.sdf_score +
                    weights.w_density * report.density_score;
    return report;
}

std::vector<Vec3> surface_particles(const ParticleSystem& ps, int min_points) {
    if (ps.count() < 8) throw DegenerateInputError("surface extraction needs at least 8 particles");
    const double radius = 1.5 * ps.rest_spacing;
    UniformGrid grid(ps.pos, radius);
    const int64_t n = ps.count();
    std::vector<int> counts(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        counts[static_cast<size_t>(i)] =
            grid.count_within(ps.pos[static_cast<size_t>(i)], radius, static_cast<int>(i));
    }
    std::vector<int> sorted = counts;
    std::sort(sorted.begin(), sorted.end());
    const size_t rank = static_cast<size_t>(
        std::max<int64_t>(0, static_cast<int64_t>(std::ceil(0.4 * static_cast<double>(n))) - 1));
    const int threshold = sorted[rank];

    std::vector<Vec3> out;
    for (int64_t i = 0; i < n; ++i) {
        if (counts[static_cast<size_t>(i)] <= threshold) {
            out.push_back(ps.pos[static_cast<size_t>(i)]);
        }
    }
    if (static_cast<int>(out.size()) < min_points) {
        throw DegenerateInputError("degenerate state: fewer surface particles than skeleton nodes");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

Environment::Environment(Task task, InitShape shape, uint64_t seed, SimConfig config)
    : task_(task), shape_(shape), config_(config), tool_(ToolSpec::for_task(task)) {
    reset(seed);
}

void Environment::reset(uint64_t seed) {
    ResetResult r = sim::reset(task_, shape_, seed, config_);
    particles_ = std::move(r.particles);
    pose_ = r.tool_pose;
    target_ = std::move(r.target);
    target_particles_ = std::move(r.target_particles);
}

bool Environment::step_waypoints(std::span<const ToolPose> waypoints) {
    return sim::step(particles_, tool_, pose_, waypoints, config_);
}

MetricReport Environment::metrics() const {
    return compute_metrics(particles_, target_, config_.weights, config_);
}

// ---------------------------------------------------------------------------
// Snapshot dumps
// ---------------------------------------------------------------------------

void dump_snapshot(const std::filesystem::path& dir, int step_index,
                   std::span<const Vec3> positions) {
    std::filesystem::create_directories(dir);
    char name[32];
    std::snprintf(name, sizeof(name), "step_%05d.bin", step_index);
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write snapshot " + (dir / name).string());
    std::vector<float> buf;
    buf.reserve(positions.size() * 3);
    for (const Vec3& p : positions) {
        buf.push_back(static_cast<float>(p.x));
        buf.push_back(static_cast<float>(p.y));
        buf.push_back(static_cast<float>(p.z));
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void write_snapshot_manifest(const std::filesystem::path& dir, int steps, int64_t particle_count,
                             const std::string& task, uint64_t seed) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["steps"] = steps;
    j["particle_count"] = particle_count;
    j["task"] = task;
    j["seed"] = seed;
    j["file_pattern"] = "step_%05d.bin";
    j["layout"] = "float32 little-endian xyz per particle";
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    out << j.dump(2) << '\n';
}

}  // namespace softworld::sim
