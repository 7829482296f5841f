#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <queue>
#include <vector>

#include "softworld/errors.hpp"
#include "softworld/rng.hpp"
#include "softworld/sim.hpp"

using namespace softworld;
using namespace softworld::sim;

namespace {

bool states_bit_equal(const ParticleSystem& a, const ParticleSystem& b) {
    if (a.count() != b.count()) return false;
    for (int64_t i = 0; i < a.count(); ++i) {
        const Vec3& pa = a.pos[static_cast<size_t>(i)];
        const Vec3& pb = b.pos[static_cast<size_t>(i)];
        if (pa.x != pb.x || pa.y != pb.y || pa.z != pb.z) return false;
    }
    return true;
}

/// Independent connected-components oracle over particle adjacency.
int cluster_count(std::span<const Vec3> pts, double radius) {
    const size_t n = pts.size();
    std::vector<int> label(n, -1);
    const double r2 = radius * radius;
    int clusters = 0;
    for (size_t i = 0; i < n; ++i) {
        if (label[i] >= 0) continue;
        label[i] = clusters;
        std::queue<size_t> frontier;
        frontier.push(i);
        while (!frontier.empty()) {
            const size_t cur = frontier.front();
            frontier.pop();
            for (size_t j = 0; j < n; ++j) {
                if (label[j] >= 0) continue;
                if ((pts[cur] - pts[j]).norm2() < r2) {
                    label[j] = clusters;
                    frontier.push(j);
                }
            }
        }
        ++clusters;
    }
    return clusters;
}

double max_height(const ParticleSystem& ps) {
    double h = 0.0;
    for (const Vec3& p : ps.pos) h = std::max(h, p.z);
    return h;
}

}  // namespace

TEST_SUITE_BEGIN("sim");

TEST_CASE("reset: identical seeds give bit-identical states") {
    SimConfig cfg;
    ResetResult a = reset(Task::rolling, InitShape::ball, 7, cfg);
    ResetResult b = reset(Task::rolling, InitShape::ball, 7, cfg);
    CHECK(a.particles.count() >= 512);
    CHECK(a.particles.count() <= 2048);
    CHECK(states_bit_equal(a.particles, b.particles));
    CHECK(a.tool_pose.q == b.tool_pose.q);
}

TEST_CASE("reset: two_balls starts as two disjoint clusters") {
    SimConfig cfg;
    ResetResult r = reset(Task::gathering, InitShape::two_balls, 3, cfg);
    CHECK(cluster_count(r.particles.pos, 2.0 * cfg.rest_spacing) == 2);
}

TEST_CASE("reset: pairing outside the exploration table is rejected") {
    SimConfig cfg;
    CHECK_THROWS_AS(reset(Task::cutting, InitShape::random_scatter, 1, cfg), ConfigError);
    CHECK_THROWS_AS(reset(Task::rolling, InitShape::two_balls, 1, cfg), ConfigError);
    CHECK_THROWS_AS(reset(Task::gathering, InitShape::ball, 1, cfg), ConfigError);
}

TEST_CASE("step: empty waypoint list is a no-op") {
    SimConfig cfg;
    ResetResult r = reset(Task::rolling, InitShape::ball, 5, cfg);
    ParticleSystem copy = r.particles;
    ToolPose pose = r.tool_pose;
    const bool contact = step(copy, ToolSpec::for_task(Task::rolling), pose, {}, cfg);
    CHECK_FALSE(contact);
    CHECK(states_bit_equal(copy, r.particles));
}

TEST_CASE("step: distant tool with zero gravity leaves positions still") {
    SimConfig cfg;
    cfg.gravity = 0.0;
    ResetResult r = reset(Task::rolling, InitShape::ball, 5, cfg);
    ParticleSystem ps = r.particles;
    ToolPose pose = ToolPose::single({0.5, 0.5, 0.9});
    const std::vector<ToolPose> wps = {ToolPose::single({0.51, 0.5, 0.9}),
                                       ToolPose::single({0.52, 0.5, 0.9})};
    const std::vector<Vec3> before = ps.pos;
    const bool contact = step(ps, ToolSpec::for_task(Task::rolling), pose, wps, cfg);
    CHECK_FALSE(contact);
    double max_move = 0.0;
    for (int64_t i = 0; i < ps.count(); ++i) {
        max_move = std::max(max_move,
                            (ps.pos[static_cast<size_t>(i)] - before[static_cast<size_t>(i)]).norm());
    }
    // settled state, zero gravity: only residual relaxation motion remains
    CHECK(max_move < 0.5 * cfg.rest_spacing);
}

TEST_CASE("step: pressing the pin down compresses the ball") {
    SimConfig cfg;
    ResetResult r = reset(Task::rolling, InitShape::ball, 11, cfg);
    ParticleSystem ps = r.particles;
    const int64_t n_before = ps.count();
    ToolPose pose = r.tool_pose;
    const double h0 = max_height(ps);

    std::vector<ToolPose> down;
    for (int i = 1; i <= 25; ++i) {
        const double t = i / 25.0;
        down.push_back(ToolPose::single({0.5, 0.5, pose.q[2] + t * (0.085 - pose.q[2])}));
    }
    const bool contact = step(ps, ToolSpec::for_task(Task::rolling), pose, down, cfg);
    CHECK(contact);
    CHECK(ps.count() == n_before);
    CHECK(max_height(ps) < h0);
}

TEST_CASE("step: waypoint outside the workspace is rejected") {
    SimConfig cfg;
    ResetResult r = reset(Task::rolling, InitShape::ball, 2, cfg);
    ToolPose pose = r.tool_pose;
    const std::vector<ToolPose> bad = {ToolPose::single({1.5, 0.5, 0.2})};
    CHECK_THROWS_AS(step(r.particles, ToolSpec::for_task(Task::rolling), pose, bad, cfg),
                    ConfigError);
}

TEST_CASE("plasticity: no height recovery after the tool leaves") {
    SimConfig cfg;
    ResetResult r = reset(Task::rolling, InitShape::ball, 13, cfg);
    ParticleSystem ps = r.particles;
    ToolPose pose = r.tool_pose;
    std::vector<ToolPose> down;
    for (int i = 1; i <= 30; ++i) {
        const double t = i / 30.0;
        down.push_back(ToolPose::single({0.5, 0.5, pose.q[2] + t * (0.08 - pose.q[2])}));
    }
    step(ps, ToolSpec::for_task(Task::rolling), pose, down, cfg);
    const std::vector<ToolPose> up = {ToolPose::single({0.5, 0.5, 0.8})};
    step(ps, ToolSpec::for_task(Task::rolling), pose, up, cfg);

    const double h_after_press = max_height(ps);
    const std::vector<ToolPose> hold(10, ToolPose::single({0.5, 0.5, 0.8}));
    for (int rep = 0; rep < 5; ++rep) {
        step(ps, ToolSpec::for_task(Task::rolling), pose, hold, cfg);
    }
    CHECK(max_height(ps) <= h_after_press + cfg.rest_spacing);
}

TEST_CASE("containment: random tool motion keeps particles in the workspace") {
    SimConfig cfg;
    ResetResult r = reset(Task::shaping, InitShape::cuboid, 17, cfg);
    ParticleSystem ps = r.particles;
    ToolPose pose = r.tool_pose;
    Rng rng(99);
    const ToolSpec tool = ToolSpec::for_task(Task::shaping);
    for (int move = 0; move < 20; ++move) {
        std::vector<ToolPose> wps;
        for (int i = 0; i < 5; ++i) {
            wps.push_back(ToolPose::single(
                {rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.01, 0.3)}));
        }
        step(ps, tool, pose, wps, cfg);
    }
    CHECK(ps.count() == r.particles.count());
    for (const Vec3& p : ps.pos) {
        CHECK(p.x >= cfg.workspace_lo.x);
        CHECK(p.x <= cfg.workspace_hi.x);
        CHECK(p.y >= cfg.workspace_lo.y);
        CHECK(p.y <= cfg.workspace_hi.y);
        CHECK(p.z >= cfg.workspace_lo.z);
        CHECK(p.z <= cfg.workspace_hi.z);
    }
}

TEST_CASE("determinism: same seed and waypoints give bit-identical trajectories") {
    SimConfig cfg;
    auto run = [&] {
        ResetResult r = reset(Task::cutting, InitShape::ball, 23, cfg);
        ToolPose pose = r.tool_pose;
        std::vector<ToolPose> wps;
        for (int i = 1; i <= 10; ++i) {
            wps.push_back(ToolPose::single({0.5, 0.5, pose.q[2] - 0.01 * i}));
        }
        step(r.particles, ToolSpec::for_task(Task::cutting), pose, wps, cfg);
        return r.particles;
    };
    const ParticleSystem a = run();
    const ParticleSystem b = run();
    CHECK(states_bit_equal(a, b));
}

TEST_CASE("metrics: identical occupancy gives iou 1") {
    SimConfig cfg;
    ResetResult r = reset(Task::rolling, InitShape::ball, 31, cfg);
    TargetState self_target;
    self_target.density = rasterize_density(r.particles.pos, cfg);
    self_target.occupancy = occupancy_from_density(self_target.density, cfg.occupancy_threshold);
    self_target.sdf = sdf_from_occupancy(self_target.occupancy, cfg.grid_res, 1.0 / cfg.grid_res);
    const MetricReport m = compute_metrics(r.particles, self_target, cfg.weights, cfg);
    CHECK(m.iou == 1.0);
    CHECK(m.density_score == 0.0);
    CHECK(m.reward == doctest::Approx(cfg.weights.w_iou + cfg.weights.w_sdf * m.sdf_score));
}

TEST_CASE("metrics: iou oracle values on synthetic occupancy grids") {
    const int g = 32;
    std::vector<uint8_t> a(static_cast<size_t>(g) * g * g, 0);
    std::vector<uint8_t> b(a.size(), 0);
    auto at = [&](std::vector<uint8_t>& occ, int i, int j, int k) -> uint8_t& {
        return occ[static_cast<size_t>(i + g * (j + g * k))];
    };

    SUBCASE("identical") {
        for (int i = 0; i < 10; ++i) at(a, i, i, i) = at(b, i, i, i) = 1;
        CHECK(iou_occupancy(a, b) == 1.0);
    }
    SUBCASE("disjoint") {
        at(a, 0, 0, 0) = 1;
        at(b, 10, 10, 10) = 1;
        CHECK(iou_occupancy(a, b) == 0.0);
    }
    SUBCASE("half-overlapping equal slabs give exactly one third") {
        for (int k = 0; k < g; ++k)
            for (int j = 0; j < g; ++j) {
                for (int i = 0; i < 16; ++i) at(a, i, j, k) = 1;
                for (int i = 8; i < 24; ++i) at(b, i, j, k) = 1;
            }
        CHECK(iou_occupancy(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
    SUBCASE("symmetry") {
        Rng rng(5);
        for (size_t i = 0; i < a.size(); ++i) {
            a[i] = rng.uniform() < 0.2 ? 1 : 0;
            b[i] = rng.uniform() < 0.2 ? 1 : 0;
        }
        CHECK(iou_occupancy(a, b) == iou_occupancy(b, a));
    }
}

TEST_CASE("metrics: zero-occupancy target is a configuration error") {
    SimConfig cfg;
    ResetResult r = reset(Task::rolling, InitShape::ball, 37, cfg);
    TargetState empty;
    empty.density = Grid3::zeros(cfg.grid_res);
    empty.occupancy.assign(static_cast<size_t>(cfg.grid_res) * cfg.grid_res * cfg.grid_res, 0);
    empty.sdf = Grid3::zeros(cfg.grid_res);
    CHECK_THROWS_AS(compute_metrics(r.particles, empty, cfg.weights, cfg), ConfigError);
}

TEST_CASE("metrics: reward is maximal at the target state over a candidate set") {
    SimConfig cfg;
    ResetResult r = reset(Task::rolling, InitShape::ball, 41, cfg);
    ParticleSystem on_target;
    on_target.pos = r.target_particles;
    on_target.vel.assign(on_target.pos.size(), Vec3{});
    on_target.rest_spacing = cfg.rest_spacing;

    auto shifted = [&](double dx, double dz) {
        ParticleSystem ps = on_target;
        for (Vec3& p : ps.pos) {
            p.x += dx;
            p.z += dz;
        }
        return ps;
    };
    const double r_target = compute_metrics(on_target, r.target, cfg.weights, cfg).reward;
    CHECK(r_target > compute_metrics(shifted(0.15, 0.0), r.target, cfg.weights, cfg).reward);
    CHECK(r_target > compute_metrics(shifted(0.0, 0.2), r.target, cfg.weights, cfg).reward);
    CHECK(r_target > compute_metrics(r.particles, r.target, cfg.weights, cfg).reward);
}

TEST_CASE("target sdf: zero crossing matches the occupancy boundary within one cell") {
    SimConfig cfg;
    ResetResult r = reset(Task::rolling, InitShape::ball, 43, cfg);
    const int g = cfg.grid_res;
    const double cell = 1.0 / g;
    for (int k = 1; k + 1 < g; ++k)
        for (int j = 1; j + 1 < g; ++j)
            for (int i = 1; i + 1 < g; ++i) {
                const bool occ = r.target.occupancy[static_cast<size_t>(i + g * (j + g * k))] != 0;
                const double sdf = r.target.sdf.at(i, j, k);
                if (occ) {
                    CHECK(sdf <= 0.0);
                } else {
                    CHECK(sdf >= cell - 1e-12);
                }
            }
}

TEST_CASE("surface: jittered ball keeps its center out of the surface set") {
    SimConfig cfg;
    ResetResult r = reset(Task::rolling, InitShape::ball, 47, cfg);
    Vec3 centroid;
    for (const Vec3& p : r.particles.pos) centroid += p;
    centroid = centroid * (1.0 / r.particles.count());
    int64_t nearest = 0;
    double best = 1e300;
    for (int64_t i = 0; i < r.particles.count(); ++i) {
        const double d = (r.particles.pos[static_cast<size_t>(i)] - centroid).norm2();
        if (d < best) {
            best = d;
            nearest = i;
        }
    }
    const Vec3 center = r.particles.pos[static_cast<size_t>(nearest)];
    const std::vector<Vec3> surf = surface_particles(r.particles, 30);
    CHECK(static_cast<int>(surf.size()) >= 30);
    for (const Vec3& p : surf) {
        CHECK((p.x != center.x || p.y != center.y || p.z != center.z));
    }
}

TEST_CASE("surface: eight sparse cube corners are all boundary") {
    ParticleSystem ps;
    ps.rest_spacing = 0.02;
    for (int i = 0; i < 8; ++i) {
        ps.pos.push_back(
            {0.3 + 0.4 * (i & 1), 0.3 + 0.4 * ((i >> 1) & 1), 0.3 + 0.4 * ((i >> 2) & 1)});
    }
    ps.vel.assign(8, Vec3{});
    const std::vector<Vec3> surf = surface_particles(ps, 8);
    CHECK(surf.size() == 8);
}

TEST_CASE("surface: two separated blobs both contribute boundary particles") {
    SimConfig cfg;
    ResetResult r = reset(Task::gathering, InitShape::two_balls, 53, cfg);
    const std::vector<Vec3> surf = surface_particles(r.particles, 30);
    int left = 0, right = 0;
    for (const Vec3& p : surf) {
        if (p.x < 0.5) {
            ++left;
        } else {
            ++right;
        }
    }
    CHECK(left > 0);
    CHECK(right > 0);
}

TEST_CASE("surface: degenerate states are reported") {
    ParticleSystem tiny;
    tiny.rest_spacing = 0.02;
    tiny.pos.assign(4, Vec3{0.5, 0.5, 0.5});
    tiny.vel.assign(4, Vec3{});
    CHECK_THROWS_AS(surface_particles(tiny, 30), DegenerateInputError);

    ParticleSystem few;
    few.rest_spacing = 0.02;
    for (int i = 0; i < 20; ++i) few.pos.push_back({0.1 + 0.03 * i, 0.5, 0.5});
    few.vel.assign(20, Vec3{});
    CHECK_THROWS_AS(surface_particles(few, 30), DegenerateInputError);
}

TEST_SUITE_END();
