#include "softworld/lqt.hpp"

#include <array>

#include "softworld/errors.hpp"

namespace softworld::rl {

namespace {

// Discrete double integrator x' = x + v dt, v' = v + u dt with dt = 1,
// running cost q_pos e^2 + q_vel v^2 + r u^2 and a heavy terminal stage.
constexpr double kQPos = 0.02;
constexpr double kQVel = 0.30;
constexpr double kR = 0.60;
constexpr double kQPosFinal = 1e7;
constexpr double kQVelFinal = 1e3;

struct Mat2 {
    double a = 0, b = 0, c = 0, d = 0;  // [[a,b],[c,d]]
};

}  // namespace

std::vector<double> lqt_track_1d(double start, double goal, int points) {
    const int steps = points - 1;
    // backward Riccati sweep for gains K_k
    std::vector<std::array<double, 2>> gains(static_cast<size_t>(steps));
    Mat2 p{kQPosFinal, 0, 0, kQVelFinal};
    for (int k = steps - 1; k >= 0; --k) {
        // A = [[1,1],[0,1]], B = [0,1]^T
        // K = (r + B'PB)^-1 B'PA
        const double bpb = p.d;
        const double bpa0 = p.c;            // (B'PA)_1 = P21*1 + P22*0
        const double bpa1 = p.c + p.d;      // (B'PA)_2 = P21*1 + P22*1
        const double inv = 1.0 / (kR + bpb);
        const double k0 = inv * bpa0;
        const double k1 = inv * bpa1;
        gains[static_cast<size_t>(k)] = {k0, k1};
        // P = Q + A'P(A - BK)
        const Mat2 acl{1.0 - 0.0, 1.0 - 0.0, -k0, 1.0 - k1};  // A - BK
        const Mat2 pacl{p.a * acl.a + p.b * acl.c, p.a * acl.b + p.b * acl.d,
                        p.c * acl.a + p.d * acl.c, p.c * acl.b + p.d * acl.d};
        const Mat2 at_pacl{pacl.a, pacl.b, pacl.a + pacl.c, pacl.b + pacl.d};  // A' * (P Acl)
        p = Mat2{kQPos + at_pacl.a, at_pacl.b, at_pacl.c, kQVel + at_pacl.d};
    }
    std::vector<double> positions(static_cast<size_t>(points));
    double e = start - goal, v = 0.0;
    positions[0] = start;
    for (int k = 0; k < steps; ++k) {
        const double u = -(gains[static_cast<size_t>(k)][0] * e + gains[static_cast<size_t>(k)][1] * v);
        e += v;
        v += u;
        positions[static_cast<size_t>(k) + 1] = goal + e;
    }
    return positions;
}

std::vector<sim::ToolPose> plan_trajectory(const sim::ToolPose& from, const sim::ToolPose& to,
                                           std::span<const sim::ToolPose> previous_tail) {
    if (from.dim != to.dim) throw UsageError("plan_trajectory: pose dimensions differ");
    const int dim = from.dim;

    std::array<std::vector<double>, 7> tracks;
    for (int c = 0; c < dim; ++c) {
        tracks[static_cast<size_t>(c)] =
            lqt_track_1d(from.q[static_cast<size_t>(c)], to.q[static_cast<size_t>(c)], kTrajectoryPoints);
    }

    // 5-point moving average over the interior, left-padded with the previous
    // segment's tail (or the start pose), endpoints pinned
    std::vector<sim::ToolPose> out(static_cast<size_t>(kTrajectoryPoints));
    for (int i = 0; i < kTrajectoryPoints; ++i) {
        out[static_cast<size_t>(i)].dim = dim;
        out[static_cast<size_t>(i)].q = to.q;  // carries untouched trailing coords
    }
    const int tail = static_cast<int>(previous_tail.size());
    for (int c = 0; c < dim; ++c) {
        const std::vector<double>& raw = tracks[static_cast<size_t>(c)];
        auto sample = [&](int i) {
            if (i < 0) {
                const int ti = tail + i;  // i in [-tail, -1]
                return ti >= 0 ? previous_tail[static_cast<size_t>(ti)].q[static_cast<size_t>(c)]
                               : from.q[static_cast<size_t>(c)];
            }
            if (i >= kTrajectoryPoints) return raw.back();
            return raw[static_cast<size_t>(i)];
        };
        out[0].q[static_cast<size_t>(c)] = raw[0];
        out[static_cast<size_t>(kTrajectoryPoints) - 1].q[static_cast<size_t>(c)] = raw.back();
        for (int i = 1; i < kTrajectoryPoints - 1; ++i) {
            // centered mean: exact when the window is constant
            const double pivot = raw[static_cast<size_t>(i)];
            double acc = 0.0;
            for (int w = -2; w <= 2; ++w) acc += sample(i + w) - pivot;
            out[static_cast<size_t>(i)].q[static_cast<size_t>(c)] = pivot + acc / 5.0;
        }
    }
    return out;
}

}  // namespace softworld::rl
