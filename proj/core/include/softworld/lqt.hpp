#pragma once

#include <span>
#include <vector>

#include "softworld/sim.hpp"

namespace softworld::rl {

inline constexpr int kTrajectoryPoints = 50;

/// 50-waypoint trajectory between two poses. Each coordinate is tracked by a
/// discrete-time double-integrator LQT (backward Riccati recursion, terminal
/// emphasis on the goal), then a 5-point moving average smooths the interior
/// points, blending against the previous segment's tail when given. The
/// first waypoint equals `from`; the last lands within 1e-3 of `to`.
std::vector<sim::ToolPose> plan_trajectory(const sim::ToolPose& from, const sim::ToolPose& to,
                                           std::span<const sim::ToolPose> previous_tail = {});

/// Single-coordinate LQT position rollout (exposed for the planner tests).
std::vector<double> lqt_track_1d(double start, double goal, int points);

}  // namespace softworld::rl
