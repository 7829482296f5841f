#pragma once

#include <filesystem>
#include <vector>

#include "softworld/dataset.hpp"
#include "softworld/policy.hpp"
#include "softworld/sim.hpp"

namespace softworld::expl {

struct ExplorationPair {
    sim::ToolKind tool = sim::ToolKind::rolling_pin;
    sim::InitShape shape = sim::InitShape::ball;
    int episodes = 0;
};

struct ExplorationConfig {
    std::vector<ExplorationPair> pairs;
    int steps_per_episode = 30;
    int skeleton_k = 30;
    uint64_t seed = 1;
    double reward_offset = 0.0;
    sim::SimConfig sim_config;
    rl::SacConfig sac;  // explorer agent hyperparameters (eta/thinking unused)
    std::filesystem::path out_dir;
};

/// Throws ConfigError for pairs outside the exploration table
/// (rolling_pin/knife/rolling_ball x {ball,cuboid}; dual_flats x
/// {two_balls,random}).
void validate_pairs(std::span<const ExplorationPair> pairs);

/// Deformation-away-from-start reward: the episode's initial state is the
/// target, its loss is flipped into a reward. Equals `offset` when the state
/// still matches the initial rasterization, grows as the object deforms.
class ExplorationRewarder {
public:
    ExplorationRewarder(const sim::ParticleSystem& initial, const sim::SimConfig& config,
                        double offset);
    double operator()(const sim::ParticleSystem& state) const;

private:
    sim::TargetState initial_target_;
    sim::SimConfig config_;
    double initial_reward_ = 0.0;
    double offset_ = 0.0;
};

/// One exploration episode driven by a SAC agent (eta and thinking disabled):
/// records skeleton, executed pose, contact flag and deformation reward per
/// step (steps+1 records including the initial state).
data::SequenceRecord explore_episode(sim::Environment& env, rl::SacAgent& agent,
                                     int steps, int skeleton_k, double reward_offset,
                                     int64_t* global_step, Rng& warmup_rng);

/// Runs the configured episodes, keeps maximal runs of contact-bearing
/// transitions, and writes shards plus a manifest that mirrors the
/// exploration-table composition (kept/dropped per pair).
data::Dataset generate_dataset(const ExplorationConfig& config);

/// Splits one episode record into maximal contact runs (a transition is kept
/// when either endpoint step had contact).
std::vector<data::SequenceRecord> contact_runs(const data::SequenceRecord& episode);

}  // namespace softworld::expl
