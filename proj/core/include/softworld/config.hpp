#pragma once

#include <filesystem>

#include "softworld/explorer.hpp"
#include "softworld/policy.hpp"
#include "softworld/softgpt.hpp"

namespace softworld::cli {

/// One JSON document configures every pipeline stage. Unknown keys are
/// rejected with their path; values default to the module defaults.
struct RunConfig {
    uint64_t seed = 1;
    int skeleton_k = 30;
    sim::SimConfig sim;
    expl::ExplorationConfig explore;
    gpt::PretrainConfig pretrain;
    gpt::SoftGPTConfig gpt;

    sim::Task task = sim::Task::rolling;
    sim::InitShape shape = sim::InitShape::ball;
    rl::Variant variant = rl::Variant::sac;
    std::vector<uint64_t> train_seeds = {1};
    int train_episodes = 200;
    int train_steps_per_episode = 12;
    rl::SacConfig sac;
    std::filesystem::path pretrained_checkpoint;

    int eval_episodes = 3;
    int eval_steps_per_episode = 12;
};

RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& json_text);

}  // namespace softworld::cli
