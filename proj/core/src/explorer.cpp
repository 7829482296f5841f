#include "softworld/explorer.hpp"

#include <algorithm>

#include "softworld/errors.hpp"

namespace softworld::expl {

void validate_pairs(std::span<const ExplorationPair> pairs) {
    if (pairs.empty()) throw ConfigError("exploration config has no (tool, shape) pairs");
    for (const ExplorationPair& p : pairs) {
        if (!sim::ToolSpec::pairing_allowed(p.tool, p.shape)) {
            throw ConfigError("pairing outside the exploration table: " + sim::to_string(p.tool) +
                              " x " + sim::to_string(p.shape));
        }
        if (p.episodes < 0) throw ConfigError("negative episode count");
    }
}

ExplorationRewarder::ExplorationRewarder(const sim::ParticleSystem& initial,
                                         const sim::SimConfig& config, double offset)
    : config_(config), offset_(offset) {
    initial_target_.density = sim::rasterize_density(initial.pos, config);
    initial_target_.occupancy =
        sim::occupancy_from_density(initial_target_.density, config.occupancy_threshold);
    const double cell = (config.workspace_hi.x - config.workspace_lo.x) / config.grid_res;
    initial_target_.sdf =
        sim::sdf_from_occupancy(initial_target_.occupancy, config.grid_res, cell);
    initial_reward_ =
        sim::compute_metrics(initial, initial_target_, config.weights, config).reward;
}

double ExplorationRewarder::operator()(const sim::ParticleSystem& state) const {
    const double reward =
        sim::compute_metrics(state, initial_target_, config_.weights, config_).reward;
    return offset_ + initial_reward_ - reward;
}

data::SequenceRecord explore_episode(sim::Environment& env, rl::SacAgent& agent, int steps,
                                     int skeleton_k, double reward_offset, int64_t* global_step,
                                     Rng& warmup_rng) {
    const sim::ToolSpec& tool = env.tool();
    ExplorationRewarder rewarder(env.particles(), env.config(), reward_offset);

    data::SequenceRecord rec;
    rec.tool = tool.kind;
    rec.shape = env.shape();

    skel::SkeletonGraph skeleton_t = skel::extract_skeleton(
        sim::surface_particles(env.particles(), skeleton_k), skeleton_k);
    auto initial_goal = std::make_shared<const skel::SkeletonGraph>(skeleton_t);
    rec.skeletons.push_back(skeleton_t);
    rec.poses.push_back(env.tool_pose());
    rec.contact.push_back(0);
    rec.rewards.push_back(rewarder(env.particles()));

    std::vector<sim::ToolPose> prev_tail;
    double prev_reward = rec.rewards.back();
    for (int step = 0; step < steps; ++step) {
        const Tensor eps = agent.encode_state(skeleton_t);
        const Tensor goal_emb = agent.encode_state(*initial_goal);
        Tensor action;
        if (*global_step < agent.config().warmup_random_steps) {
            const auto bounds = tool.action_bounds();
            action = Tensor({tool.action_dim()});
            for (int i = 0; i < tool.action_dim(); ++i) {
                const auto [lo, hi] = bounds[static_cast<size_t>(i)];
                action[i] = warmup_rng.uniform(lo, hi);
            }
        } else {
            action = agent.act(eps, goal_emb, false);
        }
        const sim::ToolPose pose_target = agent.action_to_pose(action);
        const std::vector<sim::ToolPose> waypoints =
            rl::plan_trajectory(env.tool_pose(), pose_target, prev_tail);
        const bool contact = env.step_waypoints(waypoints);
        prev_tail.assign(waypoints.end() - 4, waypoints.end());

        skel::SkeletonGraph skeleton_tp1 = skel::extract_skeleton(
            sim::surface_particles(env.particles(), skeleton_k), skeleton_k);
        const double reward = rewarder(env.particles());
        const bool done = step == steps - 1;

        rl::Transition tr;
        tr.graph_t = skeleton_t;
        tr.graph_tp1 = skeleton_tp1;
        tr.goal = initial_goal;
        tr.action = action;
        tr.reward = (reward - prev_reward) * agent.config().reward_scale;
        tr.done = done;
        agent.store(std::move(tr));
        prev_reward = reward;

        rec.skeletons.push_back(skeleton_tp1);
        rec.poses.push_back(pose_target);
        rec.contact.push_back(contact ? 1 : 0);
        rec.rewards.push_back(reward);

        ++(*global_step);
        if (*global_step % agent.config().update_every == 0 && agent.buffer_size() > 0) {
            const int bsz =
                static_cast<int>(std::min<int64_t>(agent.config().batch, agent.buffer_size()));
            for (int u = 0; u < agent.config().updates_per_event; ++u) {
                auto batch = agent.sample_batch(bsz);
                agent.update_critics(batch);
                agent.update_actor(batch);
            }
        }
        skeleton_t = std::move(skeleton_tp1);
    }
    return rec;
}

std::vector<data::SequenceRecord> contact_runs(const data::SequenceRecord& episode) {
    std::vector<data::SequenceRecord> runs;
    const int64_t transitions = episode.length() - 1;
    int64_t start = -1;
    auto flush = [&](int64_t end_transition) {
        if (start < 0) return;
        data::SequenceRecord run;
        run.tool = episode.tool;
        run.shape = episode.shape;
        run.seed = episode.seed;
        // transitions [start, end) correspond to steps [start, end]
        run.skeletons.assign(episode.skeletons.begin() + start,
                             episode.skeletons.begin() + end_transition + 1);
        run.poses.assign(episode.poses.begin() + start,
                         episode.poses.begin() + end_transition + 1);
        run.contact.assign(episode.contact.begin() + start,
                           episode.contact.begin() + end_transition + 1);
        run.rewards.assign(episode.rewards.begin() + start,
                           episode.rewards.begin() + end_transition + 1);
        runs.push_back(std::move(run));
        start = -1;
    };
    for (int64_t i = 0; i < transitions; ++i) {
        const bool kept = episode.contact[static_cast<size_t>(i)] != 0 ||
                          episode.contact[static_cast<size_t>(i + 1)] != 0;
        if (kept && start < 0) start = i;
        if (!kept) flush(i);
    }
    flush(transitions);
    return runs;
}

data::Dataset generate_dataset(const ExplorationConfig& config) {
    validate_pairs(config.pairs);

    data::Dataset dataset;
    dataset.k = config.skeleton_k;
    dataset.seed = config.seed;
    dataset.steps_per_episode = config.steps_per_episode;

    Rng seed_stream(config.seed);
    for (size_t pair_idx = 0; pair_idx < config.pairs.size(); ++pair_idx) {
        const ExplorationPair& pair = config.pairs[pair_idx];
        const sim::Task task = [&] {
            switch (pair.tool) {
                case sim::ToolKind::rolling_pin: return sim::Task::rolling;
                case sim::ToolKind::knife: return sim::Task::cutting;
                case sim::ToolKind::dual_flats: return sim::Task::gathering;
                case sim::ToolKind::rolling_ball: return sim::Task::shaping;
            }
            return sim::Task::rolling;
        }();

        const uint64_t pair_seed = seed_stream.fork(100 + pair_idx).next_u64();
        scene::HeteroGraphEncoder encoder(Rng(pair_seed).fork(1).next_u64());
        rl::SacAgent agent(sim::ToolSpec::for_kind(pair.tool), rl::Variant::sac, config.sac,
                           Rng(pair_seed).fork(2).next_u64(), &encoder, nullptr);
        Rng warmup_rng(Rng(pair_seed).fork(3).next_u64());
        sim::Environment env(task, pair.shape, 0, config.sim_config);

        data::PairStats stats;
        stats.tool = pair.tool;
        stats.shape = pair.shape;
        stats.episodes = pair.episodes;
        int64_t global_step = 0;

        for (int ep = 0; ep < pair.episodes; ++ep) {
            const uint64_t ep_seed = Rng(pair_seed).fork(1000 + static_cast<uint64_t>(ep)).next_u64();
            env.reset(ep_seed);
            data::SequenceRecord episode = explore_episode(
                env, agent, config.steps_per_episode, config.skeleton_k, config.reward_offset,
                &global_step, warmup_rng);
            episode.seed = ep_seed;
            const int64_t total = episode.length() - 1;
            int64_t kept = 0;
            for (data::SequenceRecord& run : contact_runs(episode)) {
                kept += run.length() - 1;
                dataset.sequences.push_back(std::move(run));
            }
            stats.kept += kept;
            stats.dropped += total - kept;
        }
        dataset.pair_stats.push_back(stats);
    }

    if (!config.out_dir.empty()) {
        data::write_dataset(config.out_dir, dataset);
    }
    return dataset;
}

}  // namespace softworld::expl
