#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softworld/autograd.hpp"
#include "softworld/dataset.hpp"
#include "softworld/lqt.hpp"
#include "softworld/nn.hpp"
#include "softworld/scene_graph.hpp"
#include "softworld/sim.hpp"
#include "softworld/softgpt.hpp"

namespace softworld::rl {

enum class Variant { sac, softgpt_s, softgpt_sr, softgpt_full };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct SacConfig {
    double lr = 3e-4;
    double gamma = 0.99;
    double tau = 0.005;
    double alpha = 0.2;
    double lambda = 0.9;
    int horizon = 5;  // thinking horizon H
    int batch = 128;
    int64_t buffer_capacity = 100000;
    int update_every = 250;   // actor/critic/eta cadence, in env steps
    int softgpt_every = 500;  // SoftGPT cadence, in env steps
    int updates_per_event = 40;
    int softgpt_updates_per_event = 16;
    int softgpt_batch = 8;  // sequences per SoftGPT update step
    int warmup_random_steps = 100;
    double reward_scale = 10.0;
    int hidden = 256;
};

/// Squashed-Gaussian policy head over a latent-preprocessing layer; outputs
/// land inside the tool's pose bounds.
class Actor {
public:
    Actor(const sim::ToolSpec& tool, int hidden, uint64_t seed);

    struct Sample {
        ag::Var action;    // [B, act_dim], pose units
        ag::Var log_prob;  // [B, 1]
    };
    /// noise must be [B, act_dim]; ignored in deterministic mode.
    Sample forward(ag::Tape& tape, ag::Var eps, ag::Var goal, const Tensor& noise,
                   bool deterministic, bool trainable = true);

    Tensor act(const Tensor& eps, const Tensor& goal, bool deterministic, Rng& rng);
    sim::ToolPose action_to_pose(const Tensor& action) const;
    int action_dim() const { return act_dim_; }

    std::vector<ag::Parameter*> params();

private:
    int act_dim_;
    Tensor center_row_, half_row_;  // [1, act_dim] bound transforms
    ag::Parameter pre_w_, pre_b_;
    ag::Parameter w1_, b1_, w2_, b2_;
    ag::Parameter mean_w_, mean_b_, lstd_w_, lstd_b_;
};

class Critic {
public:
    Critic(const sim::ToolSpec& tool, int hidden, uint64_t seed, const std::string& name);

    /// action is in pose units; normalized internally to [-1,1].
    ag::Var forward(ag::Tape& tape, ag::Var eps, ag::Var goal, ag::Var action,
                    bool trainable = true);

    std::vector<ag::Parameter*> params();
    /// target <- tau * online + (1 - tau) * target
    void polyak_from(const Critic& online, double tau);

private:
    Tensor center_row_, inv_half_row_;
    ag::Parameter pre_w_, pre_b_;
    ag::Parameter w1_, b1_, w2_, b2_, head_w_, head_b_;
};

/// Latent reward model eta(eps | E(g)).
class RewardModel {
public:
    RewardModel(int hidden, uint64_t seed);
    ag::Var forward(ag::Tape& tape, ag::Var eps, ag::Var goal, bool trainable = true);
    std::vector<ag::Parameter*> params();

private:
    ag::Parameter pre_w_, pre_b_;
    ag::Parameter w1_, b1_, w2_, b2_, head_w_, head_b_;
};

struct Transition {
    skel::SkeletonGraph graph_t;
    skel::SkeletonGraph graph_tp1;
    std::shared_ptr<const skel::SkeletonGraph> goal;
    Tensor action;  // [act_dim], pose units
    double reward = 0.0;  // already scaled
    bool done = false;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(int64_t capacity) : capacity_(capacity) {}
    void push(Transition t);
    int64_t size() const { return static_cast<int64_t>(entries_.size()); }
    const Transition& at(int64_t i) const { return entries_[static_cast<size_t>((head_ + i) % size())]; }
    std::vector<const Transition*> sample(int count, Rng& rng) const;

private:
    int64_t capacity_;
    int64_t head_ = 0;  // index of the oldest entry once full
    std::vector<Transition> entries_;
};

// ---------------------------------------------------------------------------
// lambda-blended value estimates (Eq. 2 realization)
// ---------------------------------------------------------------------------

/// Normalized lambda-weighted blend of n-step imagined returns.
/// eta_rewards: imagined rewards at the first H-1 imagined states;
/// q_boot: bootstrap values at all H imagined states.
double q_lambda_scalar(std::span<const double> eta_rewards, std::span<const double> q_boot,
                       double gamma, double lambda);

/// Q~ = (1-lambda) * q_direct + lambda * Q^lambda.
double q_tilde_scalar(double q_direct, std::span<const double> eta_rewards,
                      std::span<const double> q_boot, double gamma, double lambda);

/// Linear-combination coefficients so that
/// Q^lambda = sum_k coef_eta[k] * eta_k + sum_n coef_q[n] * q_n.
void q_lambda_coefficients(int horizon, double gamma, double lambda,
                           std::vector<double>& coef_eta, std::vector<double>& coef_q);

// ---------------------------------------------------------------------------
// Agent
// ---------------------------------------------------------------------------

class SacAgent {
public:
    SacAgent(const sim::ToolSpec& tool, Variant variant, SacConfig config, uint64_t seed,
             scene::HeteroGraphEncoder* encoder, gpt::SoftGPTModel* softgpt);

    Variant variant() const { return variant_; }
    const SacConfig& config() const { return config_; }
    bool thinking_enabled() const;
    bool eta_enabled() const;

    Tensor act(const Tensor& eps, const Tensor& goal, bool deterministic);
    sim::ToolPose action_to_pose(const Tensor& action) const { return actor_.action_to_pose(action); }
    Tensor encode_state(const skel::SkeletonGraph& g);

    /// Imagined rollout from a real state (empty when thinking is disabled).
    gpt::RolloutResult think(const Tensor& eps, const Tensor& goal);

    void store(Transition t) { buffer_.push(std::move(t)); }
    int64_t buffer_size() const { return buffer_.size(); }
    const ReplayBuffer& buffer() const { return buffer_; }
    std::vector<const Transition*> sample_batch(int count);

    struct CriticDiag {
        double loss = 0.0;
        std::vector<double> targets;       // y per batch row
        std::vector<double> next_actions;  // flattened a' (diagnostics/oracles)
        std::vector<double> next_logp;
    };
    CriticDiag update_critics(std::span<const Transition* const> batch);
    double update_actor(std::span<const Transition* const> batch);
    double update_reward_model(std::span<const Transition* const> batch);
    /// One SoftGPT update event over recent episode records.
    double update_softgpt(std::span<const data::SequenceRecord* const> sequences);

    /// Loss builders exposed for gradient-check tests.
    ag::Var build_critic_loss(ag::Tape& tape, std::span<const Transition* const> batch,
                              const Tensor& targets);
    ag::Var build_actor_loss(ag::Tape& tape, std::span<const Transition* const> batch,
                             const Tensor& base_noise, std::span<const Tensor> rollout_noise);
    /// Computes TD targets for a batch (no-grad); exposed for oracle tests.
    Tensor critic_targets(std::span<const Transition* const> batch, CriticDiag* diag = nullptr);

    Actor& actor() { return actor_; }
    Critic& critic1() { return critic1_; }
    Critic& critic2() { return critic2_; }
    Critic& target1() { return target1_; }
    Critic& target2() { return target2_; }
    RewardModel& reward_model() { return eta_; }

    void save(const std::filesystem::path& dir) const;
    void load(const std::filesystem::path& dir);

private:
    struct EmbeddingBatch {
        Tensor eps_t, eps_tp1, goal;  // [B,32] each
    };
    EmbeddingBatch embed_batch(std::span<const Transition* const> batch);
    gpt::ActorTapeFn make_rollout_actor(ag::Tape& tape, ag::Var goal,
                                        std::span<const Tensor> noise, bool trainable);

    sim::ToolSpec tool_;
    Variant variant_;
    SacConfig config_;
    scene::HeteroGraphEncoder* encoder_;
    gpt::SoftGPTModel* softgpt_;
    Actor actor_;
    Critic critic1_, critic2_, target1_, target2_;
    RewardModel eta_;
    ReplayBuffer buffer_;
    nn::Adam actor_opt_, critic_opt_, eta_opt_;
    std::optional<nn::Adam> softgpt_opt_;
    Rng act_rng_, update_rng_;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    sim::Task task = sim::Task::rolling;
    sim::InitShape shape = sim::InitShape::ball;
    Variant variant = Variant::sac;
    int episodes = 200;
    int steps_per_episode = 12;
    uint64_t seed = 1;
    int skeleton_k = 30;
    SacConfig sac;
    sim::SimConfig sim_config;
    gpt::SoftGPTConfig gpt_config;
    std::filesystem::path pretrained_checkpoint;  // required for softgpt_full
    std::filesystem::path out_dir;
    bool resume = false;
    bool save_checkpoints = true;
};

struct UpdateEvent {
    int env_step = 0;
    std::string kind;  // "policy" or "softgpt"
};

struct TrainResult {
    std::filesystem::path csv_path;
    std::vector<double> episode_returns;
    std::vector<UpdateEvent> events;
    int episodes_completed = 0;
};

TrainResult train(const TrainConfig& config);

/// Goal skeleton for an environment's target.
skel::SkeletonGraph goal_skeleton(const sim::Environment& env, int k);

}  // namespace softworld::rl
