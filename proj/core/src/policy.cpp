#include "softworld/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "softworld/checkpoint.hpp"
#include "softworld/errors.hpp"

namespace softworld::rl {

using ag::Tape;
using ag::Var;

namespace {

constexpr double kLogStdMid = -1.5;   // log-std squashed into [-5, 2]
constexpr double kLogStdHalf = 3.5;
constexpr double kHalfLog2Pi = 0.9189385332046727;

Tensor mlp_init(uint64_t seed, uint64_t stream, std::vector<int64_t> shape) {
    Rng rng = Rng(seed).fork(0xac700000ULL + stream);
    return nn::scaled_normal(std::move(shape), rng);
}

Var pv(Tape& tape, ag::Parameter& p, bool trainable) {
    return trainable ? tape.param(p) : tape.frozen(p);
}

Tensor noise_tensor(Rng& rng, int64_t rows, int64_t cols) {
    Tensor t({rows, cols});
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
    return t;
}

Tensor row_to_matrix(const Tensor& v) {
    if (v.ndim() == 2) return v;
    return Tensor({1, v.size()}, std::vector<double>(v.values().begin(), v.values().end()));
}

}  // namespace

std::string to_string(Variant v) {
    switch (v) {
        case Variant::sac: return "sac";
        case Variant::softgpt_s: return "softgpt_s";
        case Variant::softgpt_sr: return "softgpt_sr";
        case Variant::softgpt_full: return "softgpt_full";
    }
    return "?";
}

Variant variant_from_string(const std::string& s) {
    if (s == "sac") return Variant::sac;
    if (s == "softgpt_s") return Variant::softgpt_s;
    if (s == "softgpt_sr") return Variant::softgpt_sr;
    if (s == "softgpt_full") return Variant::softgpt_full;
    throw ConfigError("unknown variant '" + s + "'");
}

// ---------------------------------------------------------------------------
// Actor
// ---------------------------------------------------------------------------

Actor::Actor(const sim::ToolSpec& tool, int hidden, uint64_t seed)
    : act_dim_(tool.action_dim()),
      center_row_({1, act_dim_}),
      half_row_({1, act_dim_}),
      pre_w_("actor/pre_w", mlp_init(seed, 0, {scene::kEmbedWidth, scene::kEmbedWidth})),
      pre_b_("actor/pre_b", Tensor::zeros({scene::kEmbedWidth})),
      w1_("actor/w1", mlp_init(seed, 1, {2 * scene::kEmbedWidth, hidden})),
      b1_("actor/b1", Tensor::zeros({hidden})),
      w2_("actor/w2", mlp_init(seed, 2, {hidden, hidden})),
      b2_("actor/b2", Tensor::zeros({hidden})),
      mean_w_("actor/mean_w", mlp_init(seed, 3, {hidden, act_dim_})),
      mean_b_("actor/mean_b", Tensor::zeros({act_dim_})),
      lstd_w_("actor/lstd_w", mlp_init(seed, 4, {hidden, act_dim_})),
      lstd_b_("actor/lstd_b", Tensor::zeros({act_dim_})) {
    const auto bounds = tool.action_bounds();
    for (int i = 0; i < act_dim_; ++i) {
        const auto [lo, hi] = bounds[static_cast<size_t>(i)];
        center_row_[i] = 0.5 * (lo + hi);
        half_row_[i] = 0.5 * (hi - lo);
    }
}

std::vector<ag::Parameter*> Actor::params() {
    return {&pre_w_, &pre_b_, &w1_, &b1_, &w2_, &b2_, &mean_w_, &mean_b_, &lstd_w_, &lstd_b_};
}

Actor::Sample Actor::forward(Tape& tape, Var eps, Var goal, const Tensor& noise,
                             bool deterministic, bool trainable) {
    Var h = ag::tanh(ag::affine(eps, pv(tape, pre_w_, trainable), pv(tape, pre_b_, trainable)));
    Var z = ag::concat_cols(h, goal);
    Var m = ag::tanh(ag::affine(z, pv(tape, w1_, trainable), pv(tape, b1_, trainable)));
    m = ag::tanh(ag::affine(m, pv(tape, w2_, trainable), pv(tape, b2_, trainable)));
    Var mean = ag::affine(m, pv(tape, mean_w_, trainable), pv(tape, mean_b_, trainable));
    Var raw_ls = ag::affine(m, pv(tape, lstd_w_, trainable), pv(tape, lstd_b_, trainable));
    Var log_std = ag::add_scalar(ag::scale(ag::tanh(raw_ls), kLogStdHalf), kLogStdMid);
    Var std_dev = ag::exp(log_std);

    Var u = deterministic ? mean : ag::add(mean, ag::mul_const(std_dev, noise));
    Var squashed = ag::tanh(u);
    Var action = ag::add_const(ag::mul_const(squashed, half_row_), center_row_);

    // log pi(a): Gaussian density in u plus tanh and affine-rescale corrections
    Var z_norm = ag::mul(ag::sub(u, mean), ag::exp(ag::neg(log_std)));
    Var term = ag::scale(ag::square(z_norm), -0.5);
    term = ag::sub(term, log_std);
    term = ag::add_scalar(term, -kHalfLog2Pi);
    term = ag::sub(term, ag::log(ag::add_scalar(ag::neg(ag::square(squashed)), 1.0 + 1e-6)));
    Tensor log_half({1, act_dim_});
    for (int i = 0; i < act_dim_; ++i) log_half[i] = std::log(half_row_[i]);
    term = ag::add_const(term, [&] {
        Tensor neg_log_half({1, act_dim_});
        for (int i = 0; i < act_dim_; ++i) neg_log_half[i] = -log_half[i];
        return neg_log_half;
    }());
    Var log_prob = ag::row_sum(term);
    return {action, log_prob};
}

Tensor Actor::act(const Tensor& eps, const Tensor& goal, bool deterministic, Rng& rng) {
    Tape tape(false);
    const Tensor noise = noise_tensor(rng, 1, act_dim_);
    Sample s = forward(tape, tape.input(row_to_matrix(eps)), tape.input(row_to_matrix(goal)),
                       noise, deterministic, false);
    Tensor action({act_dim_});
    for (int i = 0; i < act_dim_; ++i) action[i] = s.action.val()[i];
    return action;
}

sim::ToolPose Actor::action_to_pose(const Tensor& action) const {
    sim::ToolPose pose;
    pose.dim = act_dim_;
    for (int i = 0; i < act_dim_; ++i) pose.q[static_cast<size_t>(i)] = action[i];
    return pose;
}

// ---------------------------------------------------------------------------
// Critic
// ---------------------------------------------------------------------------

Critic::Critic(const sim::ToolSpec& tool, int hidden, uint64_t seed, const std::string& name)
    : center_row_({1, tool.action_dim()}),
      inv_half_row_({1, tool.action_dim()}),
      pre_w_(name + "/pre_w", mlp_init(seed, 10, {scene::kEmbedWidth, scene::kEmbedWidth})),
      pre_b_(name + "/pre_b", Tensor::zeros({scene::kEmbedWidth})),
      w1_(name + "/w1", mlp_init(seed, 11, {2 * scene::kEmbedWidth + tool.action_dim(), hidden})),
      b1_(name + "/b1", Tensor::zeros({hidden})),
      w2_(name + "/w2", mlp_init(seed, 12, {hidden, hidden})),
      b2_(name + "/b2", Tensor::zeros({hidden})),
      head_w_(name + "/head_w", mlp_init(seed, 13, {hidden, 1})),
      head_b_(name + "/head_b", Tensor::zeros({1})) {
    const auto bounds = tool.action_bounds();
    for (int i = 0; i < tool.action_dim(); ++i) {
        const auto [lo, hi] = bounds[static_cast<size_t>(i)];
        center_row_[i] = -0.5 * (lo + hi);          // additive offset
        inv_half_row_[i] = 2.0 / (hi - lo);         // scale to [-1, 1]
    }
}

std::vector<ag::Parameter*> Critic::params() {
    return {&pre_w_, &pre_b_, &w1_, &b1_, &w2_, &b2_, &head_w_, &head_b_};
}

Var Critic::forward(Tape& tape, Var eps, Var goal, Var action, bool trainable) {
    Var a_norm = ag::mul_const(ag::add_const(action, center_row_), inv_half_row_);
    Var h = ag::tanh(ag::affine(eps, pv(tape, pre_w_, trainable), pv(tape, pre_b_, trainable)));
    Var z = ag::concat_cols(ag::concat_cols(h, goal), a_norm);
    Var m = ag::tanh(ag::affine(z, pv(tape, w1_, trainable), pv(tape, b1_, trainable)));
    m = ag::tanh(ag::affine(m, pv(tape, w2_, trainable), pv(tape, b2_, trainable)));
    return ag::affine(m, pv(tape, head_w_, trainable), pv(tape, head_b_, trainable));
}

void Critic::polyak_from(const Critic& online, double tau) {
    const ag::Parameter* src[] = {&online.pre_w_, &online.pre_b_, &online.w1_, &online.b1_,
                                  &online.w2_,   &online.b2_,   &online.head_w_, &online.head_b_};
    ag::Parameter* dst[] = {&pre_w_, &pre_b_, &w1_, &b1_, &w2_, &b2_, &head_w_, &head_b_};
    for (size_t i = 0; i < 8; ++i) {
        for (int64_t k = 0; k < dst[i]->value.size(); ++k) {
            dst[i]->value[k] = tau * src[i]->value[k] + (1.0 - tau) * dst[i]->value[k];
        }
    }
}

// ---------------------------------------------------------------------------
// Reward model
// ---------------------------------------------------------------------------

RewardModel::RewardModel(int hidden, uint64_t seed)
    : pre_w_("eta/pre_w", mlp_init(seed, 20, {scene::kEmbedWidth, scene::kEmbedWidth})),
      pre_b_("eta/pre_b", Tensor::zeros({scene::kEmbedWidth})),
      w1_("eta/w1", mlp_init(seed, 21, {2 * scene::kEmbedWidth, hidden})),
      b1_("eta/b1", Tensor::zeros({hidden})),
      w2_("eta/w2", mlp_init(seed, 22, {hidden, hidden})),
      b2_("eta/b2", Tensor::zeros({hidden})),
      head_w_("eta/head_w", mlp_init(seed, 23, {hidden, 1})),
      head_b_("eta/head_b", Tensor::zeros({1})) {}

std::vector<ag::Parameter*> RewardModel::params() {
    return {&pre_w_, &pre_b_, &w1_, &b1_, &w2_, &b2_, &head_w_, &head_b_};
}

Var RewardModel::forward(Tape& tape, Var eps, Var goal, bool trainable) {
    Var h = ag::tanh(ag::affine(eps, pv(tape, pre_w_, trainable), pv(tape, pre_b_, trainable)));
    Var z = ag::concat_cols(h, goal);
    Var m = ag::tanh(ag::affine(z, pv(tape, w1_, trainable), pv(tape, b1_, trainable)));
    m = ag::tanh(ag::affine(m, pv(tape, w2_, trainable), pv(tape, b2_, trainable)));
    return ag::affine(m, pv(tape, head_w_, trainable), pv(tape, head_b_, trainable));
}

// ---------------------------------------------------------------------------
// Replay buffer
// ---------------------------------------------------------------------------

void ReplayBuffer::push(Transition t) {
    if (static_cast<int64_t>(entries_.size()) < capacity_) {
        entries_.push_back(std::move(t));
        return;
    }
    entries_[static_cast<size_t>(head_)] = std::move(t);  // overwrite the oldest
    head_ = (head_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayBuffer::sample(int count, Rng& rng) const {
    if (entries_.empty()) throw UsageError("replay buffer is empty");
    std::vector<const Transition*> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        out.push_back(&entries_[static_cast<size_t>(rng.uniform_int(size()))]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// lambda returns
// ---------------------------------------------------------------------------

double q_lambda_scalar(std::span<const double> eta_rewards, std::span<const double> q_boot,
                       double gamma, double lambda) {
    const int h = static_cast<int>(q_boot.size());
    if (h < 1) throw UsageError("q_lambda: empty rollout");
    if (static_cast<int>(eta_rewards.size()) != h - 1) {
        throw UsageError("q_lambda: expected H-1 imagined rewards");
    }
    double num = 0.0, den = 0.0;
    for (int n = 0; n < h; ++n) {
        double g = 0.0;
        for (int k = 0; k < n; ++k) g += std::pow(gamma, k) * eta_rewards[static_cast<size_t>(k)];
        g += std::pow(gamma, n) * q_boot[static_cast<size_t>(n)];
        const double w = std::pow(lambda, n);
        num += w * g;
        den += w;
    }
    return num / den;
}

double q_tilde_scalar(double q_direct, std::span<const double> eta_rewards,
                      std::span<const double> q_boot, double gamma, double lambda) {
    if (lambda == 0.0) return q_direct;
    return (1.0 - lambda) * q_direct + lambda * q_lambda_scalar(eta_rewards, q_boot, gamma, lambda);
}

void q_lambda_coefficients(int horizon, double gamma, double lambda,
                           std::vector<double>& coef_eta, std::vector<double>& coef_q) {
    coef_eta.assign(static_cast<size_t>(std::max(0, horizon - 1)), 0.0);
    coef_q.assign(static_cast<size_t>(horizon), 0.0);
    double wsum = 0.0;
    for (int n = 0; n < horizon; ++n) wsum += std::pow(lambda, n);
    for (int n = 0; n < horizon; ++n) {
        const double w = std::pow(lambda, n) / wsum;
        coef_q[static_cast<size_t>(n)] = w * std::pow(gamma, n);
        for (int k = 0; k < n; ++k) coef_eta[static_cast<size_t>(k)] += w * std::pow(gamma, k);
    }
}

// ---------------------------------------------------------------------------
// Agent
// ---------------------------------------------------------------------------

SacAgent::SacAgent(const sim::ToolSpec& tool, Variant variant, SacConfig config, uint64_t seed,
                   scene::HeteroGraphEncoder* encoder, gpt::SoftGPTModel* softgpt)
    : tool_(tool),
      variant_(variant),
      config_(config),
      encoder_(encoder),
      softgpt_(softgpt),
      actor_(tool, config.hidden, Rng(seed).fork(1).next_u64()),
      critic1_(tool, config.hidden, Rng(seed).fork(2).next_u64(), "critic1"),
      critic2_(tool, config.hidden, Rng(seed).fork(3).next_u64(), "critic2"),
      target1_(tool, config.hidden, Rng(seed).fork(2).next_u64(), "target1"),
      target2_(tool, config.hidden, Rng(seed).fork(3).next_u64(), "target2"),
      eta_(config.hidden, Rng(seed).fork(4).next_u64()),
      buffer_(config.buffer_capacity),
      actor_opt_(actor_.params(), {.lr = config.lr}),
      critic_opt_([this] {
          std::vector<ag::Parameter*> ps = critic1_.params();
          for (ag::Parameter* p : critic2_.params()) ps.push_back(p);
          return ps;
      }(), {.lr = config.lr}),
      eta_opt_(eta_.params(), {.lr = config.lr}),
      act_rng_(Rng(seed).fork(5).next_u64()),
      update_rng_(Rng(seed).fork(6).next_u64()) {
    if (encoder_ == nullptr) throw UsageError("SacAgent needs an encoder");
    if (thinking_enabled() && softgpt_ == nullptr) {
        throw ConfigError("thinking variants need a SoftGPT model");
    }
    // exact copies to start the target networks
    target1_.polyak_from(critic1_, 1.0);
    target2_.polyak_from(critic2_, 1.0);
    if (softgpt_ != nullptr && variant_ != Variant::sac) {
        std::vector<ag::Parameter*> ps = softgpt_->params();
        for (ag::Parameter* p : encoder_->params()) ps.push_back(p);
        softgpt_opt_.emplace(ps, nn::Adam::Config{.lr = config.lr});
    }
}

bool SacAgent::thinking_enabled() const { return variant_ != Variant::sac; }

bool SacAgent::eta_enabled() const {
    return variant_ == Variant::softgpt_sr || variant_ == Variant::softgpt_full;
}

Tensor SacAgent::encode_state(const skel::SkeletonGraph& g) {
    const Tensor emb = encoder_->encode_object(g);  // [1, 32]
    return Tensor({scene::kEmbedWidth},
                  std::vector<double>(emb.values().begin(), emb.values().end()));
}

Tensor SacAgent::act(const Tensor& eps, const Tensor& goal, bool deterministic) {
    return actor_.act(eps, goal, deterministic, act_rng_);
}

gpt::RolloutResult SacAgent::think(const Tensor& eps, const Tensor& goal) {
    if (!thinking_enabled()) return {};
    gpt::PolicyFn policy = [this](const Tensor& e, const Tensor& g) {
        return act(e, g, false);
    };
    return gpt::rollout(*softgpt_, *encoder_, tool_, eps, policy, config_.horizon, goal, {});
}

std::vector<const Transition*> SacAgent::sample_batch(int count) {
    return buffer_.sample(count, update_rng_);
}

SacAgent::EmbeddingBatch SacAgent::embed_batch(std::span<const Transition* const> batch) {
    const int64_t b = static_cast<int64_t>(batch.size());
    std::vector<skel::SkeletonGraph> graphs;
    graphs.reserve(static_cast<size_t>(3 * b));
    for (const Transition* t : batch) graphs.push_back(t->graph_t);
    for (const Transition* t : batch) graphs.push_back(t->graph_tp1);
    for (const Transition* t : batch) graphs.push_back(*t->goal);
    Tape tape(false);
    const Tensor all = encoder_->encode_objects_batch(tape, graphs, false).val();
    EmbeddingBatch out{Tensor({b, scene::kEmbedWidth}), Tensor({b, scene::kEmbedWidth}),
                       Tensor({b, scene::kEmbedWidth})};
    for (int64_t i = 0; i < b; ++i) {
        for (int64_t j = 0; j < scene::kEmbedWidth; ++j) {
            out.eps_t.at(i, j) = all.at(i, j);
            out.eps_tp1.at(i, j) = all.at(b + i, j);
            out.goal.at(i, j) = all.at(2 * b + i, j);
        }
    }
    return out;
}

gpt::ActorTapeFn SacAgent::make_rollout_actor(Tape&, Var goal, std::span<const Tensor> noise,
                                              bool trainable) {
    std::vector<Tensor> owned(noise.begin(), noise.end());
    return [this, goal, owned = std::move(owned), trainable](
               Tape& t, Var eps, int step_index) -> std::pair<Var, Var> {
        const Tensor& n = owned[static_cast<size_t>(step_index) % owned.size()];
        Actor::Sample s = actor_.forward(t, eps, goal, n, false, trainable);
        return {s.action, s.log_prob};
    };
}

Tensor SacAgent::critic_targets(std::span<const Transition* const> batch, CriticDiag* diag) {
    const int64_t b = static_cast<int64_t>(batch.size());
    EmbeddingBatch emb = embed_batch(batch);
    Tape tape(false);
    Var eps_next = tape.input(emb.eps_tp1);
    Var goal = tape.input(emb.goal);

    const Tensor noise = noise_tensor(update_rng_, b, actor_.action_dim());
    Actor::Sample next = actor_.forward(tape, eps_next, goal, noise, false, false);
    Var q1_direct = target1_.forward(tape, eps_next, goal, next.action, false);
    Var q2_direct = target2_.forward(tape, eps_next, goal, next.action, false);

    // eta at the next real state
    std::vector<double> eta_next(static_cast<size_t>(b), 0.0);
    if (eta_enabled()) {
        const Tensor ev = eta_.forward(tape, eps_next, goal, false).val();
        for (int64_t i = 0; i < b; ++i) eta_next[static_cast<size_t>(i)] = ev[i];
    }

    // lambda-blended target values
    std::vector<double> q_tilde_min(static_cast<size_t>(b));
    const bool think = thinking_enabled() && config_.lambda > 0.0 && config_.horizon >= 1;
    if (think) {
        const int h = config_.horizon;
        std::vector<Tensor> rollout_noise;
        for (int n = 0; n <= h; ++n) {
            rollout_noise.push_back(noise_tensor(update_rng_, b, actor_.action_dim()));
        }
        gpt::TapeRollout rollout = gpt::rollout_on_tape(
            tape, *softgpt_, *encoder_, tool_, eps_next,
            make_rollout_actor(tape, goal, rollout_noise, false), h, {}, false, next.action);
        // per-row eta and bootstrap traces
        std::vector<std::vector<double>> eta_rows(static_cast<size_t>(b)),
            q1_rows(static_cast<size_t>(b)), q2_rows(static_cast<size_t>(b));
        for (int n = 0; n < h; ++n) {
            Var emb_n = rollout.embeddings[static_cast<size_t>(n)];
            if (n + 1 < h && eta_enabled()) {
                const Tensor ev = eta_.forward(tape, emb_n, goal, false).val();
                for (int64_t i = 0; i < b; ++i) eta_rows[static_cast<size_t>(i)].push_back(ev[i]);
            } else if (n + 1 < h) {
                for (int64_t i = 0; i < b; ++i) eta_rows[static_cast<size_t>(i)].push_back(0.0);
            }
            Var a_n = rollout.actions[static_cast<size_t>(n)];
            const Tensor q1v = target1_.forward(tape, emb_n, goal, a_n, false).val();
            const Tensor q2v = target2_.forward(tape, emb_n, goal, a_n, false).val();
            for (int64_t i = 0; i < b; ++i) {
                q1_rows[static_cast<size_t>(i)].push_back(q1v[i]);
                q2_rows[static_cast<size_t>(i)].push_back(q2v[i]);
            }
        }
        for (int64_t i = 0; i < b; ++i) {
            const double qt1 = q_tilde_scalar(q1_direct.val()[i], eta_rows[static_cast<size_t>(i)],
                                              q1_rows[static_cast<size_t>(i)], config_.gamma,
                                              config_.lambda);
            const double qt2 = q_tilde_scalar(q2_direct.val()[i], eta_rows[static_cast<size_t>(i)],
                                              q2_rows[static_cast<size_t>(i)], config_.gamma,
                                              config_.lambda);
            q_tilde_min[static_cast<size_t>(i)] = std::min(qt1, qt2);
        }
    } else {
        for (int64_t i = 0; i < b; ++i) {
            q_tilde_min[static_cast<size_t>(i)] = std::min(q1_direct.val()[i], q2_direct.val()[i]);
        }
    }

    Tensor y({b, 1});
    for (int64_t i = 0; i < b; ++i) {
        const Transition& t = *batch[static_cast<size_t>(i)];
        const double bootstrap =
            q_tilde_min[static_cast<size_t>(i)] - config_.alpha * next.log_prob.val()[i];
        y[i] = t.reward + eta_next[static_cast<size_t>(i)] +
               config_.gamma * (t.done ? 0.0 : 1.0) * bootstrap;
    }
    if (diag != nullptr) {
        diag->targets.assign(y.values().begin(), y.values().end());
        diag->next_actions.assign(next.action.val().values().begin(),
                                  next.action.val().values().end());
        diag->next_logp.assign(next.log_prob.val().values().begin(),
                               next.log_prob.val().values().end());
    }
    return y;
}

Var SacAgent::build_critic_loss(Tape& tape, std::span<const Transition* const> batch,
                                const Tensor& targets) {
    const int64_t b = static_cast<int64_t>(batch.size());
    EmbeddingBatch emb = embed_batch(batch);
    Var eps = tape.input(emb.eps_t);
    Var goal = tape.input(emb.goal);
    Tensor actions({b, actor_.action_dim()});
    for (int64_t i = 0; i < b; ++i)
        for (int j = 0; j < actor_.action_dim(); ++j)
            actions.at(i, j) = batch[static_cast<size_t>(i)]->action[j];
    Var a = tape.input(std::move(actions));
    Var y = tape.input(targets);
    Var q1 = critic1_.forward(tape, eps, goal, a, true);
    Var q2 = critic2_.forward(tape, eps, goal, a, true);
    return ag::add(ag::mean_all(ag::square(ag::sub(q1, y))),
                   ag::mean_all(ag::square(ag::sub(q2, y))));
}

SacAgent::CriticDiag SacAgent::update_critics(std::span<const Transition* const> batch) {
    CriticDiag diag;
    const Tensor y = critic_targets(batch, &diag);
    Tape tape;
    Var loss = build_critic_loss(tape, batch, y);
    diag.loss = loss.val()[0];
    tape.backward(loss);
    critic_opt_.step();
    critic_opt_.zero_grad();
    target1_.polyak_from(critic1_, config_.tau);
    target2_.polyak_from(critic2_, config_.tau);
    return diag;
}

Var SacAgent::build_actor_loss(Tape& tape, std::span<const Transition* const> batch,
                               const Tensor& base_noise, std::span<const Tensor> rollout_noise) {
    const int64_t b = static_cast<int64_t>(batch.size());
    EmbeddingBatch emb = embed_batch(batch);
    Var eps = tape.input(emb.eps_t);
    Var goal = tape.input(emb.goal);

    Actor::Sample s = actor_.forward(tape, eps, goal, base_noise, false, true);
    Var q1 = critic1_.forward(tape, eps, goal, s.action, false);
    Var q2 = critic2_.forward(tape, eps, goal, s.action, false);

    Var q_tilde_1 = q1, q_tilde_2 = q2;
    const bool think = thinking_enabled() && config_.lambda > 0.0 && config_.horizon >= 1;
    if (think) {
        const int h = config_.horizon;
        gpt::TapeRollout rollout =
            gpt::rollout_on_tape(tape, *softgpt_, *encoder_, tool_, eps,
                                 make_rollout_actor(tape, goal, rollout_noise, true), h, {},
                                 false, s.action);
        std::vector<double> coef_eta, coef_q;
        q_lambda_coefficients(h, config_.gamma, config_.lambda, coef_eta, coef_q);
        Var qlam1, qlam2;
        for (int n = 0; n < h; ++n) {
            Var emb_n = rollout.embeddings[static_cast<size_t>(n)];
            Var a_n = rollout.actions[static_cast<size_t>(n)];
            Var qa = ag::scale(critic1_.forward(tape, emb_n, goal, a_n, false),
                               coef_q[static_cast<size_t>(n)]);
            Var qb = ag::scale(critic2_.forward(tape, emb_n, goal, a_n, false),
                               coef_q[static_cast<size_t>(n)]);
            qlam1 = qlam1.defined() ? ag::add(qlam1, qa) : qa;
            qlam2 = qlam2.defined() ? ag::add(qlam2, qb) : qb;
            if (n + 1 < h && eta_enabled()) {
                Var eta_n = ag::scale(eta_.forward(tape, emb_n, goal, false),
                                      coef_eta[static_cast<size_t>(n)]);
                qlam1 = ag::add(qlam1, eta_n);
                qlam2 = ag::add(qlam2, eta_n);
            }
        }
        q_tilde_1 = ag::add(ag::scale(q1, 1.0 - config_.lambda), ag::scale(qlam1, config_.lambda));
        q_tilde_2 = ag::add(ag::scale(q2, 1.0 - config_.lambda), ag::scale(qlam2, config_.lambda));
    }

    Var min_q = ag::minimum(q_tilde_1, q_tilde_2);
    Var objective = min_q;
    if (eta_enabled()) {
        objective = ag::add(objective, eta_.forward(tape, eps, goal, false));
    }
    objective = ag::sub(objective, ag::scale(s.log_prob, config_.alpha));
    (void)b;
    return ag::neg(ag::mean_all(objective));
}

double SacAgent::update_actor(std::span<const Transition* const> batch) {
    const int64_t b = static_cast<int64_t>(batch.size());
    const Tensor base_noise = noise_tensor(update_rng_, b, actor_.action_dim());
    std::vector<Tensor> rollout_noise;
    for (int n = 0; n <= config_.horizon; ++n) {
        rollout_noise.push_back(noise_tensor(update_rng_, b, actor_.action_dim()));
    }
    Tape tape;
    Var loss = build_actor_loss(tape, batch, base_noise, rollout_noise);
    const double value = loss.val()[0];
    tape.backward(loss);
    actor_opt_.step();
    actor_opt_.zero_grad();
    return value;
}

double SacAgent::update_reward_model(std::span<const Transition* const> batch) {
    const int64_t b = static_cast<int64_t>(batch.size());
    EmbeddingBatch emb = embed_batch(batch);
    Tensor rewards({b, 1});
    for (int64_t i = 0; i < b; ++i) rewards[i] = batch[static_cast<size_t>(i)]->reward;
    Tape tape;
    Var pred = eta_.forward(tape, tape.input(emb.eps_t), tape.input(emb.goal), true);
    Var loss = ag::mean_all(ag::square(ag::sub(pred, tape.input(std::move(rewards)))));
    const double value = loss.val()[0];
    tape.backward(loss);
    eta_opt_.step();
    eta_opt_.zero_grad();
    return value;
}

double SacAgent::update_softgpt(std::span<const data::SequenceRecord* const> sequences) {
    if (!softgpt_opt_.has_value()) throw UsageError("softgpt updates disabled for this variant");
    if (sequences.empty()) return 0.0;
    // clip to the model context, keeping the most recent steps
    const int64_t max_len = softgpt_->config().context + 1;
    std::vector<data::SequenceRecord> clipped;
    gpt::PretrainBatch batch;
    for (const data::SequenceRecord* seq : sequences) {
        if (seq->length() <= max_len) {
            batch.sequences.push_back(seq);
            continue;
        }
        data::SequenceRecord w;
        w.tool = seq->tool;
        w.shape = seq->shape;
        w.seed = seq->seed;
        const int64_t start = seq->length() - max_len;
        w.skeletons.assign(seq->skeletons.begin() + start, seq->skeletons.end());
        w.poses.assign(seq->poses.begin() + start, seq->poses.end());
        w.contact.assign(seq->contact.begin() + start, seq->contact.end());
        w.rewards.assign(seq->rewards.begin() + start, seq->rewards.end());
        clipped.push_back(std::move(w));
    }
    for (const data::SequenceRecord& w : clipped) batch.sequences.push_back(&w);
    batch.tool = tool_;
    gpt::PretrainConfig cfg;
    cfg.lr = config_.lr;
    Tape tape;
    gpt::PretrainLossParts parts = gpt::build_pretrain_loss(tape, *softgpt_, *encoder_, batch, cfg);
    const double value = parts.mse.val()[0];
    tape.backward(parts.total);
    softgpt_opt_->step();
    softgpt_opt_->zero_grad();
    return value;
}

void SacAgent::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    auto save_one = [&](const std::filesystem::path& file, std::vector<ag::Parameter*> ps) {
        std::vector<const ag::Parameter*> cps(ps.begin(), ps.end());
        nn::save_checkpoint(file, cps);
    };
    save_one(dir / "actor.ckpt", const_cast<SacAgent*>(this)->actor_.params());
    save_one(dir / "critic1.ckpt", const_cast<SacAgent*>(this)->critic1_.params());
    save_one(dir / "critic2.ckpt", const_cast<SacAgent*>(this)->critic2_.params());
    save_one(dir / "target1.ckpt", const_cast<SacAgent*>(this)->target1_.params());
    save_one(dir / "target2.ckpt", const_cast<SacAgent*>(this)->target2_.params());
    save_one(dir / "eta.ckpt", const_cast<SacAgent*>(this)->eta_.params());
}

void SacAgent::load(const std::filesystem::path& dir) {
    auto load_one = [&](const std::filesystem::path& file, std::vector<ag::Parameter*> ps) {
        nn::load_checkpoint(file, ps);
    };
    load_one(dir / "actor.ckpt", actor_.params());
    load_one(dir / "critic1.ckpt", critic1_.params());
    load_one(dir / "critic2.ckpt", critic2_.params());
    load_one(dir / "target1.ckpt", target1_.params());
    load_one(dir / "target2.ckpt", target2_.params());
    load_one(dir / "eta.ckpt", eta_.params());
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

skel::SkeletonGraph goal_skeleton(const sim::Environment& env, int k) {
    sim::ParticleSystem goal_ps;
    goal_ps.pos = env.target_particles();
    goal_ps.vel.assign(goal_ps.pos.size(), sim::Vec3{});
    goal_ps.rest_spacing = env.config().rest_spacing;
    const std::vector<sim::Vec3> surface = sim::surface_particles(goal_ps, k);
    return skel::extract_skeleton(surface, k);
}

namespace {

void append_csv_row(std::ofstream& csv, int episode, int step, double reward,
                    const sim::MetricReport& m, Variant variant, uint64_t seed) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%d,%.9g,%.9g,%.9g,%.9g,%s,%llu\n", episode, step, reward,
                  m.iou, m.sdf_score, m.density_score, to_string(variant).c_str(),
                  static_cast<unsigned long long>(seed));
    csv << buf;
}

Tensor random_action(const sim::ToolSpec& tool, Rng& rng) {
    const auto bounds = tool.action_bounds();
    Tensor a({tool.action_dim()});
    for (int i = 0; i < tool.action_dim(); ++i) {
        const auto [lo, hi] = bounds[static_cast<size_t>(i)];
        a[i] = rng.uniform(lo, hi);
    }
    return a;
}

}  // namespace

TrainResult train(const TrainConfig& config) {
    const sim::ToolSpec tool = sim::ToolSpec::for_task(config.task);
    Rng seed_stream(config.seed);
    const uint64_t encoder_seed = seed_stream.fork(11).next_u64();
    const uint64_t gpt_seed = seed_stream.fork(12).next_u64();
    const uint64_t agent_seed = seed_stream.fork(13).next_u64();

    scene::HeteroGraphEncoder encoder(encoder_seed);
    gpt::SoftGPTModel softgpt(config.gpt_config, gpt_seed);

    if (config.variant == Variant::softgpt_full) {
        if (config.pretrained_checkpoint.empty() ||
            !std::filesystem::exists(config.pretrained_checkpoint)) {
            throw ConfigError("softgpt_full requires a pretrained checkpoint");
        }
        std::vector<ag::Parameter*> ps = softgpt.params();
        for (ag::Parameter* p : encoder.params()) ps.push_back(p);
        nn::load_checkpoint(config.pretrained_checkpoint, ps);
    }

    SacAgent agent(tool, config.variant, config.sac, agent_seed, &encoder, &softgpt);

    std::filesystem::create_directories(config.out_dir);
    char csv_name[128];
    std::snprintf(csv_name, sizeof(csv_name), "metrics_%s_seed%llu.csv",
                  to_string(config.variant).c_str(),
                  static_cast<unsigned long long>(config.seed));
    const std::filesystem::path csv_path = config.out_dir / csv_name;
    const std::filesystem::path meta_path = config.out_dir / "meta.json";

    int start_episode = 0;
    if (config.resume && std::filesystem::exists(meta_path)) {
        std::ifstream mf(meta_path);
        nlohmann::json meta = nlohmann::json::parse(mf);
        start_episode = meta.value("episodes_completed", 0);
        agent.load(config.out_dir / "agent");
        std::vector<ag::Parameter*> ps = softgpt.params();
        for (ag::Parameter* p : encoder.params()) ps.push_back(p);
        nn::load_checkpoint(config.out_dir / "world.ckpt", ps);
    }

    std::ofstream csv(csv_path, start_episode > 0 ? std::ios::app : std::ios::trunc);
    if (!csv) throw IoError("cannot write metrics CSV: " + csv_path.string());
    if (start_episode == 0) {
        csv << "episode,step,reward,iou,sdf_score,density_score,variant,seed\n";
    }

    sim::Environment env(config.task, config.shape, 0, config.sim_config);
    Rng warmup_rng(seed_stream.fork(14).next_u64());

    TrainResult result;
    result.csv_path = csv_path;

    std::vector<data::SequenceRecord> recent_episodes;
    Rng softgpt_sample_rng(seed_stream.fork(15).next_u64());
    int64_t global_step = static_cast<int64_t>(start_episode) * config.steps_per_episode;

    for (int episode = start_episode; episode < config.episodes; ++episode) {
        const uint64_t ep_seed = Rng(config.seed).fork(1000 + static_cast<uint64_t>(episode)).next_u64();
        env.reset(ep_seed);
        auto goal = std::make_shared<const skel::SkeletonGraph>(goal_skeleton(env, config.skeleton_k));

        data::SequenceRecord rec;
        rec.tool = tool.kind;
        rec.shape = config.shape;
        rec.seed = ep_seed;

        skel::SkeletonGraph skeleton_t = skel::extract_skeleton(
            sim::surface_particles(env.particles(), config.skeleton_k), config.skeleton_k);
        rec.skeletons.push_back(skeleton_t);
        rec.poses.push_back(env.tool_pose());
        rec.contact.push_back(0);
        rec.rewards.push_back(0.0);

        sim::MetricReport prev_metrics = env.metrics();
        std::vector<sim::ToolPose> prev_tail;
        double ep_return = 0.0;

        for (int step = 0; step < config.steps_per_episode; ++step) {
            const Tensor eps = agent.encode_state(skeleton_t);
            const Tensor goal_emb = agent.encode_state(*goal);
            const Tensor action = global_step < config.sac.warmup_random_steps
                                      ? random_action(tool, warmup_rng)
                                      : agent.act(eps, goal_emb, false);
            const sim::ToolPose pose_target = agent.action_to_pose(action);
            const std::vector<sim::ToolPose> waypoints =
                plan_trajectory(env.tool_pose(), pose_target, prev_tail);
            const bool contact = env.step_waypoints(waypoints);
            prev_tail.assign(waypoints.end() - 4, waypoints.end());

            const sim::MetricReport metrics = env.metrics();
            const double delta = metrics.reward - prev_metrics.reward;
            prev_metrics = metrics;
            ep_return += delta;

            skel::SkeletonGraph skeleton_tp1 = skel::extract_skeleton(
                sim::surface_particles(env.particles(), config.skeleton_k), config.skeleton_k);
            const bool done = step == config.steps_per_episode - 1;

            Transition tr;
            tr.graph_t = skeleton_t;
            tr.graph_tp1 = skeleton_tp1;
            tr.goal = goal;
            tr.action = action;
            tr.reward = delta * config.sac.reward_scale;
            tr.done = done;
            agent.store(std::move(tr));

            rec.skeletons.push_back(skeleton_tp1);
            rec.poses.push_back(pose_target);
            rec.contact.push_back(contact ? 1 : 0);
            rec.rewards.push_back(delta);

            append_csv_row(csv, episode, step, delta, metrics, config.variant, config.seed);

            ++global_step;
            if (global_step % config.sac.update_every == 0 && agent.buffer_size() > 0) {
                result.events.push_back({static_cast<int>(global_step), "policy"});
                const int bsz = static_cast<int>(
                    std::min<int64_t>(config.sac.batch, agent.buffer_size()));
                for (int u = 0; u < config.sac.updates_per_event; ++u) {
                    auto batch = agent.sample_batch(bsz);
                    agent.update_critics(batch);
                    agent.update_actor(batch);
                    if (agent.eta_enabled()) agent.update_reward_model(batch);
                }
            }
            if (config.variant != Variant::sac && global_step % config.sac.softgpt_every == 0 &&
                !recent_episodes.empty()) {
                result.events.push_back({static_cast<int>(global_step), "softgpt"});
                for (int u = 0; u < config.sac.softgpt_updates_per_event; ++u) {
                    std::vector<const data::SequenceRecord*> seqs;
                    for (int s = 0; s < config.sac.softgpt_batch; ++s) {
                        seqs.push_back(&recent_episodes[static_cast<size_t>(
                            softgpt_sample_rng.uniform_int(static_cast<int64_t>(recent_episodes.size())))]);
                    }
                    agent.update_softgpt(seqs);
                }
            }
            skeleton_t = std::move(skeleton_tp1);
        }
        result.episode_returns.push_back(ep_return);
        csv.flush();

        recent_episodes.push_back(std::move(rec));
        if (recent_episodes.size() > 64) {
            recent_episodes.erase(recent_episodes.begin());
        }
        result.episodes_completed = episode + 1;
    }

    if (config.save_checkpoints) {
        agent.save(config.out_dir / "agent");
        std::vector<ag::Parameter*> ps = softgpt.params();
        for (ag::Parameter* p : encoder.params()) ps.push_back(p);
        std::vector<const ag::Parameter*> cps(ps.begin(), ps.end());
        nlohmann::json wmeta = softgpt.meta();
        wmeta["tool"] = sim::to_string(tool.kind);
        nn::save_checkpoint(config.out_dir / "world.ckpt", cps, wmeta);

        nlohmann::json meta;
        meta["variant"] = to_string(config.variant);
        meta["task"] = sim::to_string(config.task);
        meta["shape"] = sim::to_string(config.shape);
        meta["seed"] = config.seed;
        meta["episodes_completed"] = result.episodes_completed;
        meta["skeleton_k"] = config.skeleton_k;
        meta["action_dim"] = tool.action_dim();
        std::ofstream mf(meta_path, std::ios::trunc);
        mf << meta.dump(2) << '\n';
    }
    return result;
}

}  // namespace softworld::rl
