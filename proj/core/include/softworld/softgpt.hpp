#pragma once

#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "softworld/autograd.hpp"
#include "softworld/dataset.hpp"
#include "softworld/scene_graph.hpp"

namespace softworld::gpt {

struct SoftGPTConfig {
    int layers = 12;
    int heads = 4;
    int64_t width = 32;
    int64_t context = 64;
};

/// Decoder-only transformer over scene-embedding sequences: input projection,
/// learned positional embeddings, pre-layer-norm residual blocks
/// (LN -> causal attention -> residual; LN -> 4x GELU MLP -> residual),
/// final layer norm and a linear head predicting the next object embedding.
class SoftGPTModel {
public:
    SoftGPTModel(SoftGPTConfig config, uint64_t seed);

    const SoftGPTConfig& config() const { return cfg_; }

    /// Per-position predictions, same leading shape as the input
    /// ([B,T,width] or [T,width]).
    ag::Var forward(ag::Tape& tape, ag::Var seq, bool trainable = true);

    /// One-step prediction from a history of scene embeddings (each [width]
    /// or [1,width]); reads the last position. Throws UsageError when the
    /// history is empty or longer than the context.
    Tensor predict_next(std::span<const Tensor> history);

    std::vector<ag::Parameter*> params();
    nlohmann::json meta() const;

private:
    SoftGPTConfig cfg_;
    ag::Parameter in_w_, in_b_;
    ag::Parameter wpe_;
    struct Block {
        ag::Parameter ln1_g, ln1_b;
        ag::Parameter wqkv, bqkv, wo, bo;
        ag::Parameter ln2_g, ln2_b;
        ag::Parameter mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    };
    std::vector<Block> blocks_;
    ag::Parameter lnf_g_, lnf_b_;
    ag::Parameter head_w_, head_b_;
};

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

struct PretrainConfig {
    int epochs = 50;
    int batch = 32;  // sequences per optimizer step
    double lr = 3e-4;
    double variance_floor = 0.05;   // per-dim batch variance floor
    double variance_weight = 0.1;
    double holdout_fraction = 0.1;
    uint64_t seed = 0;
};

struct PretrainReport {
    std::vector<double> epoch_mse;  // train MSE per epoch (regression term only)
    double holdout_mse = 0.0;
    double persistence_mse = 0.0;  // predict eps_{t+1} = eps_t under the final encoder
    int64_t train_transitions = 0;
    int64_t holdout_transitions = 0;
};

/// A pretraining batch: shifted sequences ready for loss construction.
struct PretrainBatch {
    // per sequence: skeletons s_0..s_{L-1} and poses p_0..p_{L-1}
    std::vector<const data::SequenceRecord*> sequences;
    sim::ToolSpec tool;
};

struct PretrainLossParts {
    ag::Var total;
    ag::Var mse;       // scalar regression term
    ag::Var variance;  // scalar floor penalty (pre-weight)
    int64_t transitions = 0;
};

/// Builds the next-embedding regression loss on `tape`: scene embeddings of
/// the shifted pairs feed the transformer; targets are stage-1 encodings of
/// the next skeletons with gradients blocked.
PretrainLossParts build_pretrain_loss(ag::Tape& tape, SoftGPTModel& model,
                                      scene::HeteroGraphEncoder& encoder,
                                      const PretrainBatch& batch, const PretrainConfig& cfg);

/// Trains model and encoder jointly (Adam) on the dataset's contact runs.
PretrainReport pretrain(SoftGPTModel& model, scene::HeteroGraphEncoder& encoder,
                        const data::Dataset& dataset, const PretrainConfig& cfg);

// ---------------------------------------------------------------------------
// Imagined rollout
// ---------------------------------------------------------------------------

/// Tape-level actor: returns (action in pose units [B,act_dim], log-prob
/// [B,1]) for the imagined state at `step_index`.
using ActorTapeFn =
    std::function<std::pair<ag::Var, ag::Var>(ag::Tape&, ag::Var eps, int step_index)>;

struct TapeRollout {
    std::vector<ag::Var> embeddings;      // H entries, each [B,width]
    std::vector<ag::Var> actions;         // H entries: policy action AT each imagined state
    std::vector<ag::Var> action_logps;    // H entries, [B,1]
    ag::Var entry_action;                 // the pose consumed at the base state
};

/// Alternates policy poses with one-step predictions: scene embeddings come
/// from the predicted-state encoder path, the context grows within the model
/// context window. `first_action` (optional) seeds the pose applied at the
/// base state; when undefined the actor is queried at the base state.
TapeRollout rollout_on_tape(ag::Tape& tape, SoftGPTModel& model,
                            scene::HeteroGraphEncoder& encoder, const sim::ToolSpec& tool,
                            ag::Var eps_base, const ActorTapeFn& actor, int horizon,
                            std::span<const ag::Var> history_prefix, bool params_trainable,
                            ag::Var first_action = {});

struct RolloutResult {
    std::vector<Tensor> embeddings;     // H x [width]
    std::vector<sim::ToolPose> poses;   // H poses (entry pose first)
};

using PolicyFn = std::function<Tensor(const Tensor& eps, const Tensor& goal)>;  // -> action vector

/// Value-level imagined rollout (no-grad). Throws UsageError when
/// horizon < 1 or history length + horizon exceeds the context window.
RolloutResult rollout(SoftGPTModel& model, scene::HeteroGraphEncoder& encoder,
                      const sim::ToolSpec& tool, const Tensor& eps_t, const PolicyFn& policy,
                      int horizon, const Tensor& goal_embedding,
                      std::span<const Tensor> history = {});

/// Pose features on tape from an action Var [B,act_dim].
ag::Var action_to_manip_features(ag::Tape& tape, ag::Var action, sim::ToolKind tool);

}  // namespace softworld::gpt
