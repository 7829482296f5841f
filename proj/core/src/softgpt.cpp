#include "softworld/softgpt.hpp"

#include <algorithm>
#include <cmath>

#include "softworld/errors.hpp"
#include "softworld/nn.hpp"

namespace softworld::gpt {

using ag::Tape;
using ag::Var;

namespace {

Tensor gpt_init(uint64_t seed, uint64_t stream, std::vector<int64_t> shape) {
    Rng rng = Rng(seed).fork(0x96f70000ULL + stream);
    return nn::scaled_normal(std::move(shape), rng);
}

Var pv(Tape& tape, ag::Parameter& p, bool trainable) {
    return trainable ? tape.param(p) : tape.frozen(p);
}

}  // namespace

SoftGPTModel::SoftGPTModel(SoftGPTConfig config, uint64_t seed)
    : cfg_(config),
      in_w_("softgpt/in_w", gpt_init(seed, 0, {config.width, config.width})),
      in_b_("softgpt/in_b", Tensor::zeros({config.width})),
      wpe_("softgpt/wpe", [&] {
          Rng rng = Rng(seed).fork(0x96f7ffffULL);
          return nn::normal_init({config.context, config.width}, rng, 0.01);
      }()),
      lnf_g_("softgpt/lnf_g", Tensor::full({cfg_.width}, 1.0)),
      lnf_b_("softgpt/lnf_b", Tensor::zeros({cfg_.width})),
      head_w_("softgpt/head_w", gpt_init(seed, 1, {cfg_.width, cfg_.width})),
      head_b_("softgpt/head_b", Tensor::zeros({cfg_.width})) {
    if (cfg_.width % cfg_.heads != 0) {
        throw ConfigError("softgpt: hidden width not divisible by head count");
    }
    blocks_.reserve(static_cast<size_t>(cfg_.layers));
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string prefix = "softgpt/block" + std::to_string(l) + "/";
        const uint64_t s = 16 + static_cast<uint64_t>(l) * 8;
        blocks_.push_back(Block{
            {prefix + "ln1_g", Tensor::full({cfg_.width}, 1.0)},
            {prefix + "ln1_b", Tensor::zeros({cfg_.width})},
            {prefix + "wqkv", gpt_init(seed, s + 0, {cfg_.width, 3 * cfg_.width})},
            {prefix + "bqkv", Tensor::zeros({3 * cfg_.width})},
            {prefix + "wo", gpt_init(seed, s + 1, {cfg_.width, cfg_.width})},
            {prefix + "bo", Tensor::zeros({cfg_.width})},
            {prefix + "ln2_g", Tensor::full({cfg_.width}, 1.0)},
            {prefix + "ln2_b", Tensor::zeros({cfg_.width})},
            {prefix + "mlp_w1", gpt_init(seed, s + 2, {cfg_.width, 4 * cfg_.width})},
            {prefix + "mlp_b1", Tensor::zeros({4 * cfg_.width})},
            {prefix + "mlp_w2", gpt_init(seed, s + 3, {4 * cfg_.width, cfg_.width})},
            {prefix + "mlp_b2", Tensor::zeros({cfg_.width})},
        });
    }
}

std::vector<ag::Parameter*> SoftGPTModel::params() {
    std::vector<ag::Parameter*> out = {&in_w_, &in_b_, &wpe_, &lnf_g_, &lnf_b_, &head_w_, &head_b_};
    for (Block& b : blocks_) {
        for (ag::Parameter* p : {&b.ln1_g, &b.ln1_b, &b.wqkv, &b.bqkv, &b.wo, &b.bo, &b.ln2_g,
                                 &b.ln2_b, &b.mlp_w1, &b.mlp_b1, &b.mlp_w2, &b.mlp_b2}) {
            out.push_back(p);
        }
    }
    return out;
}

nlohmann::json SoftGPTModel::meta() const {
    nlohmann::json j;
    j["layers"] = cfg_.layers;
    j["heads"] = cfg_.heads;
    j["width"] = cfg_.width;
    j["context"] = cfg_.context;
    return j;
}

Var SoftGPTModel::forward(Tape& tape, Var seq, bool trainable) {
    const Tensor& sv = seq.val();
    const bool batched = sv.ndim() == 3;
    if (!batched && sv.ndim() != 2) throw ShapeError("softgpt: input must be [T,w] or [B,T,w]");
    const int64_t b = batched ? sv.dim(0) : 1;
    const int64_t tt = batched ? sv.dim(1) : sv.dim(0);
    const int64_t w = cfg_.width;
    if (sv.cols() != w) throw ShapeError("softgpt: embedding width mismatch");
    if (tt < 1 || tt > cfg_.context) throw UsageError("softgpt: sequence length outside context");

    Var x = ag::affine(seq, pv(tape, in_w_, trainable), pv(tape, in_b_, trainable));
    // learned positional embeddings, tiled across the batch
    Var pos = ag::slice_rows(pv(tape, wpe_, trainable), 0, tt);
    if (b > 1) {
        std::vector<Var> copies(static_cast<size_t>(b), pos);
        pos = ag::concat_rows(copies);
    }
    x = ag::add(x, pos);
    x = ag::reshape(x, {b, tt, w});

    for (Block& blk : blocks_) {
        Var normed = ag::layer_norm(x, pv(tape, blk.ln1_g, trainable),
                                    pv(tape, blk.ln1_b, trainable), 1e-5);
        Var attn = ag::causal_attention(normed, pv(tape, blk.wqkv, trainable),
                                        pv(tape, blk.bqkv, trainable), pv(tape, blk.wo, trainable),
                                        pv(tape, blk.bo, trainable), cfg_.heads);
        x = ag::add(x, attn);
        Var normed2 = ag::layer_norm(x, pv(tape, blk.ln2_g, trainable),
                                     pv(tape, blk.ln2_b, trainable), 1e-5);
        Var h = ag::gelu(ag::affine(normed2, pv(tape, blk.mlp_w1, trainable),
                                    pv(tape, blk.mlp_b1, trainable)));
        Var mlp = ag::affine(h, pv(tape, blk.mlp_w2, trainable), pv(tape, blk.mlp_b2, trainable));
        x = ag::add(x, ag::reshape(mlp, {b, tt, w}));
    }
    Var out = ag::layer_norm(x, pv(tape, lnf_g_, trainable), pv(tape, lnf_b_, trainable), 1e-5);
    out = ag::affine(out, pv(tape, head_w_, trainable), pv(tape, head_b_, trainable));
    return batched ? ag::reshape(out, {b, tt, w}) : ag::reshape(out, {tt, w});
}

Tensor SoftGPTModel::predict_next(std::span<const Tensor> history) {
    const int64_t tt = static_cast<int64_t>(history.size());
    if (tt < 1) throw UsageError("predict_next: empty history");
    if (tt > cfg_.context) throw UsageError("predict_next: history exceeds context length");
    Tensor seq({tt, cfg_.width});
    for (int64_t t = 0; t < tt; ++t) {
        const Tensor& h = history[static_cast<size_t>(t)];
        if (h.size() != cfg_.width) throw ShapeError("predict_next: embedding width mismatch");
        for (int64_t j = 0; j < cfg_.width; ++j) seq.at(t, j) = h[j];
    }
    Tape tape(false);
    Var out = forward(tape, tape.input(std::move(seq)), false);
    Tensor pred({cfg_.width});
    for (int64_t j = 0; j < cfg_.width; ++j) pred[j] = out.val().at(tt - 1, j);
    return pred;
}

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

PretrainLossParts build_pretrain_loss(Tape& tape, SoftGPTModel& model,
                                      scene::HeteroGraphEncoder& encoder,
                                      const PretrainBatch& batch, const PretrainConfig& cfg) {
    const int64_t width = model.config().width;
    const int64_t b = static_cast<int64_t>(batch.sequences.size());
    if (b == 0) throw UsageError("pretrain batch is empty");

    // shifted inputs: scene graph of (skeleton_i, pose_{i+1}) for i < L-1
    std::vector<scene::SceneGraph> input_graphs;
    std::vector<skel::SkeletonGraph> target_skeletons;
    std::vector<int64_t> lengths;  // transitions per sequence
    int64_t t_max = 0;
    for (const data::SequenceRecord* seq : batch.sequences) {
        const int64_t transitions = seq->length() - 1;
        lengths.push_back(transitions);
        t_max = std::max(t_max, transitions);
        for (int64_t i = 0; i < transitions; ++i) {
            input_graphs.push_back(scene::build_scene_graph(seq->skeletons[static_cast<size_t>(i)],
                                                     batch.tool,
                                                     seq->poses[static_cast<size_t>(i + 1)]));
            target_skeletons.push_back(seq->skeletons[static_cast<size_t>(i + 1)]);
        }
    }
    if (t_max > model.config().context) {
        throw UsageError("pretrain: sequence longer than model context");
    }

    auto enc = encoder.encode_batch(tape, input_graphs);
    Var scene_embs = enc.scene_embeddings;  // [total, 32]
    // target embeddings from the stage-1 object encoder, gradients blocked
    Var targets_flat = ag::detach(encoder.encode_objects_batch(tape, target_skeletons));

    // pad per-sequence rows to t_max and stack into [B, t_max, w]
    Var zero_row = tape.input(Tensor::zeros({1, width}));
    std::vector<Var> seq_rows;
    Tensor mask({b * t_max, 1});
    int64_t row = 0;
    for (int64_t s = 0; s < b; ++s) {
        const int64_t len = lengths[static_cast<size_t>(s)];
        seq_rows.push_back(ag::slice_rows(scene_embs, row, row + len));
        for (int64_t i = 0; i < len; ++i) mask[s * t_max + i] = 1.0;
        if (len < t_max) {
            std::vector<Var> pad(static_cast<size_t>(t_max - len), zero_row);
            seq_rows.push_back(ag::concat_rows(pad));
        }
        row += len;
    }
    Var seq_flat = ag::concat_rows(seq_rows);           // [B*t_max, w], b-major
    Var seq3 = ag::reshape(seq_flat, {b, t_max, width});
    Var preds = ag::reshape(model.forward(tape, seq3), {b * t_max, width});

    // scatter targets into the same padded layout (constant rows where padded)
    std::vector<Var> target_rows;
    row = 0;
    for (int64_t s = 0; s < b; ++s) {
        const int64_t len = lengths[static_cast<size_t>(s)];
        target_rows.push_back(ag::slice_rows(targets_flat, row, row + len));
        if (len < t_max) {
            std::vector<Var> pad(static_cast<size_t>(t_max - len), zero_row);
            target_rows.push_back(ag::concat_rows(pad));
        }
        row += len;
    }
    Var targets_padded = ag::concat_rows(target_rows);

    const int64_t valid = row;
    Var sq = ag::square(ag::sub(preds, targets_padded));
    Var masked = ag::mul_const(ag::row_sum(sq), std::move(mask));
    Var mse = ag::scale(ag::sum_all(masked), 1.0 / (static_cast<double>(valid) * width));

    // variance floor on the online-path object embeddings fights collapse
    Var obj = enc.object_embeddings;  // [total, 32]
    Var mean = ag::mean_rows(obj);
    Var centered = ag::sub(obj, ag::repeat_rows(mean, obj.val().rows()));
    Var var_per_dim = ag::mean_rows(ag::square(centered));  // [1, w]
    Var deficit = ag::relu(ag::add_scalar(ag::neg(var_per_dim), cfg.variance_floor));
    Var penalty = ag::mean_all(deficit);

    PretrainLossParts parts{ag::add(mse, ag::scale(penalty, cfg.variance_weight)), mse, penalty,
                            valid};
    return parts;
}

namespace {

/// Splits long runs into context-sized windows and drops length-1 stubs.
std::vector<data::SequenceRecord> windowed_sequences(const data::Dataset& dataset,
                                                     int64_t context) {
    std::vector<data::SequenceRecord> out;
    const int64_t max_len = context + 1;  // L steps give L-1 transformer positions
    for (const data::SequenceRecord& seq : dataset.sequences) {
        for (int64_t start = 0; start + 1 < seq.length(); start += max_len - 1) {
            const int64_t end = std::min(seq.length(), start + max_len);
            if (end - start < 2) break;
            data::SequenceRecord w;
            w.tool = seq.tool;
            w.shape = seq.shape;
            w.seed = seq.seed;
            w.skeletons.assign(seq.skeletons.begin() + start, seq.skeletons.begin() + end);
            w.poses.assign(seq.poses.begin() + start, seq.poses.begin() + end);
            w.contact.assign(seq.contact.begin() + start, seq.contact.begin() + end);
            w.rewards.assign(seq.rewards.begin() + start, seq.rewards.begin() + end);
            out.push_back(std::move(w));
        }
    }
    return out;
}

double eval_holdout_mse(SoftGPTModel& model, scene::HeteroGraphEncoder& encoder,
                        std::span<const data::SequenceRecord* const> sequences,
                        double* persistence_mse) {
    double model_sum = 0.0, persist_sum = 0.0;
    int64_t count = 0;
    const int64_t width = model.config().width;
    for (const data::SequenceRecord* seq : sequences) {
        const sim::ToolSpec tool = sim::ToolSpec::for_kind(seq->tool);
        Tape tape(false);
        const int64_t transitions = seq->length() - 1;
        std::vector<scene::SceneGraph> graphs;
        std::vector<skel::SkeletonGraph> targets, currents;
        for (int64_t i = 0; i < transitions; ++i) {
            graphs.push_back(scene::build_scene_graph(seq->skeletons[static_cast<size_t>(i)], tool,
                                               seq->poses[static_cast<size_t>(i + 1)]));
            targets.push_back(seq->skeletons[static_cast<size_t>(i + 1)]);
            currents.push_back(seq->skeletons[static_cast<size_t>(i)]);
        }
        auto enc = encoder.encode_batch(tape, graphs, false);
        Var target_embs = encoder.encode_objects_batch(tape, targets, false);
        Var current_embs = encoder.encode_objects_batch(tape, currents, false);
        Var seq3 = ag::reshape(enc.scene_embeddings, {1, transitions, width});
        Var preds = ag::reshape(model.forward(tape, seq3, false), {transitions, width});
        const Tensor& pv_ = preds.val();
        const Tensor& tv = target_embs.val();
        const Tensor& cv = current_embs.val();
        for (int64_t i = 0; i < transitions; ++i) {
            for (int64_t j = 0; j < width; ++j) {
                const double dm = pv_.at(i, j) - tv.at(i, j);
                const double dp = cv.at(i, j) - tv.at(i, j);
                model_sum += dm * dm;
                persist_sum += dp * dp;
            }
            ++count;
        }
    }
    if (count == 0) {
        if (persistence_mse != nullptr) *persistence_mse = 0.0;
        return 0.0;
    }
    if (persistence_mse != nullptr) {
        *persistence_mse = persist_sum / (static_cast<double>(count) * width);
    }
    return model_sum / (static_cast<double>(count) * width);
}

}  // namespace

PretrainReport pretrain(SoftGPTModel& model, scene::HeteroGraphEncoder& encoder,
                        const data::Dataset& dataset, const PretrainConfig& cfg) {
    std::vector<data::SequenceRecord> windows = windowed_sequences(dataset, model.config().context);
    if (windows.empty()) throw UsageError("pretrain: dataset has no usable sequences");

    // deterministic shuffle, then split the tail off as held-out data
    Rng rng = Rng(cfg.seed).fork(0x9e7a11);
    for (size_t i = windows.size(); i > 1; --i) {
        std::swap(windows[i - 1], windows[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
    }
    size_t holdout_count =
        windows.size() > 1
            ? std::max<size_t>(1, static_cast<size_t>(std::llround(cfg.holdout_fraction *
                                                                   static_cast<double>(windows.size()))))
            : 0;
    const size_t train_count = windows.size() - holdout_count;
    std::vector<const data::SequenceRecord*> train_seqs, holdout_seqs;
    for (size_t i = 0; i < train_count; ++i) train_seqs.push_back(&windows[i]);
    for (size_t i = train_count; i < windows.size(); ++i) holdout_seqs.push_back(&windows[i]);
    if (train_seqs.empty()) throw UsageError("pretrain: no training sequences after split");

    std::vector<ag::Parameter*> all_params = model.params();
    for (ag::Parameter* p : encoder.params()) all_params.push_back(p);
    nn::Adam opt(all_params, {.lr = cfg.lr});
    opt.zero_grad();

    PretrainReport report;
    for (const data::SequenceRecord* s : train_seqs) report.train_transitions += s->length() - 1;
    for (const data::SequenceRecord* s : holdout_seqs) report.holdout_transitions += s->length() - 1;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // deterministic per-epoch order
        std::vector<const data::SequenceRecord*> order = train_seqs;
        Rng erng = Rng(cfg.seed).fork(0xe60c + static_cast<uint64_t>(epoch));
        for (size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<size_t>(erng.uniform_int(static_cast<int64_t>(i)))]);
        }
        double epoch_mse = 0.0;
        int64_t epoch_transitions = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
            PretrainBatch batch;
            batch.sequences.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
            batch.tool = sim::ToolSpec::for_kind(batch.sequences.front()->tool);
            Tape tape;
            PretrainLossParts parts = build_pretrain_loss(tape, model, encoder, batch, cfg);
            if (!std::isfinite(parts.total.val()[0])) throw TrainingError("pretrain loss non-finite");
            tape.backward(parts.total);
            opt.step();
            opt.zero_grad();
            epoch_mse += parts.mse.val()[0] * static_cast<double>(parts.transitions);
            epoch_transitions += parts.transitions;
        }
        report.epoch_mse.push_back(epoch_mse / static_cast<double>(epoch_transitions));
    }

    if (!holdout_seqs.empty()) {
        report.holdout_mse = eval_holdout_mse(model, encoder, holdout_seqs, &report.persistence_mse);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Imagined rollout
// ---------------------------------------------------------------------------

ag::Var action_to_manip_features(Tape& tape, Var action, sim::ToolKind tool) {
    const int64_t b = action.val().rows();
    if (tool == sim::ToolKind::dual_flats) {
        if (action.val().cols() != 7) throw ShapeError("dual flats action must be 7-dim");
        Var zeros3 = tape.input(Tensor::zeros({b, 3}));
        Var yaw = ag::slice_cols(action, 6, 7);
        Var rows_a = ag::concat_cols(ag::concat_cols(ag::slice_cols(action, 0, 3), yaw), zeros3);
        Var rows_b = ag::concat_cols(ag::concat_cols(ag::slice_cols(action, 3, 6), yaw), zeros3);
        const Var parts[] = {rows_a, rows_b};
        return ag::concat_rows(parts);  // [2B, 7], block-wise
    }
    if (action.val().cols() != 3) throw ShapeError("single-tool action must be 3-dim");
    Var zeros4 = tape.input(Tensor::zeros({b, 4}));
    return ag::concat_cols(action, zeros4);  // [B, 7]
}

TapeRollout rollout_on_tape(Tape& tape, SoftGPTModel& model, scene::HeteroGraphEncoder& encoder,
                            const sim::ToolSpec& tool, Var eps_base, const ActorTapeFn& actor,
                            int horizon, std::span<const ag::Var> history_prefix,
                            bool params_trainable, Var first_action) {
    if (horizon < 1) throw UsageError("rollout: horizon must be at least 1");
    const int64_t prefix = static_cast<int64_t>(history_prefix.size());
    if (prefix + horizon > model.config().context) {
        throw UsageError("rollout: horizon exceeds remaining context window");
    }
    const int64_t b = eps_base.val().rows();
    const int64_t width = model.config().width;
    const int manip_per_graph = tool.kind == sim::ToolKind::dual_flats ? 2 : 1;

    TapeRollout out;
    std::vector<Var> context(history_prefix.begin(), history_prefix.end());
    Var eps = eps_base;
    for (int n = 0; n < horizon; ++n) {
        Var action, logp;
        if (n == 0 && first_action.defined()) {
            action = first_action;
        } else {
            std::tie(action, logp) = actor(tape, eps, n);
        }
        if (n == 0) {
            out.entry_action = action;
        }
        Var manip = action_to_manip_features(tape, action, tool.kind);
        Var u = encoder.encode_with_predicted_var(tape, eps, manip, manip_per_graph,
                                                  params_trainable);
        context.push_back(u);
        Var seq = ag::stack_time(context);  // [B, |ctx|, w]
        Var preds = model.forward(tape, seq, params_trainable);
        const int64_t tt = static_cast<int64_t>(context.size());
        std::vector<std::vector<int64_t>> last_rows(static_cast<size_t>(b));
        for (int64_t bi = 0; bi < b; ++bi) last_rows[static_cast<size_t>(bi)] = {bi * tt + tt - 1};
        eps = ag::group_mean_rows(ag::reshape(preds, {b * tt, width}), last_rows);
        out.embeddings.push_back(eps);
        // policy action at the new imagined state (used for value bootstraps
        // and to continue the loop)
        auto [next_action, next_logp] = actor(tape, eps, n + 1);
        out.actions.push_back(next_action);
        out.action_logps.push_back(next_logp);
    }
    return out;
}

RolloutResult rollout(SoftGPTModel& model, scene::HeteroGraphEncoder& encoder,
                      const sim::ToolSpec& tool, const Tensor& eps_t, const PolicyFn& policy,
                      int horizon, const Tensor& goal_embedding, std::span<const Tensor> history) {
    if (horizon < 1) throw UsageError("rollout: horizon must be at least 1");
    if (static_cast<int64_t>(history.size()) + horizon > model.config().context) {
        throw UsageError("rollout: horizon exceeds remaining context window");
    }
    const int64_t width = model.config().width;

    RolloutResult out;
    std::vector<Tensor> context(history.begin(), history.end());
    Tensor eps = eps_t;
    for (int n = 0; n < horizon; ++n) {
        const Tensor action = policy(eps, goal_embedding);
        sim::ToolPose pose;
        pose.dim = tool.action_dim();
        for (int i = 0; i < pose.dim; ++i) pose.q[static_cast<size_t>(i)] = action[i];
        out.poses.push_back(pose);

        Tensor eps_row({1, width});
        for (int64_t j = 0; j < width; ++j) eps_row[j] = eps[j];
        const Tensor u = encoder.encode_with_predicted(eps_row, tool, pose);
        Tensor u_flat({width});
        for (int64_t j = 0; j < width; ++j) u_flat[j] = u[j];
        context.push_back(u_flat);
        eps = model.predict_next(context);
        out.embeddings.push_back(eps);
    }
    return out;
}

}  // namespace softworld::gpt
