#include "softworld/scene_graph.hpp"

#include "softworld/errors.hpp"

namespace softworld::scene {

using ag::Edge;
using ag::Tape;
using ag::Var;

Tensor pose_features(const sim::ToolSpec& tool, const sim::ToolPose& pose) {
    if (tool.kind == sim::ToolKind::dual_flats) {
        Tensor f({2, kManipFeatWidth});
        const sim::Vec3 a = pose.center_a(), b = pose.center_b();
        f.at(0, 0) = a.x; f.at(0, 1) = a.y; f.at(0, 2) = a.z; f.at(0, 3) = pose.yaw();
        f.at(1, 0) = b.x; f.at(1, 1) = b.y; f.at(1, 2) = b.z; f.at(1, 3) = pose.yaw();
        return f;
    }
    Tensor f({1, kManipFeatWidth});
    const sim::Vec3 c = pose.center_a();
    f.at(0, 0) = c.x; f.at(0, 1) = c.y; f.at(0, 2) = c.z;
    return f;
}

SceneGraph build_scene_graph(const skel::SkeletonGraph& skeleton, const sim::ToolSpec& tool,
                             const sim::ToolPose& pose) {
    SceneGraph g;
    g.tool = tool.kind;
    const int64_t k = skeleton.k();
    g.object_feats = Tensor({k, kObjectFeatWidth});
    for (int64_t i = 0; i < k; ++i) {
        const skel::SkeletonNode& n = skeleton.nodes[static_cast<size_t>(i)];
        g.object_feats.at(i, 0) = n.pos.x;
        g.object_feats.at(i, 1) = n.pos.y;
        g.object_feats.at(i, 2) = n.pos.z;
        g.object_feats.at(i, 3) = n.radius;
    }
    g.manip_feats = pose_features(tool, pose);
    g.object_edges = skeleton.edges;
    return g;
}

std::vector<ShiftedSample> shift_dataset(std::span<const skel::SkeletonGraph> skeletons,
                                         std::span<const sim::ToolPose> poses) {
    if (skeletons.size() != poses.size()) {
        throw UsageError("shift_dataset: skeleton/pose counts differ");
    }
    if (skeletons.size() < 2) {
        throw InsufficientDataError("shift_dataset: need at least 2 steps");
    }
    std::vector<ShiftedSample> out;
    out.reserve(skeletons.size() - 1);
    for (size_t i = 0; i + 1 < skeletons.size(); ++i) {
        ShiftedSample s;
        s.skeleton_index = static_cast<int>(i);
        s.pose_index = static_cast<int>(i) + 1;
        s.skeleton = skeletons[i];
        s.pose = poses[i + 1];
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

namespace {

Var pv(Tape& tape, ag::Parameter& p, bool trainable) {
    return trainable ? tape.param(p) : tape.frozen(p);
}

std::vector<Edge> directed_object_edges(const std::vector<std::pair<int, int>>& undirected,
                                        int32_t offset) {
    std::vector<Edge> out;
    out.reserve(undirected.size() * 2);
    for (const auto& [a, b] : undirected) {
        out.push_back({offset + a, offset + b});
        out.push_back({offset + b, offset + a});
    }
    return out;
}

}  // namespace

namespace {

Tensor enc_init(uint64_t seed, uint64_t stream, std::vector<int64_t> shape) {
    Rng rng = Rng(seed).fork(0xe9c0de00ULL + stream);
    return nn::scaled_normal(std::move(shape), rng);
}

}  // namespace

HeteroGraphEncoder::HeteroGraphEncoder(uint64_t seed)
    : s1_self_("encoder/s1_self", enc_init(seed, 0, {kObjectFeatWidth, kEmbedWidth})),
      s1_neigh_("encoder/s1_neigh", enc_init(seed, 1, {kObjectFeatWidth, kEmbedWidth})),
      s1_bias_("encoder/s1_bias", Tensor::zeros({kEmbedWidth})),
      s2_self_obj_("encoder/s2_self_obj", enc_init(seed, 2, {kEmbedWidth, kEmbedWidth})),
      s2_self_man_("encoder/s2_self_man", enc_init(seed, 3, {kManipFeatWidth, kEmbedWidth})),
      s2_obj_obj_("encoder/s2_obj_obj", enc_init(seed, 4, {kEmbedWidth, kEmbedWidth})),
      s2_man_obj_("encoder/s2_man_obj", enc_init(seed, 5, {kManipFeatWidth, kEmbedWidth})),
      s2_obj_man_("encoder/s2_obj_man", enc_init(seed, 6, {kEmbedWidth, kEmbedWidth})),
      s2_bias_obj_("encoder/s2_bias_obj", Tensor::zeros({kEmbedWidth})),
      s2_bias_man_("encoder/s2_bias_man", Tensor::zeros({kEmbedWidth})) {}

std::vector<ag::Parameter*> HeteroGraphEncoder::params() {
    return {&s1_self_, &s1_neigh_, &s1_bias_, &s2_self_obj_, &s2_self_man_,
            &s2_obj_obj_, &s2_man_obj_, &s2_obj_man_, &s2_bias_obj_, &s2_bias_man_};
}

int64_t HeteroGraphEncoder::param_scalar_count() const {
    int64_t total = 0;
    for (const ag::Parameter* p :
         {&s1_self_, &s1_neigh_, &s1_bias_, &s2_self_obj_, &s2_self_man_, &s2_obj_obj_,
          &s2_man_obj_, &s2_obj_man_, &s2_bias_obj_, &s2_bias_man_}) {
        total += p->value.size();
    }
    return total;
}

ag::Var HeteroGraphEncoder::encode_objects_batch(Tape& tape,
                                                 std::span<const skel::SkeletonGraph> skeletons,
                                                 bool trainable) {
    int64_t total = 0;
    for (const auto& s : skeletons) total += s.k();
    Tensor feats({total, kObjectFeatWidth});
    std::vector<Edge> edges;
    std::vector<std::pair<int64_t, int64_t>> ranges;
    int64_t row = 0;
    for (const auto& s : skeletons) {
        for (int i = 0; i < s.k(); ++i) {
            const skel::SkeletonNode& n = s.nodes[static_cast<size_t>(i)];
            feats.at(row + i, 0) = n.pos.x;
            feats.at(row + i, 1) = n.pos.y;
            feats.at(row + i, 2) = n.pos.z;
            feats.at(row + i, 3) = n.radius;
        }
        const auto dir = directed_object_edges(s.edges, static_cast<int32_t>(row));
        edges.insert(edges.end(), dir.begin(), dir.end());
        ranges.emplace_back(row, row + s.k());
        row += s.k();
    }
    Var h = ag::message_pass(tape.input(std::move(feats)), edges, pv(tape, s1_self_, trainable),
                             pv(tape, s1_neigh_, trainable), pv(tape, s1_bias_, trainable));
    return ag::segment_mean_rows(h, ranges);
}

HeteroGraphEncoder::BatchEncoding HeteroGraphEncoder::encode_batch(
    Tape& tape, std::span<const SceneGraph> graphs, bool trainable) {
    // ---- stage 1: homogeneous pass over object subgraphs ----
    int64_t total_obj = 0, total_man = 0;
    for (const auto& g : graphs) {
        total_obj += g.object_count();
        total_man += g.manip_count();
    }
    Tensor obj_feats({total_obj, kObjectFeatWidth});
    Tensor man_feats({total_man, kManipFeatWidth});
    std::vector<Edge> obj_edges;
    std::vector<std::pair<int64_t, int64_t>> obj_ranges;
    std::vector<Edge> man_to_obj, obj_to_man;
    std::vector<std::vector<int64_t>> scene_groups;  // rows in the stacked [obj; man] layout
    int64_t orow = 0, mrow = 0;
    for (const auto& g : graphs) {
        const int64_t k = g.object_count(), m = g.manip_count();
        for (int64_t i = 0; i < k; ++i)
            for (int64_t j = 0; j < kObjectFeatWidth; ++j)
                obj_feats.at(orow + i, j) = g.object_feats.at(i, j);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < kManipFeatWidth; ++j)
                man_feats.at(mrow + i, j) = g.manip_feats.at(i, j);
        const auto dir = directed_object_edges(g.object_edges, static_cast<int32_t>(orow));
        obj_edges.insert(obj_edges.end(), dir.begin(), dir.end());
        for (int64_t mi = 0; mi < m; ++mi)
            for (int64_t oi = 0; oi < k; ++oi) {
                man_to_obj.push_back({static_cast<int32_t>(mrow + mi), static_cast<int32_t>(orow + oi)});
                obj_to_man.push_back({static_cast<int32_t>(orow + oi), static_cast<int32_t>(mrow + mi)});
            }
        obj_ranges.emplace_back(orow, orow + k);
        std::vector<int64_t> group;
        for (int64_t i = 0; i < k; ++i) group.push_back(orow + i);
        for (int64_t i = 0; i < m; ++i) group.push_back(total_obj + mrow + i);
        scene_groups.push_back(std::move(group));
        orow += k;
        mrow += m;
    }

    Var x_obj = tape.input(std::move(obj_feats));
    Var x_man = tape.input(std::move(man_feats));
    Var h1 = ag::message_pass(x_obj, obj_edges, pv(tape, s1_self_, trainable),
                              pv(tape, s1_neigh_, trainable), pv(tape, s1_bias_, trainable));
    Var object_embeddings = ag::segment_mean_rows(h1, obj_ranges);

    // ---- stage 2: heterogeneous pass over the full graph; object nodes
    // carry their stage-1 features ----
    Var pre_obj = ag::matmul(h1, pv(tape, s2_self_obj_, trainable));
    pre_obj = ag::add(pre_obj, ag::matmul(ag::neighbor_mean(h1, obj_edges, total_obj),
                                          pv(tape, s2_obj_obj_, trainable)));
    pre_obj = ag::add(pre_obj, ag::matmul(ag::neighbor_mean(x_man, man_to_obj, total_obj),
                                          pv(tape, s2_man_obj_, trainable)));
    Var h2_obj = ag::tanh(ag::add_rowvec(pre_obj, pv(tape, s2_bias_obj_, trainable)));

    Var pre_man = ag::matmul(x_man, pv(tape, s2_self_man_, trainable));
    pre_man = ag::add(pre_man, ag::matmul(ag::neighbor_mean(h1, obj_to_man, total_man),
                                          pv(tape, s2_obj_man_, trainable)));
    Var h2_man = ag::tanh(ag::add_rowvec(pre_man, pv(tape, s2_bias_man_, trainable)));

    const Var stacked_parts[] = {h2_obj, h2_man};
    Var stacked = ag::concat_rows(stacked_parts);
    Var scene_embeddings = ag::group_mean_rows(stacked, scene_groups);
    return {object_embeddings, scene_embeddings};
}

ag::Var HeteroGraphEncoder::encode_with_predicted_batch(Tape& tape, ag::Var object_embeddings,
                                                        std::span<const Tensor> manip_feats,
                                                        bool trainable) {
    const int64_t b = object_embeddings.val().rows();
    if (object_embeddings.val().cols() != kEmbedWidth) {
        throw ShapeError("encode_with_predicted: embedding width must be 32");
    }
    if (static_cast<int64_t>(manip_feats.size()) != b) {
        throw ShapeError("encode_with_predicted: one manip block per embedding row");
    }
    int64_t total_man = 0;
    for (const Tensor& f : manip_feats) total_man += f.rows();
    Tensor man({total_man, kManipFeatWidth});
    std::vector<Edge> man_to_obj, obj_to_man;
    std::vector<std::vector<int64_t>> scene_groups;
    int64_t mrow = 0;
    for (int64_t gi = 0; gi < b; ++gi) {
        const Tensor& f = manip_feats[static_cast<size_t>(gi)];
        for (int64_t i = 0; i < f.rows(); ++i) {
            for (int64_t j = 0; j < kManipFeatWidth; ++j) man.at(mrow + i, j) = f.at(i, j);
            man_to_obj.push_back({static_cast<int32_t>(mrow + i), static_cast<int32_t>(gi)});
            obj_to_man.push_back({static_cast<int32_t>(gi), static_cast<int32_t>(mrow + i)});
        }
        std::vector<int64_t> group = {gi};
        for (int64_t i = 0; i < f.rows(); ++i) group.push_back(b + mrow + i);
        scene_groups.push_back(std::move(group));
        mrow += f.rows();
    }

    Var x_man = tape.input(std::move(man));
    // the homogeneous stage is skipped: surrogate nodes carry the embedding
    Var pre_obj = ag::matmul(object_embeddings, pv(tape, s2_self_obj_, trainable));
    pre_obj = ag::add(pre_obj, ag::matmul(ag::neighbor_mean(x_man, man_to_obj, b),
                                          pv(tape, s2_man_obj_, trainable)));
    Var h2_obj = ag::tanh(ag::add_rowvec(pre_obj, pv(tape, s2_bias_obj_, trainable)));

    Var pre_man = ag::matmul(x_man, pv(tape, s2_self_man_, trainable));
    pre_man = ag::add(pre_man,
                      ag::matmul(ag::neighbor_mean(object_embeddings, obj_to_man, total_man),
                                 pv(tape, s2_obj_man_, trainable)));
    Var h2_man = ag::tanh(ag::add_rowvec(pre_man, pv(tape, s2_bias_man_, trainable)));

    const Var stacked_parts[] = {h2_obj, h2_man};
    Var stacked = ag::concat_rows(stacked_parts);
    return ag::group_mean_rows(stacked, scene_groups);
}

ag::Var HeteroGraphEncoder::encode_with_predicted_var(Tape& tape, ag::Var object_embeddings,
                                                      ag::Var manip_feats, int manip_per_graph,
                                                      bool trainable) {
    const int64_t b = object_embeddings.val().rows();
    const int64_t total_man = manip_feats.val().rows();
    if (object_embeddings.val().cols() != kEmbedWidth) {
        throw ShapeError("encode_with_predicted: embedding width must be 32");
    }
    if (total_man != b * manip_per_graph || manip_feats.val().cols() != kManipFeatWidth) {
        throw ShapeError("encode_with_predicted: manip feature block shape");
    }
    std::vector<Edge> man_to_obj, obj_to_man;
    std::vector<std::vector<int64_t>> scene_groups(static_cast<size_t>(b));
    for (int64_t gi = 0; gi < b; ++gi) scene_groups[static_cast<size_t>(gi)] = {gi};
    for (int block = 0; block < manip_per_graph; ++block) {
        for (int64_t gi = 0; gi < b; ++gi) {
            const int64_t mrow = block * b + gi;
            man_to_obj.push_back({static_cast<int32_t>(mrow), static_cast<int32_t>(gi)});
            obj_to_man.push_back({static_cast<int32_t>(gi), static_cast<int32_t>(mrow)});
            scene_groups[static_cast<size_t>(gi)].push_back(b + mrow);
        }
    }
    Var pre_obj = ag::matmul(object_embeddings, pv(tape, s2_self_obj_, trainable));
    pre_obj = ag::add(pre_obj, ag::matmul(ag::neighbor_mean(manip_feats, man_to_obj, b),
                                          pv(tape, s2_man_obj_, trainable)));
    Var h2_obj = ag::tanh(ag::add_rowvec(pre_obj, pv(tape, s2_bias_obj_, trainable)));

    Var pre_man = ag::matmul(manip_feats, pv(tape, s2_self_man_, trainable));
    pre_man = ag::add(pre_man,
                      ag::matmul(ag::neighbor_mean(object_embeddings, obj_to_man, total_man),
                                 pv(tape, s2_obj_man_, trainable)));
    Var h2_man = ag::tanh(ag::add_rowvec(pre_man, pv(tape, s2_bias_man_, trainable)));

    const Var stacked_parts[] = {h2_obj, h2_man};
    Var stacked = ag::concat_rows(stacked_parts);
    return ag::group_mean_rows(stacked, scene_groups);
}

std::pair<Tensor, Tensor> HeteroGraphEncoder::encode(const SceneGraph& graph) {
    Tape tape(false);
    const SceneGraph graphs[] = {graph};
    BatchEncoding enc = encode_batch(tape, graphs);
    return {enc.object_embeddings.val(), enc.scene_embeddings.val()};
}

Tensor HeteroGraphEncoder::encode_object(const skel::SkeletonGraph& skeleton) {
    Tape tape(false);
    const skel::SkeletonGraph sk[] = {skeleton};
    return encode_objects_batch(tape, sk).val();
}

Tensor HeteroGraphEncoder::encode_with_predicted(const Tensor& object_embedding,
                                                 const sim::ToolSpec& tool,
                                                 const sim::ToolPose& pose) {
    Tape tape(false);
    Tensor emb = object_embedding;
    if (emb.ndim() == 1) emb = Tensor({1, kEmbedWidth}, std::vector<double>(emb.values().begin(), emb.values().end()));
    const Tensor feats[] = {pose_features(tool, pose)};
    return encode_with_predicted_batch(tape, tape.input(std::move(emb)), feats).val();
}

}  // namespace softworld::scene
