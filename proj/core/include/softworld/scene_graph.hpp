#pragma once

#include <span>
#include <utility>
#include <vector>

#include "softworld/autograd.hpp"
#include "softworld/nn.hpp"
#include "softworld/skeleton.hpp"
#include "softworld/sim.hpp"

namespace softworld::scene {

inline constexpr int64_t kEmbedWidth = 32;
inline constexpr int64_t kObjectFeatWidth = 4;  // position + radius
inline constexpr int64_t kManipFeatWidth = 7;   // pose, zero-padded

/// Heterogeneous scene graph: object (skeleton) nodes plus manipulator
/// node(s); manipulator<->object edges are the full bipartite set and are
/// not stored explicitly.
struct SceneGraph {
    Tensor object_feats;                      // [K, 4]
    Tensor manip_feats;                       // [M, 7], M = 1 or 2
    std::vector<std::pair<int, int>> object_edges;  // undirected skeleton links
    sim::ToolKind tool = sim::ToolKind::rolling_pin;

    int64_t object_count() const { return object_feats.rows(); }
    int64_t manip_count() const { return manip_feats.rows(); }
    int64_t cross_edge_count() const { return object_count() * manip_count(); }
};

/// Manipulator node features for a pose: 3-dim tools give one row
/// [x,y,z,0,0,0,0]; dual flats give two rows [cx,cy,cz,yaw,0,0,0].
Tensor pose_features(const sim::ToolSpec& tool, const sim::ToolPose& pose);

SceneGraph build_scene_graph(const skel::SkeletonGraph& skeleton, const sim::ToolSpec& tool,
                             const sim::ToolPose& pose);

/// Training pair aligning the NEXT pose with the CURRENT object state.
struct ShiftedSample {
    int skeleton_index = 0;  // t
    int pose_index = 0;      // t + 1
    skel::SkeletonGraph skeleton;
    sim::ToolPose pose;
};

/// T-step trajectory -> T-1 samples; sample i pairs pose_{i+1} with
/// skeleton_i (edges travel with the object nodes). Throws
/// InsufficientDataError for T < 2.
std::vector<ShiftedSample> shift_dataset(std::span<const skel::SkeletonGraph> skeletons,
                                         std::span<const sim::ToolPose> poses);

/// Two-stage graph encoder. Stage 1: homogeneous pass over the object
/// subgraph; pooled output is the object embedding. Stage 2: heterogeneous
/// pass (relation-typed weights for object->object, manip->object,
/// object->manip) over the full graph; pooled output is the scene embedding.
/// The predicted-state path reuses the stage-2 weights with a single
/// surrogate object node carrying an embedding, skipping stage 1.
class HeteroGraphEncoder {
public:
    explicit HeteroGraphEncoder(uint64_t seed);

    struct BatchEncoding {
        ag::Var object_embeddings;  // [B, 32]
        ag::Var scene_embeddings;   // [B, 32]
    };

    BatchEncoding encode_batch(ag::Tape& tape, std::span<const SceneGraph> graphs,
                               bool trainable = true);
    /// Stage 1 only: per-graph pooled object embeddings [B, 32].
    ag::Var encode_objects_batch(ag::Tape& tape, std::span<const skel::SkeletonGraph> skeletons,
                                 bool trainable = true);
    /// Stage 2 with surrogate object nodes carrying `object_embeddings`
    /// ([B, 32]); `manip_feats` holds one [M,7] block per graph.
    ag::Var encode_with_predicted_batch(ag::Tape& tape, ag::Var object_embeddings,
                                        std::span<const Tensor> manip_feats,
                                        bool trainable = true);
    /// Differentiable-manipulator variant: manip_feats is a Var of shape
    /// [B*manip_per_graph, 7] ordered block-wise (all first flats, then all
    /// second flats).
    ag::Var encode_with_predicted_var(ag::Tape& tape, ag::Var object_embeddings,
                                      ag::Var manip_feats, int manip_per_graph,
                                      bool trainable = true);

    // value-level conveniences (fresh no-grad tape inside)
    std::pair<Tensor, Tensor> encode(const SceneGraph& graph);
    Tensor encode_object(const skel::SkeletonGraph& skeleton);
    Tensor encode_with_predicted(const Tensor& object_embedding, const sim::ToolSpec& tool,
                                 const sim::ToolPose& pose);

    std::vector<ag::Parameter*> params();
    int64_t param_scalar_count() const;

private:
    // stage 1 (homogeneous, object subgraph)
    ag::Parameter s1_self_, s1_neigh_, s1_bias_;
    // stage 2 (heterogeneous)
    ag::Parameter s2_self_obj_, s2_self_man_;
    ag::Parameter s2_obj_obj_, s2_man_obj_, s2_obj_man_;
    ag::Parameter s2_bias_obj_, s2_bias_man_;
};

}  // namespace softworld::scene
