#pragma once

#include <span>
#include <utility>
#include <vector>

#include "softworld/sim.hpp"

namespace softworld::skel {

struct SkeletonNode {
    sim::Vec3 pos;
    double radius = 0.0;
};

/// Compact object representation: K interior points with radii plus links.
/// Node positions are convex combinations of the input cloud; the edge set
/// is always connected.
struct SkeletonGraph {
    std::vector<SkeletonNode> nodes;
    std::vector<std::pair<int, int>> edges;  // undirected, first < second

    int k() const { return static_cast<int>(nodes.size()); }
};

/// Deterministic skeleton extraction: farthest-point sampling seeded at the
/// point nearest the cloud centroid, nearest-anchor clustering, cluster
/// centroids as nodes (radius = mean member distance), one Lloyd refinement,
/// then nearest-neighbor links augmented to connectivity.
/// Throws DegenerateInputError when points.size() < k.
SkeletonGraph extract_skeleton(std::span<const sim::Vec3> points, int k = 30);

/// Each node links to its nearest other node (distance ties broken by lower
/// index); minimum-length bridging edges are added until connected.
std::vector<std::pair<int, int>> build_links(std::span<const SkeletonNode> nodes);

}  // namespace softworld::skel
