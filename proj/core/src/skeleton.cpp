#include "softworld/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "softworld/errors.hpp"

namespace softworld::skel {

using sim::Vec3;

namespace {

struct Clusters {
    std::vector<Vec3> seeds;
    std::vector<int> assignment;  // point -> cluster
};

std::vector<int> assign_nearest(std::span<const Vec3> points, std::span<const Vec3> seeds) {
    std::vector<int> assignment(points.size(), 0);
    for (size_t p = 0; p < points.size(); ++p) {
        double best = std::numeric_limits<double>::infinity();
        int best_c = 0;
        for (size_t c = 0; c < seeds.size(); ++c) {
            const double d2 = (points[p] - seeds[c]).norm2();
            if (d2 < best) {
                best = d2;
                best_c = static_cast<int>(c);
            }
        }
        assignment[p] = best_c;
    }
    return assignment;
}

/// Moves every empty cluster's seed onto the point farthest from its current
/// seed (the worst-covered point), reassigning that point.
void fix_empty_clusters(std::span<const Vec3> points, Clusters& cl) {
    const int k = static_cast<int>(cl.seeds.size());
    std::vector<int> sizes(static_cast<size_t>(k), 0);
    for (int a : cl.assignment) ++sizes[static_cast<size_t>(a)];
    for (int c = 0; c < k; ++c) {
        if (sizes[static_cast<size_t>(c)] > 0) continue;
        double worst = -1.0;
        int worst_p = -1;
        for (size_t p = 0; p < points.size(); ++p) {
            const int owner = cl.assignment[p];
            if (sizes[static_cast<size_t>(owner)] <= 1) continue;  // keep owners non-empty
            const double d2 = (points[p] - cl.seeds[static_cast<size_t>(owner)]).norm2();
            if (d2 > worst) {
                worst = d2;
                worst_p = static_cast<int>(p);
            }
        }
        if (worst_p < 0) continue;  // all clusters singletons; nothing to move
        --sizes[static_cast<size_t>(cl.assignment[static_cast<size_t>(worst_p)])];
        cl.assignment[static_cast<size_t>(worst_p)] = c;
        cl.seeds[static_cast<size_t>(c)] = points[static_cast<size_t>(worst_p)];
        ++sizes[static_cast<size_t>(c)];
    }
}

std::vector<SkeletonNode> nodes_from_clusters(std::span<const Vec3> points, const Clusters& cl) {
    const int k = static_cast<int>(cl.seeds.size());
    std::vector<SkeletonNode> nodes(static_cast<size_t>(k));
    std::vector<int> sizes(static_cast<size_t>(k), 0);
    for (size_t p = 0; p < points.size(); ++p) {
        nodes[static_cast<size_t>(cl.assignment[p])].pos += points[p];
        ++sizes[static_cast<size_t>(cl.assignment[p])];
    }
    for (int c = 0; c < k; ++c) {
        nodes[static_cast<size_t>(c)].pos =
            nodes[static_cast<size_t>(c)].pos * (1.0 / sizes[static_cast<size_t>(c)]);
    }
    for (size_t p = 0; p < points.size(); ++p) {
        const int c = cl.assignment[p];
        nodes[static_cast<size_t>(c)].radius += (points[p] - nodes[static_cast<size_t>(c)].pos).norm();
    }
    for (int c = 0; c < k; ++c) nodes[static_cast<size_t>(c)].radius /= sizes[static_cast<size_t>(c)];
    return nodes;
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(static_cast<size_t>(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[static_cast<size_t>(x)] != x) {
            parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
            x = parent[static_cast<size_t>(x)];
        }
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
        return true;
    }
};

}  // namespace

SkeletonGraph extract_skeleton(std::span<const sim::Vec3> points, int k) {
    if (k < 1) throw UsageError("extract_skeleton: k must be at least 1");
    const int m = static_cast<int>(points.size());
    if (m < k) throw DegenerateInputError("extract_skeleton: fewer points than skeleton nodes");

    // farthest-point sampling, seeded at the point nearest the centroid
    Vec3 centroid;
    for (const Vec3& p : points) centroid += p;
    centroid = centroid * (1.0 / m);
    int seed = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int p = 0; p < m; ++p) {
        const double d2 = (points[static_cast<size_t>(p)] - centroid).norm2();
        if (d2 < best) {
            best = d2;
            seed = p;
        }
    }
    Clusters cl;
    cl.seeds.push_back(points[static_cast<size_t>(seed)]);
    std::vector<double> min_d2(static_cast<size_t>(m), std::numeric_limits<double>::infinity());
    for (int round = 1; round < k; ++round) {
        for (int p = 0; p < m; ++p) {
            min_d2[static_cast<size_t>(p)] = std::min(
                min_d2[static_cast<size_t>(p)], (points[static_cast<size_t>(p)] - cl.seeds.back()).norm2());
        }
        int far = 0;
        double far_d2 = -1.0;
        for (int p = 0; p < m; ++p) {
            if (min_d2[static_cast<size_t>(p)] > far_d2) {
                far_d2 = min_d2[static_cast<size_t>(p)];
                far = p;
            }
        }
        cl.seeds.push_back(points[static_cast<size_t>(far)]);
    }

    cl.assignment = assign_nearest(points, cl.seeds);
    fix_empty_clusters(points, cl);
    std::vector<SkeletonNode> nodes = nodes_from_clusters(points, cl);

    // one Lloyd refinement from the centroids
    Clusters refined;
    refined.seeds.reserve(static_cast<size_t>(k));
    for (const SkeletonNode& n : nodes) refined.seeds.push_back(n.pos);
    refined.assignment = assign_nearest(points, refined.seeds);
    fix_empty_clusters(points, refined);
    nodes = nodes_from_clusters(points, refined);

    SkeletonGraph graph;
    graph.nodes = std::move(nodes);
    graph.edges = build_links(graph.nodes);
    return graph;
}

std::vector<std::pair<int, int>> build_links(std::span<const SkeletonNode> nodes) {
    const int k = static_cast<int>(nodes.size());
    std::vector<std::pair<int, int>> edges;
    if (k <= 1) return edges;

    std::set<std::pair<int, int>> seen;
    auto push_edge = [&](int a, int b) {
        const auto e = std::minmax(a, b);
        if (seen.insert({e.first, e.second}).second) edges.push_back({e.first, e.second});
    };

    for (int i = 0; i < k; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int nearest = -1;
        for (int j = 0; j < k; ++j) {
            if (j == i) continue;
            const double d2 = (nodes[static_cast<size_t>(i)].pos - nodes[static_cast<size_t>(j)].pos).norm2();
            if (d2 < best) {
                best = d2;
                nearest = j;
            }
        }
        push_edge(i, nearest);
    }

    UnionFind uf(k);
    int components = k;
    for (const auto& [a, b] : edges) {
        if (uf.unite(a, b)) --components;
    }
    while (components > 1) {
        double best = std::numeric_limits<double>::infinity();
        int bi = -1, bj = -1;
        for (int i = 0; i < k; ++i) {
            for (int j = i + 1; j < k; ++j) {
                if (uf.find(i) == uf.find(j)) continue;
                const double d2 =
                    (nodes[static_cast<size_t>(i)].pos - nodes[static_cast<size_t>(j)].pos).norm2();
                if (d2 < best) {
                    best = d2;
                    bi = i;
                    bj = j;
                }
            }
        }
        push_edge(bi, bj);
        uf.unite(bi, bj);
        --components;
    }
    return edges;
}

}  // namespace softworld::skel
