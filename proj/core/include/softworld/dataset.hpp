#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "softworld/skeleton.hpp"
#include "softworld/sim.hpp"

namespace softworld::data {

/// One contact run: consecutive steps whose transitions all had tool contact
/// at one endpoint or the other. skeletons/poses/contact/rewards share the
/// same length L >= 2.
struct SequenceRecord {
    sim::ToolKind tool = sim::ToolKind::rolling_pin;
    sim::InitShape shape = sim::InitShape::ball;
    uint64_t seed = 0;
    std::vector<skel::SkeletonGraph> skeletons;
    std::vector<sim::ToolPose> poses;
    std::vector<uint8_t> contact;
    std::vector<double> rewards;

    int64_t length() const { return static_cast<int64_t>(skeletons.size()); }
};

struct PairStats {
    sim::ToolKind tool = sim::ToolKind::rolling_pin;
    sim::InitShape shape = sim::InitShape::ball;
    int episodes = 0;
    int64_t kept = 0;
    int64_t dropped = 0;
};

struct Dataset {
    int k = 30;
    uint64_t seed = 0;
    int steps_per_episode = 0;
    std::vector<SequenceRecord> sequences;
    std::vector<PairStats> pair_stats;

    int64_t total_transitions() const {
        int64_t n = 0;
        for (const auto& s : sequences) n += s.length() - 1;
        return n;
    }
};

/// Directory layout: manifest.json + one binary shard per episode holding
/// that episode's contact runs. Skeleton positions/radii and poses are
/// stored as little-endian float32, edge lists as uint32 pairs.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace softworld::data
