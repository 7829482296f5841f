#include "softworld/dataset.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

#include "softworld/errors.hpp"

namespace softworld::data {

namespace {

void write_f32(std::ofstream& out, const std::vector<float>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void write_u32(std::ofstream& out, const std::vector<uint32_t>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(uint32_t)));
}

std::vector<float> read_f32(std::ifstream& in, size_t n) {
    std::vector<float> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw IoError("truncated dataset shard");
    return v;
}

std::vector<uint32_t> read_u32(std::ifstream& in, size_t n) {
    std::vector<uint32_t> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(uint32_t)));
    if (!in) throw IoError("truncated dataset shard");
    return v;
}

void write_run(std::ofstream& out, const SequenceRecord& run, int k) {
    const int64_t len = run.length();
    std::vector<float> pos, radii, poses, rewards;
    std::vector<uint32_t> edge_counts, edge_pairs;
    std::vector<uint8_t> contact(run.contact.begin(), run.contact.end());
    for (int64_t t = 0; t < len; ++t) {
        const skel::SkeletonGraph& g = run.skeletons[static_cast<size_t>(t)];
        if (g.k() != k) throw IoError("dataset: skeleton size differs from manifest k");
        for (const skel::SkeletonNode& n : g.nodes) {
            pos.push_back(static_cast<float>(n.pos.x));
            pos.push_back(static_cast<float>(n.pos.y));
            pos.push_back(static_cast<float>(n.pos.z));
            radii.push_back(static_cast<float>(n.radius));
        }
        edge_counts.push_back(static_cast<uint32_t>(g.edges.size()));
        for (const auto& [a, b] : g.edges) {
            edge_pairs.push_back(static_cast<uint32_t>(a));
            edge_pairs.push_back(static_cast<uint32_t>(b));
        }
        for (double q : run.poses[static_cast<size_t>(t)].q) poses.push_back(static_cast<float>(q));
        rewards.push_back(static_cast<float>(run.rewards[static_cast<size_t>(t)]));
    }
    write_f32(out, pos);
    write_f32(out, radii);
    write_u32(out, edge_counts);
    write_u32(out, edge_pairs);
    write_f32(out, poses);
    out.write(reinterpret_cast<const char*>(contact.data()),
              static_cast<std::streamsize>(contact.size()));
    write_f32(out, rewards);
}

SequenceRecord read_run(std::ifstream& in, int k, int64_t len, sim::ToolKind tool,
                        sim::InitShape shape, uint64_t seed, int pose_dim) {
    SequenceRecord run;
    run.tool = tool;
    run.shape = shape;
    run.seed = seed;
    const auto pos = read_f32(in, static_cast<size_t>(len * k * 3));
    const auto radii = read_f32(in, static_cast<size_t>(len * k));
    const auto edge_counts = read_u32(in, static_cast<size_t>(len));
    size_t total_edges = 0;
    for (uint32_t c : edge_counts) total_edges += c;
    const auto edge_pairs = read_u32(in, total_edges * 2);
    const auto poses = read_f32(in, static_cast<size_t>(len * 7));
    std::vector<uint8_t> contact(static_cast<size_t>(len));
    in.read(reinterpret_cast<char*>(contact.data()), len);
    const auto rewards = read_f32(in, static_cast<size_t>(len));
    if (!in) throw IoError("truncated dataset shard");

    size_t edge_cursor = 0;
    for (int64_t t = 0; t < len; ++t) {
        skel::SkeletonGraph g;
        g.nodes.resize(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) {
            const size_t base = static_cast<size_t>((t * k + i) * 3);
            g.nodes[static_cast<size_t>(i)].pos = {pos[base], pos[base + 1], pos[base + 2]};
            g.nodes[static_cast<size_t>(i)].radius = radii[static_cast<size_t>(t * k + i)];
        }
        for (uint32_t e = 0; e < edge_counts[static_cast<size_t>(t)]; ++e) {
            g.edges.emplace_back(static_cast<int>(edge_pairs[edge_cursor]),
                                 static_cast<int>(edge_pairs[edge_cursor + 1]));
            edge_cursor += 2;
        }
        run.skeletons.push_back(std::move(g));
        sim::ToolPose p;
        p.dim = pose_dim;
        for (int i = 0; i < 7; ++i) p.q[static_cast<size_t>(i)] = poses[static_cast<size_t>(t * 7 + i)];
        run.poses.push_back(p);
        run.contact.push_back(contact[static_cast<size_t>(t)]);
        run.rewards.push_back(rewards[static_cast<size_t>(t)]);
    }
    return run;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "softworld-dataset-1";
    manifest["k"] = dataset.k;
    manifest["seed"] = dataset.seed;
    manifest["steps_per_episode"] = dataset.steps_per_episode;

    // group sequences by (tool, shape, seed) into one shard per episode
    std::map<std::pair<std::string, uint64_t>, std::vector<const SequenceRecord*>> shards;
    for (const SequenceRecord& s : dataset.sequences) {
        shards[{sim::to_string(s.tool) + "_" + sim::to_string(s.shape), s.seed}].push_back(&s);
    }
    nlohmann::json files = nlohmann::json::array();
    int shard_idx = 0;
    for (const auto& [key, runs] : shards) {
        char name[64];
        std::snprintf(name, sizeof(name), "shard_%05d.bin", shard_idx++);
        nlohmann::json fj;
        fj["file"] = name;
        fj["tool"] = sim::to_string(runs.front()->tool);
        fj["shape"] = sim::to_string(runs.front()->shape);
        fj["seed"] = runs.front()->seed;
        fj["pose_dim"] = runs.front()->poses.front().dim;
        nlohmann::json lens = nlohmann::json::array();
        for (const SequenceRecord* r : runs) lens.push_back(r->length());
        fj["run_lengths"] = std::move(lens);
        files.push_back(std::move(fj));

        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write dataset shard");
        for (const SequenceRecord* r : runs) write_run(out, *r, dataset.k);
    }
    manifest["files"] = std::move(files);

    nlohmann::json pairs = nlohmann::json::array();
    for (const PairStats& p : dataset.pair_stats) {
        nlohmann::json pj;
        pj["tool"] = sim::to_string(p.tool);
        pj["shape"] = sim::to_string(p.shape);
        pj["episodes"] = p.episodes;
        pj["kept"] = p.kept;
        pj["dropped"] = p.dropped;
        if (p.kept == 0) pj["warning"] = "no contact transitions kept for this pair";
        pairs.push_back(std::move(pj));
    }
    manifest["pairs"] = std::move(pairs);

    std::ofstream mf(dir / "manifest.json", std::ios::trunc);
    if (!mf) throw IoError("cannot write dataset manifest");
    mf << manifest.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw IoError("cannot open dataset manifest in " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(mf, nullptr, false);
    if (manifest.is_discarded() || manifest.value("format", "") != "softworld-dataset-1") {
        throw IoError("not a softworld dataset: " + dir.string());
    }
    Dataset ds;
    ds.k = manifest.at("k").get<int>();
    ds.seed = manifest.at("seed").get<uint64_t>();
    ds.steps_per_episode = manifest.value("steps_per_episode", 0);
    for (const auto& fj : manifest.at("files")) {
        std::ifstream in(dir / fj.at("file").get<std::string>(), std::ios::binary);
        if (!in) throw IoError("missing dataset shard");
        const sim::ToolKind tool = sim::tool_from_string(fj.at("tool").get<std::string>());
        const sim::InitShape shape = sim::shape_from_string(fj.at("shape").get<std::string>());
        const uint64_t seed = fj.at("seed").get<uint64_t>();
        const int pose_dim = fj.at("pose_dim").get<int>();
        for (const auto& len : fj.at("run_lengths")) {
            ds.sequences.push_back(
                read_run(in, ds.k, len.get<int64_t>(), tool, shape, seed, pose_dim));
        }
    }
    for (const auto& pj : manifest.at("pairs")) {
        PairStats p;
        p.tool = sim::tool_from_string(pj.at("tool").get<std::string>());
        p.shape = sim::shape_from_string(pj.at("shape").get<std::string>());
        p.episodes = pj.at("episodes").get<int>();
        p.kept = pj.at("kept").get<int64_t>();
        p.dropped = pj.at("dropped").get<int64_t>();
        ds.pair_stats.push_back(p);
    }
    return ds;
}

}  // namespace softworld::data
