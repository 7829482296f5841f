#include "softworld/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "softworld/errors.hpp"

namespace softworld::cli {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
    if (!j.is_object()) throw ConfigError("config: expected object at " + path);
    for (const auto& [key, value] : j.items()) {
        if (allowed.find(key) == allowed.end()) {
            throw ConfigError("config: unknown key '" + path + key + "'");
        }
    }
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

void parse_weights(const json& j, sim::MetricWeights& w) {
    check_keys(j, {"iou", "sdf", "density"}, "sim.weights.");
    get_to(j, "iou", w.w_iou);
    get_to(j, "sdf", w.w_sdf);
    get_to(j, "density", w.w_density);
}

void parse_sim(const json& j, sim::SimConfig& cfg) {
    check_keys(j,
               {"gravity", "substeps", "damping", "dt", "rest_spacing", "relaxation", "grid_res",
                "occupancy_threshold", "weights"},
               "sim.");
    get_to(j, "gravity", cfg.gravity);
    get_to(j, "substeps", cfg.substeps);
    get_to(j, "damping", cfg.damping);
    get_to(j, "dt", cfg.dt);
    get_to(j, "rest_spacing", cfg.rest_spacing);
    get_to(j, "relaxation", cfg.relaxation);
    get_to(j, "grid_res", cfg.grid_res);
    get_to(j, "occupancy_threshold", cfg.occupancy_threshold);
    if (j.contains("weights")) parse_weights(j.at("weights"), cfg.weights);
}

void parse_sac(const json& j, rl::SacConfig& cfg, const std::string& path) {
    check_keys(j,
               {"lr", "gamma", "tau", "alpha", "lambda", "horizon", "batch", "buffer_capacity",
                "update_every", "softgpt_every", "updates_per_event", "softgpt_updates_per_event",
                "softgpt_batch", "warmup_random_steps", "reward_scale", "hidden"},
               path);
    get_to(j, "lr", cfg.lr);
    get_to(j, "gamma", cfg.gamma);
    get_to(j, "tau", cfg.tau);
    get_to(j, "alpha", cfg.alpha);
    get_to(j, "lambda", cfg.lambda);
    get_to(j, "horizon", cfg.horizon);
    get_to(j, "batch", cfg.batch);
    get_to(j, "buffer_capacity", cfg.buffer_capacity);
    get_to(j, "update_every", cfg.update_every);
    get_to(j, "softgpt_every", cfg.softgpt_every);
    get_to(j, "updates_per_event", cfg.updates_per_event);
    get_to(j, "softgpt_updates_per_event", cfg.softgpt_updates_per_event);
    get_to(j, "softgpt_batch", cfg.softgpt_batch);
    get_to(j, "warmup_random_steps", cfg.warmup_random_steps);
    get_to(j, "reward_scale", cfg.reward_scale);
    get_to(j, "hidden", cfg.hidden);
    if (cfg.lambda < 0.0 || cfg.lambda > 1.0) throw ConfigError("config: lambda outside [0,1]");
    if (cfg.gamma <= 0.0 || cfg.gamma >= 1.0) throw ConfigError("config: gamma outside (0,1)");
    if (cfg.horizon < 1) throw ConfigError("config: horizon must be >= 1");
    if (cfg.alpha < 0.0) throw ConfigError("config: alpha must be >= 0");
}

void parse_explore(const json& j, expl::ExplorationConfig& cfg) {
    check_keys(j, {"pairs", "steps_per_episode", "reward_offset", "sac"}, "explore.");
    if (j.contains("pairs")) {
        cfg.pairs.clear();
        for (const auto& pj : j.at("pairs")) {
            check_keys(pj, {"tool", "shape", "episodes"}, "explore.pairs[].");
            expl::ExplorationPair pair;
            pair.tool = sim::tool_from_string(pj.at("tool").get<std::string>());
            pair.shape = sim::shape_from_string(pj.at("shape").get<std::string>());
            pair.episodes = pj.at("episodes").get<int>();
            cfg.pairs.push_back(pair);
        }
        expl::validate_pairs(cfg.pairs);
    }
    get_to(j, "steps_per_episode", cfg.steps_per_episode);
    get_to(j, "reward_offset", cfg.reward_offset);
    if (j.contains("sac")) parse_sac(j.at("sac"), cfg.sac, "explore.sac.");
}

void parse_gpt(const json& j, gpt::SoftGPTConfig& cfg) {
    check_keys(j, {"layers", "heads", "width", "context"}, "pretrain.gpt.");
    get_to(j, "layers", cfg.layers);
    get_to(j, "heads", cfg.heads);
    get_to(j, "width", cfg.width);
    get_to(j, "context", cfg.context);
    if (cfg.width % cfg.heads != 0) throw ConfigError("config: width not divisible by heads");
}

void parse_pretrain(const json& j, gpt::PretrainConfig& cfg, gpt::SoftGPTConfig& gpt_cfg) {
    check_keys(j,
               {"epochs", "batch", "lr", "variance_floor", "variance_weight", "holdout_fraction",
                "gpt"},
               "pretrain.");
    get_to(j, "epochs", cfg.epochs);
    get_to(j, "batch", cfg.batch);
    get_to(j, "lr", cfg.lr);
    get_to(j, "variance_floor", cfg.variance_floor);
    get_to(j, "variance_weight", cfg.variance_weight);
    get_to(j, "holdout_fraction", cfg.holdout_fraction);
    if (j.contains("gpt")) parse_gpt(j.at("gpt"), gpt_cfg);
}

void parse_train(const json& j, RunConfig& cfg) {
    check_keys(j,
               {"task", "shape", "variant", "seeds", "episodes", "steps_per_episode", "sac",
                "pretrained_checkpoint"},
               "train.");
    if (j.contains("task")) cfg.task = sim::task_from_string(j.at("task").get<std::string>());
    if (j.contains("shape")) cfg.shape = sim::shape_from_string(j.at("shape").get<std::string>());
    if (j.contains("variant")) {
        cfg.variant = rl::variant_from_string(j.at("variant").get<std::string>());
    }
    if (j.contains("seeds")) {
        cfg.train_seeds.clear();
        for (const auto& s : j.at("seeds")) cfg.train_seeds.push_back(s.get<uint64_t>());
        if (cfg.train_seeds.empty()) throw ConfigError("config: train.seeds is empty");
    }
    get_to(j, "episodes", cfg.train_episodes);
    get_to(j, "steps_per_episode", cfg.train_steps_per_episode);
    if (j.contains("sac")) parse_sac(j.at("sac"), cfg.sac, "train.sac.");
    if (j.contains("pretrained_checkpoint")) {
        cfg.pretrained_checkpoint = j.at("pretrained_checkpoint").get<std::string>();
    }
    if (!sim::ToolSpec::pairing_allowed(sim::ToolSpec::tool_for_task(cfg.task), cfg.shape)) {
        throw ConfigError("config: train task/shape pairing outside the exploration table");
    }
}

void parse_eval(const json& j, RunConfig& cfg) {
    check_keys(j, {"episodes", "steps_per_episode"}, "eval.");
    get_to(j, "episodes", cfg.eval_episodes);
    get_to(j, "steps_per_episode", cfg.eval_steps_per_episode);
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: invalid JSON");
    check_keys(j, {"seed", "skeleton_k", "sim", "explore", "pretrain", "train", "eval"}, "");

    RunConfig cfg;
    get_to(j, "seed", cfg.seed);
    get_to(j, "skeleton_k", cfg.skeleton_k);
    if (cfg.skeleton_k < 1) throw ConfigError("config: skeleton_k must be >= 1");
    if (j.contains("sim")) parse_sim(j.at("sim"), cfg.sim);
    if (j.contains("explore")) parse_explore(j.at("explore"), cfg.explore);
    if (j.contains("pretrain")) parse_pretrain(j.at("pretrain"), cfg.pretrain, cfg.gpt);
    if (j.contains("train")) parse_train(j.at("train"), cfg);
    if (j.contains("eval")) parse_eval(j.at("eval"), cfg);

    cfg.explore.skeleton_k = cfg.skeleton_k;
    cfg.explore.seed = cfg.seed;
    cfg.explore.sim_config = cfg.sim;
    cfg.pretrain.seed = cfg.seed;
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

}  // namespace softworld::cli
