// softworld command-line harness: dataset generation, SoftGPT pretraining,
// policy training, evaluation and learning-curve plots.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "softworld/checkpoint.hpp"
#include "softworld/config.hpp"
#include "softworld/errors.hpp"
#include "softworld/explorer.hpp"
#include "softworld/policy.hpp"
#include "softworld/softgpt.hpp"
#include "softworld/svg_plot.hpp"

namespace {

using namespace softworld;

constexpr int kExitBadConfig = 2;
constexpr int kExitEmptyDataset = 3;
constexpr int kExitCheckpointMismatch = 4;
constexpr int kExitNoCsv = 5;

void print_manifest_table(const data::Dataset& ds) {
    std::printf("%-12s %12s %12s %12s %12s\n", "shape", "rolling_pin", "knife", "dual_flats",
                "rolling_ball");
    const sim::InitShape shapes[] = {sim::InitShape::ball, sim::InitShape::two_balls,
                                     sim::InitShape::cuboid, sim::InitShape::random_scatter};
    const sim::ToolKind tools[] = {sim::ToolKind::rolling_pin, sim::ToolKind::knife,
                                   sim::ToolKind::dual_flats, sim::ToolKind::rolling_ball};
    for (sim::InitShape shape : shapes) {
        std::printf("%-12s", sim::to_string(shape).c_str());
        for (sim::ToolKind tool : tools) {
            bool found = false;
            for (const data::PairStats& p : ds.pair_stats) {
                if (p.tool == tool && p.shape == shape) {
                    std::printf(" %12lld", static_cast<long long>(p.kept));
                    found = true;
                    break;
                }
            }
            if (!found) std::printf(" %12s", "-");
        }
        std::printf("\n");
    }
    std::printf("(kept transitions per tool x initial-shape pair)\n");
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
    cli::RunConfig cfg = cli::load_config(config_path);
    cfg.explore.out_dir = out_dir;
    const data::Dataset ds = expl::generate_dataset(cfg.explore);
    print_manifest_table(ds);
    std::printf("dataset written to %s (%lld transitions kept)\n", out_dir.c_str(),
                static_cast<long long>(ds.total_transitions()));
    return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& dataset_dir,
                 const std::string& out_dir) {
    cli::RunConfig cfg = cli::load_config(config_path);
    data::Dataset ds;
    try {
        ds = data::read_dataset(dataset_dir);
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitEmptyDataset;
    }
    if (ds.sequences.empty()) {
        std::fprintf(stderr, "error: dataset at %s holds no sequences\n", dataset_dir.c_str());
        return kExitEmptyDataset;
    }
    scene::HeteroGraphEncoder encoder(Rng(cfg.seed).fork(21).next_u64());
    gpt::SoftGPTModel model(cfg.gpt, Rng(cfg.seed).fork(22).next_u64());
    const gpt::PretrainReport report = gpt::pretrain(model, encoder, ds, cfg.pretrain);

    std::filesystem::create_directories(out_dir);
    std::vector<ag::Parameter*> params = model.params();
    for (ag::Parameter* p : encoder.params()) params.push_back(p);
    std::vector<const ag::Parameter*> cparams(params.begin(), params.end());
    nlohmann::json meta = model.meta();
    meta["holdout_mse"] = report.holdout_mse;
    meta["persistence_mse"] = report.persistence_mse;
    meta["train_transitions"] = report.train_transitions;
    meta["holdout_transitions"] = report.holdout_transitions;
    meta["epochs"] = cfg.pretrain.epochs;
    const std::filesystem::path ckpt = std::filesystem::path(out_dir) / "softgpt_pretrained.ckpt";
    nn::save_checkpoint(ckpt, cparams, meta);

    std::ofstream curve(std::filesystem::path(out_dir) / "pretrain_loss.csv", std::ios::trunc);
    curve << "epoch,mse\n";
    for (size_t e = 0; e < report.epoch_mse.size(); ++e) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", e, report.epoch_mse[e]);
        curve << buf;
    }
    std::printf("checkpoint: %s\n", ckpt.string().c_str());
    std::printf("held-out one-step MSE: %.6g (persistence baseline %.6g, ratio %.3f)\n",
                report.holdout_mse, report.persistence_mse,
                report.persistence_mse > 0 ? report.holdout_mse / report.persistence_mse : 0.0);
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::string& checkpoint, bool has_seed, uint64_t seed_override, bool resume) {
    cli::RunConfig cfg = cli::load_config(config_path);
    std::vector<uint64_t> seeds = cfg.train_seeds;
    if (has_seed) seeds = {seed_override};
    std::filesystem::path pretrained = cfg.pretrained_checkpoint;
    if (!checkpoint.empty()) pretrained = checkpoint;

    for (uint64_t seed : seeds) {
        rl::TrainConfig tc;
        tc.task = cfg.task;
        tc.shape = cfg.shape;
        tc.variant = cfg.variant;
        tc.episodes = cfg.train_episodes;
        tc.steps_per_episode = cfg.train_steps_per_episode;
        tc.seed = seed;
        tc.skeleton_k = cfg.skeleton_k;
        tc.sac = cfg.sac;
        tc.sim_config = cfg.sim;
        tc.gpt_config = cfg.gpt;
        tc.pretrained_checkpoint = pretrained;
        tc.resume = resume;
        char run_name[128];
        std::snprintf(run_name, sizeof(run_name), "%s_seed%llu",
                      rl::to_string(cfg.variant).c_str(), static_cast<unsigned long long>(seed));
        tc.out_dir = std::filesystem::path(out_dir) / run_name;
        const rl::TrainResult r = rl::train(tc);
        std::printf("seed %llu: %d episodes, final return %.6g -> %s\n",
                    static_cast<unsigned long long>(seed), r.episodes_completed,
                    r.episode_returns.empty() ? 0.0 : r.episode_returns.back(),
                    r.csv_path.string().c_str());
    }
    return 0;
}

int cmd_eval(const std::string& checkpoint_dir, const std::string& task_name,
             const std::string& out_dir, int episodes_flag, const std::string& config_path) {
    cli::RunConfig cfg;
    if (!config_path.empty()) cfg = cli::load_config(config_path);
    const std::filesystem::path run_dir(checkpoint_dir);
    std::ifstream mf(run_dir / "meta.json");
    if (!mf) {
        std::fprintf(stderr, "error: no meta.json under %s\n", checkpoint_dir.c_str());
        return kExitCheckpointMismatch;
    }
    nlohmann::json meta = nlohmann::json::parse(mf);
    const sim::Task task = sim::task_from_string(
        task_name.empty() ? meta.at("task").get<std::string>() : task_name);
    const sim::ToolSpec tool = sim::ToolSpec::for_task(task);
    if (meta.value("action_dim", tool.action_dim()) != tool.action_dim()) {
        std::fprintf(stderr, "error: checkpoint action dimension %d does not match task '%s'\n",
                     meta.value("action_dim", -1), sim::to_string(task).c_str());
        return kExitCheckpointMismatch;
    }
    const int k = meta.value("skeleton_k", cfg.skeleton_k);
    const sim::InitShape shape = sim::shape_from_string(meta.at("shape").get<std::string>());
    const int episodes = episodes_flag > 0 ? episodes_flag : cfg.eval_episodes;

    scene::HeteroGraphEncoder encoder(1);
    gpt::SoftGPTModel model(cfg.gpt, 1);
    {
        std::vector<ag::Parameter*> ps = model.params();
        for (ag::Parameter* p : encoder.params()) ps.push_back(p);
        nn::load_checkpoint(run_dir / "world.ckpt", ps);
    }
    rl::Actor actor(tool, cfg.sac.hidden, 1);
    try {
        std::vector<ag::Parameter*> ps = actor.params();
        nn::load_checkpoint(run_dir / "agent" / "actor.ckpt", ps);
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "error: actor checkpoint does not fit task '%s': %s\n",
                     sim::to_string(task).c_str(), e.what());
        return kExitCheckpointMismatch;
    }

    sim::Environment env(task, shape, 0, cfg.sim);
    Rng rng(12345);
    std::vector<double> final_iou, final_sdf, final_den;
    const std::filesystem::path snapshots = std::filesystem::path(out_dir) / "snapshots";
    for (int ep = 0; ep < episodes; ++ep) {
        const uint64_t ep_seed = Rng(9000).fork(static_cast<uint64_t>(ep)).next_u64();
        env.reset(ep_seed);
        const skel::SkeletonGraph goal = rl::goal_skeleton(env, k);
        const Tensor goal_emb_m = encoder.encode_object(goal);
        Tensor goal_emb({scene::kEmbedWidth});
        for (int64_t j = 0; j < scene::kEmbedWidth; ++j) goal_emb[j] = goal_emb_m[j];
        std::vector<sim::ToolPose> prev_tail;
        if (ep == 0) {
            sim::dump_snapshot(snapshots, 0, env.particles().pos);
        }
        for (int step = 0; step < cfg.eval_steps_per_episode; ++step) {
            const skel::SkeletonGraph sk = skel::extract_skeleton(
                sim::surface_particles(env.particles(), k), k);
            const Tensor emb_m = encoder.encode_object(sk);
            Tensor eps({scene::kEmbedWidth});
            for (int64_t j = 0; j < scene::kEmbedWidth; ++j) eps[j] = emb_m[j];
            const Tensor action = actor.act(eps, goal_emb, true, rng);
            const sim::ToolPose pose = actor.action_to_pose(action);
            const auto waypoints = rl::plan_trajectory(env.tool_pose(), pose, prev_tail);
            env.step_waypoints(waypoints);
            prev_tail.assign(waypoints.end() - 4, waypoints.end());
            if (ep == 0) {
                sim::dump_snapshot(snapshots, step + 1, env.particles().pos);
            }
        }
        if (ep == 0) {
            sim::write_snapshot_manifest(snapshots, cfg.eval_steps_per_episode + 1,
                                         env.particles().count(), sim::to_string(task), ep_seed);
        }
        const sim::MetricReport m = env.metrics();
        final_iou.push_back(m.iou);
        final_sdf.push_back(m.sdf_score);
        final_den.push_back(m.density_score);
    }

    auto stats = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        const double sigma = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
        return std::pair<double, double>(mean, sigma);
    };
    const auto [iou_m, iou_s] = stats(final_iou);
    const auto [sdf_m, sdf_s] = stats(final_sdf);
    const auto [den_m, den_s] = stats(final_den);

    std::filesystem::create_directories(out_dir);
    nlohmann::json report;
    report["task"] = sim::to_string(task);
    report["episodes"] = episodes;
    report["iou_mean"] = iou_m;
    report["iou_sigma"] = iou_s;
    report["sdf_score_mean"] = sdf_m;
    report["sdf_score_sigma"] = sdf_s;
    report["density_score_mean"] = den_m;
    report["density_score_sigma"] = den_s;
    std::ofstream rf(std::filesystem::path(out_dir) / "eval_report.json", std::ios::trunc);
    rf << report.dump(2) << '\n';
    std::printf("eval (%d episodes): iou %.4f +- %.4f, sdf %.5f +- %.5f, density %.5f +- %.5f\n",
                episodes, iou_m, iou_s, sdf_m, sdf_s, den_m, den_s);
    return 0;
}

int cmd_plot(const std::string& csv_dir, const std::string& out_file) {
    std::vector<cli::CurveGroup> groups;
    try {
        groups = cli::curves_from_csv_dir(csv_dir);
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNoCsv;
    }
    cli::write_learning_curves_svg(out_file, "episode reward by variant", groups);
    std::printf("wrote %s (%zu variants)\n", out_file.c_str(), groups.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"softworld: soft-object manipulation sandbox"};
    app.require_subcommand(1);

    std::string config_path, dataset_dir, checkpoint, out_path, task_name, csv_dir;
    uint64_t seed = 0;
    bool resume = false;
    int episodes = 0;

    CLI::App* gen = app.add_subcommand("gen-data", "generate the exploration dataset");
    gen->add_option("--config", config_path, "run configuration JSON")->required();
    gen->add_option("--out", out_path, "output dataset directory")->required();

    CLI::App* pre = app.add_subcommand("pretrain", "pretrain SoftGPT on a dataset");
    pre->add_option("--config", config_path, "run configuration JSON")->required();
    pre->add_option("--dataset", dataset_dir, "dataset directory")->required();
    pre->add_option("--out", out_path, "output directory")->required();

    CLI::App* trn = app.add_subcommand("train", "train a goal-oriented policy");
    trn->add_option("--config", config_path, "run configuration JSON")->required();
    trn->add_option("--out", out_path, "output directory")->required();
    trn->add_option("--checkpoint", checkpoint, "pretrained SoftGPT checkpoint");
    CLI::Option* seed_opt = trn->add_option("--seed", seed, "override the config seed list");
    trn->add_flag("--resume", resume, "resume from checkpoints in the run directory");

    CLI::App* ev = app.add_subcommand("eval", "evaluate a trained policy");
    ev->add_option("--checkpoint", checkpoint, "run directory with checkpoints")->required();
    ev->add_option("--task", task_name, "task to evaluate in");
    ev->add_option("--out", out_path, "report/snapshot directory")->required();
    ev->add_option("--episodes", episodes, "evaluation episodes");
    ev->add_option("--config", config_path, "run configuration JSON");

    CLI::App* plt = app.add_subcommand("plot", "emit SVG learning curves from metric CSVs");
    plt->add_option("csv_dir", csv_dir, "directory holding metrics CSVs")->required();
    plt->add_option("--out", out_path, "output SVG path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_path);
        if (pre->parsed()) return cmd_pretrain(config_path, dataset_dir, out_path);
        if (trn->parsed()) {
            return cmd_train(config_path, out_path, checkpoint, seed_opt->count() > 0, seed,
                             resume);
        }
        if (ev->parsed()) return cmd_eval(checkpoint, task_name, out_path, episodes, config_path);
        if (plt->parsed()) return cmd_plot(csv_dir, out_path);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return kExitBadConfig;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
