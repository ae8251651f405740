// gacnet command line: train / eval / ablate / infer / make-data.
//
// Dataset locations are directories in the KITTI layout (image/,
// velodyne_raw/, groundtruth/, intrinsics/) or a synthetic scene manifest
// JSON. Training configs are TrainConfig JSON with two extra CLI-level keys,
// "train_data" and "val_data", naming those locations.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "gacnet/train.hpp"

namespace fs = std::filesystem;
using namespace gacnet;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<Frame> load_dataset(const std::string& where) {
    if (fs::is_regular_file(where)) return make_synthetic_dataset(load_scene_manifest(where), {});
    if (fs::is_regular_file(where + "/manifest.json"))
        return make_synthetic_dataset(load_scene_manifest(where + "/manifest.json"), {});
    if (!fs::is_directory(where + "/velodyne_raw"))
        throw std::runtime_error("no manifest.json or velodyne_raw/ under " + where);
    std::vector<Frame> frames;
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(where + "/velodyne_raw"))
        if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    for (const auto& id : ids) frames.push_back(load_kitti_frame(where, id));
    if (frames.empty()) throw std::runtime_error("no frames found under " + where);
    return frames;
}

uint64_t apply_seed_override(uint64_t seed) {
    if (const char* env = std::getenv("GACNET_SEED")) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw std::runtime_error("GACNET_SEED must be an unsigned integer");
        std::cerr << "GACNET_SEED=" << v << " overrides the config seed\n";
        return v;
    }
    return seed;
}

struct CliTrainSpec {
    TrainConfig cfg;
    std::string train_data, val_data;
};

CliTrainSpec load_train_config(const std::string& path) {
    std::string text = read_file(path);
    CliTrainSpec spec;
    spec.cfg = TrainConfig::from_json(text);
    nlohmann::json j = nlohmann::json::parse(text);
    spec.train_data = j.value("train_data", "");
    spec.val_data = j.value("val_data", "");
    if (spec.train_data.empty())
        throw std::runtime_error("config must name \"train_data\" (manifest or dataset dir)");
    spec.cfg.seed = apply_seed_override(spec.cfg.seed);
    spec.cfg.net.seed = spec.cfg.seed;
    return spec;
}

NetworkConfig config_for_checkpoint(const std::string& ckpt, const std::string& config_path) {
    std::string path = config_path;
    if (path.empty()) {
        fs::path sibling = fs::path(ckpt).parent_path() / "config.json";
        if (fs::is_regular_file(sibling)) path = sibling.string();
    }
    if (path.empty()) return NetworkConfig::toy();
    std::string text = read_file(path);
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.contains("net")) return NetworkConfig::from_json(j["net"].dump());
    return NetworkConfig::from_json(text);
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    CliTrainSpec spec = load_train_config(config_path);
    auto train_frames = load_dataset(spec.train_data);
    std::vector<Frame> val_frames;
    if (!spec.val_data.empty()) val_frames = load_dataset(spec.val_data);
    int eval_every = std::max(1, spec.cfg.total_steps / 10);
    RunRecord rec = train(spec.cfg, train_frames, val_frames, out_dir, eval_every);

    nlohmann::json j;
    j["steps"] = rec.losses.size();
    j["final_loss"] = rec.losses.back();
    j["wall_seconds"] = rec.wall_seconds;
    j["config_hash"] = rec.config_hash;
    if (!rec.val_reports.empty())
        j["final_val"] = nlohmann::json::parse(rec.val_reports.back().to_json());
    std::ofstream(out_dir + "/run.json") << j.dump(2) << "\n";
    std::cout << j.dump(2) << "\n";
    if (!rec.val_reports.empty()) {
        std::cout << MetricReport::table_header() << "\n"
                  << rec.val_reports.back().table_row("final") << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& config_path) {
    GacNet net(config_for_checkpoint(ckpt, config_path), ParamRegistry::load(ckpt));
    auto frames = load_dataset(data);
    std::vector<MetricReport> per_frame;
    MetricReport agg = evaluate_frames(net, frames, &per_frame);

    std::cout << MetricReport::table_header() << "\n";
    for (size_t i = 0; i < frames.size(); ++i)
        std::cout << per_frame[i].table_row(frames[i].id.empty() ? std::to_string(i)
                                                                 : frames[i].id)
                  << "\n";
    std::cout << agg.table_row("mean") << "\n";

    nlohmann::json j;
    j["aggregate"] = nlohmann::json::parse(agg.to_json());
    j["frames"] = nlohmann::json::array();
    for (size_t i = 0; i < frames.size(); ++i) {
        auto e = nlohmann::json::parse(per_frame[i].to_json());
        e["id"] = frames[i].id;
        j["frames"].push_back(e);
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir) {
    CliTrainSpec spec = load_train_config(config_path);
    auto train_frames = load_dataset(spec.train_data);
    auto val_frames = spec.val_data.empty() ? train_frames : load_dataset(spec.val_data);
    auto rows = run_ablation(spec.cfg, train_frames, val_frames, out_dir);
    std::cout << MetricReport::table_header() << "\n";
    for (const auto& r : rows) std::cout << r.report.table_row(r.label) << "\n";
    return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& data, const std::string& frame_id,
              const std::string& out_dir, const std::string& config_path) {
    GacNet net(config_for_checkpoint(ckpt, config_path), ParamRegistry::load(ckpt));
    auto frames = load_dataset(data);
    for (const auto& f : frames)
        if (f.id == frame_id) {
            infer_and_plot(net, f, out_dir);
            std::cout << "wrote " << out_dir << "/{pred_depth,pred_vis,error_heatmap}.png\n";
            return 0;
        }
    throw std::runtime_error("frame id not found in dataset: " + frame_id);
}

int cmd_make_data(const std::string& spec_path, const std::string& out_dir) {
    std::string text = read_file(spec_path);
    nlohmann::json j = nlohmann::json::parse(text);
    SparsifyParams sp;
    std::vector<SceneSpec> specs;
    if (j.is_array()) {
        specs = load_scene_manifest(spec_path);
    } else {
        // {"count": N, "seed0": S, "h":..., "w":..., "lines":..., "dropout":...}
        int count = j.value("count", 16);
        SceneSpec base;
        base.h = j.value("h", 64);
        base.w = j.value("w", 64);
        base.n_objects = j.value("n_objects", 3);
        base.texture_freq = j.value("texture_freq", 2.0);
        uint64_t seed0 = j.value("seed0", 1000ull);
        sp.lines = j.value("lines", 8);
        sp.dropout = j.value("dropout", 0.3);
        for (int i = 0; i < count; ++i) {
            SceneSpec s = base;
            s.seed = seed0 + uint64_t(i);
            specs.push_back(s);
        }
    }
    if (const char* env = std::getenv("GACNET_SEED")) {
        uint64_t s = apply_seed_override(0);
        for (size_t i = 0; i < specs.size(); ++i) specs[i].seed = s + i;
        (void)env;
    }
    auto frames = make_synthetic_dataset(specs, sp);

    fs::create_directories(out_dir + "/image");
    fs::create_directories(out_dir + "/velodyne_raw");
    fs::create_directories(out_dir + "/groundtruth");
    fs::create_directories(out_dir + "/intrinsics");
    for (size_t i = 0; i < frames.size(); ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "%06zu", i);
        const Frame& f = frames[i];
        save_color_png(f.image, out_dir + "/image/" + id + ".png");
        save_depth_png(f.sparse, out_dir + "/velodyne_raw/" + id + ".png");
        save_depth_png(f.gt, out_dir + "/groundtruth/" + id + ".png");
        std::ofstream intr(out_dir + "/intrinsics/" + id + ".txt");
        intr << f.intr.fx << " " << f.intr.fy << " " << f.intr.cx << " " << f.intr.cy << "\n";
    }
    save_scene_manifest(specs, out_dir + "/manifest.json");
    std::cout << "wrote " << frames.size() << " frames to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GAC-Net depth completion pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir, ckpt, data, frame_id;

    auto* train_cmd = app.add_subcommand("train", "train a model from a JSON config");
    train_cmd->add_option("--config", config_path, "TrainConfig JSON")->required();
    train_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--ckpt", ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--data", data, "dataset dir or manifest")->required();
    eval_cmd->add_option("--config", config_path, "network config JSON (default: beside ckpt)");

    auto* ablate_cmd = app.add_subcommand("ablate", "run the 4-variant ablation matrix");
    ablate_cmd->add_option("--config", config_path, "TrainConfig JSON")->required();
    ablate_cmd->add_option("--out", out_dir, "output directory")->default_val("ablation_out");

    auto* infer_cmd = app.add_subcommand("infer", "predict one frame and plot");
    infer_cmd->add_option("--ckpt", ckpt, "checkpoint path")->required();
    infer_cmd->add_option("--data", data, "dataset dir or manifest")->required();
    infer_cmd->add_option("--frame", frame_id, "frame id")->required();
    infer_cmd->add_option("--out", out_dir, "output directory")->required();
    infer_cmd->add_option("--config", config_path, "network config JSON (default: beside ckpt)");

    auto* make_cmd = app.add_subcommand("make-data", "render a synthetic dataset");
    make_cmd->add_option("--spec", config_path, "scene manifest or generator spec JSON")
        ->required();
    make_cmd->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) return cmd_train(config_path, out_dir);
        if (*eval_cmd) return cmd_eval(ckpt, data, config_path);
        if (*ablate_cmd) return cmd_ablate(config_path, out_dir);
        if (*infer_cmd) return cmd_infer(ckpt, data, frame_id, out_dir, config_path);
        if (*make_cmd) return cmd_make_data(config_path, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
