#include "terragen/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "terragen/checkpoint.hpp"
#include "terragen/config.hpp"
#include "terragen/layout_io.hpp"

namespace terragen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint64_t default_seed() {
    if (const char* env = std::getenv("TERRAGEN_SEED")) {
        return std::strtoull(env, nullptr, 10);
    }
    return 0;
}

void write_run_record(const std::string& out_dir, const std::string& command, const json& resolved) {
    fs::create_directories(out_dir);
    json doc;
    doc["command"] = command;
    doc["config"] = resolved;
    write_json_file((fs::path(out_dir) / "run.json").string(), doc);
}

json merged_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    json doc = config_path.empty() ? json::object() : load_json_file(config_path);
    for (const auto& ov : overrides) apply_override(doc, ov);
    return doc;
}

int cmd_gen_data(const std::string& out, uint64_t seed, int n_train, int n_val, int n_test, int image_size) {
    auto specs = default_scene_specs(image_size);
    DatasetManifest manifest = write_dataset(specs, n_train, n_val, n_test, out, seed);
    json resolved{{"out", out},          {"seed", seed},   {"train", n_train},
                  {"val", n_val},        {"test", n_test}, {"image_size", image_size},
                  {"spec_hash", manifest.spec_hash}};
    write_run_record(out, "gen-data", resolved);
    std::cout << "wrote " << manifest.samples.size() << " samples to " << out << " (spec "
              << manifest.spec_hash << ")\n";
    return 0;
}

int cmd_validate(const std::string& data_root) {
    DatasetManifest manifest = read_manifest(data_root);
    int total_issues = 0;
    for (const auto& rec : manifest.samples) {
        Layout layout = load_sample_layout(manifest, rec);
        auto issues = validate(layout);
        for (const auto& issue : issues) {
            std::cout << rec.layout << "\t" << issue_kind_name(issue.kind) << "\t" << issue.message << "\n";
            ++total_issues;
        }
    }
    std::cout << (total_issues == 0 ? "clean: " : "issues: ") << total_issues << " across "
              << manifest.samples.size() << " layouts\n";
    return total_issues == 0 ? 0 : 1;
}

GeoTransform random_transform(Rng& rng) {
    switch (rng.uniform_int(7)) {
        case 0: return GeoTransform::hflip();
        case 1: return GeoTransform::vflip();
        case 2: return GeoTransform::rot90();
        case 3: return GeoTransform::rot180();
        case 4: return GeoTransform::rot270();
        case 5: return GeoTransform::scaled(rng.uniform(0.5, 1.5));
        default: return GeoTransform::sheared(rng.uniform(-0.3, 0.3));
    }
}

int cmd_augment(const std::string& data_root, const std::string& out, int multiple, uint64_t seed) {
    if (multiple < 1) throw std::invalid_argument("augment: --multiple must be >= 1");
    DatasetManifest src = read_manifest(data_root);
    fs::create_directories(fs::path(out) / "layouts");

    DatasetManifest dst;
    dst.root = out;
    dst.seed = seed;
    dst.spec_hash = src.spec_hash;

    int64_t idx = 0;
    for (const auto& rec : src.samples) {
        Layout layout = load_sample_layout(src, rec);
        for (int k = 0; k < multiple; ++k, ++idx) {
            Rng rng(Rng::mix(seed, static_cast<uint64_t>(idx)));
            Layout transformed;
            bool ok = false;
            for (int attempt = 0; attempt < 8 && !ok; ++attempt) {
                transformed = transform_layout(layout, random_transform(rng));
                ok = !transformed.entities.empty() && validate(transformed).empty();
            }
            if (!ok) transformed = transform_layout(layout, GeoTransform::hflip());

            char name[64];
            std::snprintf(name, sizeof(name), "aug_%06lld", static_cast<long long>(idx));
            std::string layout_rel = std::string("layouts/") + name + ".json";
            write_layout((fs::path(out) / layout_rel).string(), transformed);
            dst.samples.push_back({"", layout_rel, rec.split});
        }
    }
    write_manifest(dst);
    json resolved{{"data", data_root}, {"out", out}, {"multiple", multiple}, {"seed", seed}};
    write_run_record(out, "augment", resolved);
    std::cout << "wrote " << dst.samples.size() << " augmented layouts to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& data_root, const std::string& out, uint64_t seed, bool resume) {
    json doc = merged_config(config_path, overrides);
    if (!data_root.empty()) doc["dataset_root"] = data_root;
    if (!out.empty()) doc["out_dir"] = out;
    if (!doc.contains("seed")) doc["seed"] = seed;
    TrainConfig cfg = train_config_from_json(doc);
    if (cfg.dataset_root.empty()) throw std::invalid_argument("train: --data or dataset_root required");
    if (cfg.out_dir.empty()) throw std::invalid_argument("train: --out or out_dir required");
    fs::create_directories(cfg.out_dir);
    write_run_record(cfg.out_dir, "train", to_json(cfg));
    TrainResult result = resume ? train_resume(cfg) : train(cfg);
    std::cout << "checkpoint: " << result.checkpoint_path << "\nloss log: " << result.loss_log_path << "\n";
    return 0;
}

Model load_model(const std::string& ckpt, const json& doc) {
    EncoderConfig enc = doc.contains("enc") ? encoder_config_from_json(doc.at("enc")) : EncoderConfig{};
    UNetConfig unet = doc.contains("unet") ? unet_config_from_json(doc.at("unet")) : UNetConfig{};
    Model model = Model::init(enc, unet, 0);
    load_params(ckpt, model.params);
    return model;
}

int cmd_sample(const std::string& ckpt, const std::string& config_path,
               const std::vector<std::string>& overrides, const std::string& layout_path,
               const std::string& data_root, const std::string& split, const std::string& out,
               uint64_t seed) {
    json doc = merged_config(config_path, overrides);
    SampleConfig scfg = doc.contains("sample") ? sample_config_from_json(doc.at("sample")) : SampleConfig{};
    if (!doc.contains("sample") || !doc.at("sample").contains("seed")) scfg.seed = seed;
    NoiseSchedule schedule = doc.contains("schedule") ? schedule_from_json(doc.at("schedule"))
                                                      : NoiseSchedule::linear();
    Model model = load_model(ckpt, doc);
    fs::create_directories(out);

    std::vector<std::pair<std::string, Layout>> work;
    if (!layout_path.empty()) {
        work.push_back({fs::path(layout_path).stem().string(), read_layout(layout_path)});
    } else if (!data_root.empty()) {
        DatasetManifest manifest = read_manifest(data_root);
        for (const auto& rec : manifest.split(split)) {
            work.push_back({fs::path(rec.layout).stem().string(), load_sample_layout(manifest, rec)});
        }
    } else {
        throw std::invalid_argument("sample: provide --layout or --data");
    }

    for (size_t i = 0; i < work.size(); ++i) {
        SampleConfig per = scfg;
        per.seed = Rng::mix(scfg.seed, static_cast<uint64_t>(i));
        Tensor x = ddim_sample(model, work[i].second, schedule, per);
        write_png((fs::path(out) / (work[i].first + ".png")).string(), to_image_u8(x));
    }
    json resolved{{"ckpt", ckpt},   {"layout", layout_path}, {"data", data_root},
                  {"split", split}, {"out", out},            {"sample", to_json(scfg)},
                  {"schedule", to_json(schedule)}};
    write_run_record(out, "sample", resolved);
    std::cout << "wrote " << work.size() << " images to " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& config_path,
             const std::vector<std::string>& overrides, const std::string& data_root,
             const std::string& out, uint64_t seed) {
    json doc = merged_config(config_path, overrides);
    EvalConfig ecfg = doc.contains("eval") ? eval_config_from_json(doc.at("eval")) : EvalConfig{};
    if (!doc.contains("eval") || !doc.at("eval").contains("sample") ||
        !doc.at("eval").at("sample").contains("seed")) {
        ecfg.sample.seed = seed;
    }
    NoiseSchedule schedule = doc.contains("schedule") ? schedule_from_json(doc.at("schedule"))
                                                      : NoiseSchedule::linear();
    Model model = load_model(ckpt, doc);
    DatasetManifest manifest = read_manifest(data_root);
    EvalReport report = layout_consistency_report(model, schedule, manifest, ecfg);

    fs::create_directories(out);
    {
        std::ofstream f(fs::path(out) / "report.json");
        f << report.to_json() << "\n";
    }
    {
        std::ofstream f(fs::path(out) / "report.csv");
        f << "metric,value\n";
        f << "fid," << report.fid << "\n";
        f << "noise_fid," << report.noise_fid << "\n";
        f << "miou_mean," << report.miou_mean << "\n";
        f << "shuffled_miou_mean," << report.shuffled_miou_mean << "\n";
        f << "ap50," << report.ap50 << "\n";
        f << "map," << report.map << "\n";
        f << "caption_consistency," << report.caption_consistency << "\n";
    }
    json resolved{{"ckpt", ckpt}, {"data", data_root}, {"out", out},
                  {"eval", to_json(ecfg)}, {"schedule", to_json(schedule)}};
    write_run_record(out, "eval", resolved);
    std::cout << report.to_json() << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"TerraGen: multi-task layout-to-image diffusion on synthetic scenes"};
    app.require_subcommand(1);

    uint64_t seed = default_seed();

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic scene corpus");
    std::string gen_out = "data";
    int n_train = 2000, n_val = 200, n_test = 200, image_size = 32;
    gen->add_option("--out", gen_out, "Dataset root directory");
    gen->add_option("--seed", seed, "Master seed");
    gen->add_option("--train", n_train, "Training samples");
    gen->add_option("--val", n_val, "Validation samples");
    gen->add_option("--test", n_test, "Test samples");
    gen->add_option("--image-size", image_size, "Square image size");

    // validate
    auto* val = app.add_subcommand("validate", "Run annotation consistency checks over a manifest");
    std::string val_data;
    val->add_option("--data", val_data, "Dataset root")->required();

    // augment
    auto* aug = app.add_subcommand("augment", "Produce an Nx set of geometrically transformed layouts");
    std::string aug_data, aug_out = "augmented";
    int multiple = 1;
    aug->add_option("--data", aug_data, "Source dataset root")->required();
    aug->add_option("--out", aug_out, "Output root");
    aug->add_option("--multiple", multiple, "Copies per source layout");
    aug->add_option("--seed", seed, "Master seed");

    // train
    auto* tr = app.add_subcommand("train", "Two-stage training");
    std::string tr_config, tr_data, tr_out = "runs/train";
    bool tr_resume = false;
    std::vector<std::string> tr_set;
    tr->add_option("--config", tr_config, "Train config JSON");
    tr->add_option("--data", tr_data, "Dataset root");
    tr->add_option("--out", tr_out, "Output directory");
    tr->add_option("--seed", seed, "Master seed");
    tr->add_option("--set", tr_set, "Config overrides key.path=value");
    tr->add_flag("--resume", tr_resume, "Resume from <out>/last.ckpt");

    // sample
    auto* sm = app.add_subcommand("sample", "Generate images for a layout file or manifest");
    std::string sm_ckpt, sm_config, sm_layout, sm_data, sm_split = "test", sm_out = "samples";
    std::vector<std::string> sm_set;
    sm->add_option("--ckpt", sm_ckpt, "Checkpoint path")->required();
    sm->add_option("--config", sm_config, "Config JSON (sample/schedule/enc/unet)");
    sm->add_option("--layout", sm_layout, "Single layout JSON");
    sm->add_option("--data", sm_data, "Dataset root");
    sm->add_option("--split", sm_split, "Manifest split");
    sm->add_option("--out", sm_out, "Output directory");
    sm->add_option("--seed", seed, "Sampling seed");
    sm->add_option("--set", sm_set, "Config overrides key.path=value");

    // eval
    auto* ev = app.add_subcommand("eval", "Layout-consistency report on the test split");
    std::string ev_ckpt, ev_config, ev_data, ev_out = "runs/eval";
    std::vector<std::string> ev_set;
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint path")->required();
    ev->add_option("--config", ev_config, "Config JSON (eval/schedule/enc/unet)");
    ev->add_option("--data", ev_data, "Dataset root")->required();
    ev->add_option("--out", ev_out, "Output directory");
    ev->add_option("--seed", seed, "Sampling seed");
    ev->add_option("--set", ev_set, "Config overrides key.path=value");

    std::vector<const char*> argv;
    argv.push_back("terragen");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_out, seed, n_train, n_val, n_test, image_size);
        if (val->parsed()) return cmd_validate(val_data);
        if (aug->parsed()) return cmd_augment(aug_data, aug_out, multiple, seed);
        if (tr->parsed()) return cmd_train(tr_config, tr_set, tr_data, tr_out, seed, tr_resume);
        if (sm->parsed()) return cmd_sample(sm_ckpt, sm_config, sm_set, sm_layout, sm_data, sm_split, sm_out, seed);
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_config, ev_set, ev_data, ev_out, seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << app.help();
    return 2;
}

}  // namespace terragen
