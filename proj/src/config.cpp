#include "terragen/config.hpp"

#include <fstream>
#include <stdexcept>

namespace terragen {

using nlohmann::json;

namespace {

void check_keys(const json& doc, const std::vector<std::string>& allowed, const std::string& what) {
    for (const auto& [key, val] : doc.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw std::invalid_argument(what + ": unknown key '" + key + "'");
        }
    }
}

}  // namespace

json to_json(const EncoderConfig& cfg) {
    return json{{"embed_dim", cfg.embed_dim},
                {"fusion_heads", cfg.fusion_heads},
                {"fusion_key_dim", cfg.fusion_key_dim},
                {"mask_cnn_channels", cfg.mask_cnn_channels},
                {"n_categories", cfg.n_categories},
                {"mask_input_size", cfg.mask_input_size},
                {"alpha_box", cfg.alpha_box},
                {"alpha_mask", cfg.alpha_mask},
                {"modality", cfg.modality == Modality::Both       ? "both"
                             : cfg.modality == Modality::BoxOnly ? "box"
                                                                 : "mask"}};
}

EncoderConfig encoder_config_from_json(const json& doc) {
    EncoderConfig cfg;
    check_keys(doc,
               {"embed_dim", "fusion_heads", "fusion_key_dim", "mask_cnn_channels", "n_categories",
                "mask_input_size", "alpha_box", "alpha_mask", "modality"},
               "encoder config");
    cfg.embed_dim = doc.value("embed_dim", cfg.embed_dim);
    cfg.fusion_heads = doc.value("fusion_heads", cfg.fusion_heads);
    cfg.fusion_key_dim = doc.value("fusion_key_dim", cfg.fusion_key_dim);
    cfg.mask_cnn_channels = doc.value("mask_cnn_channels", cfg.mask_cnn_channels);
    cfg.n_categories = doc.value("n_categories", cfg.n_categories);
    cfg.mask_input_size = doc.value("mask_input_size", cfg.mask_input_size);
    cfg.alpha_box = doc.value("alpha_box", cfg.alpha_box);
    cfg.alpha_mask = doc.value("alpha_mask", cfg.alpha_mask);
    std::string mod = doc.value("modality", std::string("both"));
    if (mod == "both") {
        cfg.modality = Modality::Both;
    } else if (mod == "box") {
        cfg.modality = Modality::BoxOnly;
    } else if (mod == "mask") {
        cfg.modality = Modality::MaskOnly;
    } else {
        throw std::invalid_argument("encoder config: modality must be both|box|mask, got '" + mod + "'");
    }
    cfg.validate();
    return cfg;
}

json to_json(const UNetConfig& cfg) {
    return json{{"image_size", cfg.image_size},
                {"in_channels", cfg.in_channels},
                {"base_channels", cfg.base_channels},
                {"levels", cfg.levels},
                {"channels", cfg.channels},
                {"injection_resolutions", cfg.injection_resolutions},
                {"injection_mode", cfg.injection_mode == InjectionMode::AllLevels ? "all_levels" : "coarse_two"},
                {"mask_mode", cfg.mask_mode == MaskMode::Additive ? "additive" : "multiplicative"},
                {"temb_dim", cfg.temb_dim},
                {"norm_groups", cfg.norm_groups},
                {"scale_weight_init", cfg.scale_weight_init}};
}

UNetConfig unet_config_from_json(const json& doc) {
    UNetConfig cfg;
    check_keys(doc,
               {"image_size", "in_channels", "base_channels", "levels", "channels", "injection_resolutions",
                "injection_mode", "mask_mode", "temb_dim", "norm_groups", "scale_weight_init"},
               "unet config");
    cfg.image_size = doc.value("image_size", cfg.image_size);
    cfg.in_channels = doc.value("in_channels", cfg.in_channels);
    cfg.base_channels = doc.value("base_channels", cfg.base_channels);
    cfg.levels = doc.value("levels", cfg.levels);
    cfg.channels = doc.value("channels", cfg.channels);
    cfg.injection_resolutions = doc.value("injection_resolutions", cfg.injection_resolutions);
    cfg.temb_dim = doc.value("temb_dim", cfg.temb_dim);
    cfg.norm_groups = doc.value("norm_groups", cfg.norm_groups);
    cfg.scale_weight_init = doc.value("scale_weight_init", cfg.scale_weight_init);
    std::string inj = doc.value("injection_mode", std::string("coarse_two"));
    if (inj == "all_levels") {
        cfg.injection_mode = InjectionMode::AllLevels;
    } else if (inj == "coarse_two") {
        cfg.injection_mode = InjectionMode::CoarseTwo;
    } else {
        throw std::invalid_argument("unet config: injection_mode must be all_levels|coarse_two");
    }
    std::string mm = doc.value("mask_mode", std::string("additive"));
    if (mm == "additive") {
        cfg.mask_mode = MaskMode::Additive;
    } else if (mm == "multiplicative") {
        cfg.mask_mode = MaskMode::Multiplicative;
    } else {
        throw std::invalid_argument("unet config: mask_mode must be additive|multiplicative");
    }
    cfg.validate();
    return cfg;
}

json to_json(const NoiseSchedule& schedule) {
    return json{{"t_train", schedule.t_train},
                {"beta_start", schedule.beta_start},
                {"beta_end", schedule.beta_end}};
}

NoiseSchedule schedule_from_json(const json& doc) {
    check_keys(doc, {"t_train", "beta_start", "beta_end"}, "schedule");
    return NoiseSchedule::linear(doc.value("t_train", 1000), doc.value("beta_start", 1e-4),
                                 doc.value("beta_end", 2e-2));
}

json to_json(const TrainConfig& cfg) {
    return json{{"schedule", to_json(cfg.schedule)},
                {"stage1_steps", cfg.stage1_steps},
                {"stage2_steps", cfg.stage2_steps},
                {"lr_stage1", cfg.lr_stage1},
                {"lr_stage2", cfg.lr_stage2},
                {"warmup_steps", cfg.warmup_steps},
                {"batch_size", cfg.batch_size},
                {"accumulation", cfg.accumulation},
                {"dropout_prob", cfg.dropout_prob},
                {"maloss", cfg.maloss},
                {"maloss_beta", cfg.maloss_beta},
                {"maloss_floor", cfg.maloss_floor},
                {"seed", cfg.seed},
                {"checkpoint_every", cfg.checkpoint_every},
                {"workers", cfg.workers},
                {"dataset_root", cfg.dataset_root},
                {"out_dir", cfg.out_dir},
                {"enc", to_json(cfg.enc)},
                {"unet", to_json(cfg.unet)}};
}

TrainConfig train_config_from_json(const json& doc) {
    TrainConfig cfg;
    check_keys(doc,
               {"schedule", "stage1_steps", "stage2_steps", "lr_stage1", "lr_stage2", "warmup_steps",
                "batch_size", "accumulation", "dropout_prob", "maloss", "maloss_beta", "maloss_floor",
                "seed", "checkpoint_every", "workers", "dataset_root", "out_dir", "enc", "unet"},
               "train config");
    if (doc.contains("schedule")) cfg.schedule = schedule_from_json(doc.at("schedule"));
    cfg.stage1_steps = doc.value("stage1_steps", cfg.stage1_steps);
    cfg.stage2_steps = doc.value("stage2_steps", cfg.stage2_steps);
    cfg.lr_stage1 = doc.value("lr_stage1", cfg.lr_stage1);
    cfg.lr_stage2 = doc.value("lr_stage2", cfg.lr_stage2);
    cfg.warmup_steps = doc.value("warmup_steps", cfg.warmup_steps);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.accumulation = doc.value("accumulation", cfg.accumulation);
    cfg.dropout_prob = doc.value("dropout_prob", cfg.dropout_prob);
    cfg.maloss = doc.value("maloss", cfg.maloss);
    cfg.maloss_beta = doc.value("maloss_beta", cfg.maloss_beta);
    cfg.maloss_floor = doc.value("maloss_floor", cfg.maloss_floor);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.checkpoint_every = doc.value("checkpoint_every", cfg.checkpoint_every);
    cfg.workers = doc.value("workers", cfg.workers);
    cfg.dataset_root = doc.value("dataset_root", cfg.dataset_root);
    cfg.out_dir = doc.value("out_dir", cfg.out_dir);
    if (doc.contains("enc")) cfg.enc = encoder_config_from_json(doc.at("enc"));
    if (doc.contains("unet")) cfg.unet = unet_config_from_json(doc.at("unet"));
    return cfg;
}

json to_json(const SampleConfig& cfg) {
    json doc{{"ddim_steps", cfg.ddim_steps},
             {"guidance_scale", cfg.guidance_scale},
             {"negative_mode", cfg.negative_mode == NegativeMode::Null ? "null" : "non_target_task"},
             {"seed", cfg.seed}};
    if (cfg.alpha_box) doc["alpha_box"] = *cfg.alpha_box;
    if (cfg.alpha_mask) doc["alpha_mask"] = *cfg.alpha_mask;
    return doc;
}

SampleConfig sample_config_from_json(const json& doc) {
    SampleConfig cfg;
    check_keys(doc, {"ddim_steps", "guidance_scale", "negative_mode", "seed", "alpha_box", "alpha_mask"},
               "sample config");
    cfg.ddim_steps = doc.value("ddim_steps", cfg.ddim_steps);
    cfg.guidance_scale = doc.value("guidance_scale", cfg.guidance_scale);
    cfg.seed = doc.value("seed", cfg.seed);
    std::string nm = doc.value("negative_mode", std::string("null"));
    if (nm == "null") {
        cfg.negative_mode = NegativeMode::Null;
    } else if (nm == "non_target_task") {
        cfg.negative_mode = NegativeMode::NonTargetTask;
    } else {
        throw std::invalid_argument("sample config: negative_mode must be null|non_target_task");
    }
    if (doc.contains("alpha_box")) cfg.alpha_box = doc.at("alpha_box").get<double>();
    if (doc.contains("alpha_mask")) cfg.alpha_mask = doc.at("alpha_mask").get<double>();
    return cfg;
}

json to_json(const EvalConfig& cfg) {
    return json{{"sample", to_json(cfg.sample)},
                {"extractor", cfg.extractor},
                {"oracle_tol", cfg.oracle_tol},
                {"shuffle_seed", cfg.shuffle_seed},
                {"max_samples", cfg.max_samples},
                {"workers", cfg.workers}};
}

EvalConfig eval_config_from_json(const json& doc) {
    EvalConfig cfg;
    check_keys(doc, {"sample", "extractor", "oracle_tol", "shuffle_seed", "max_samples", "workers"}, "eval config");
    if (doc.contains("sample")) cfg.sample = sample_config_from_json(doc.at("sample"));
    cfg.extractor = doc.value("extractor", cfg.extractor);
    cfg.oracle_tol = doc.value("oracle_tol", cfg.oracle_tol);
    cfg.shuffle_seed = doc.value("shuffle_seed", cfg.shuffle_seed);
    cfg.max_samples = doc.value("max_samples", cfg.max_samples);
    cfg.workers = doc.value("workers", cfg.workers);
    return cfg;
}

void apply_override(json& doc, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw std::invalid_argument("override must look like key.path=value, got '" + assignment + "'");
    }
    std::string path = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);

    json* cur = &doc;
    size_t pos = 0;
    while (true) {
        size_t dot = path.find('.', pos);
        std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (key.empty()) throw std::invalid_argument("override has an empty key segment: '" + path + "'");
        if (dot == std::string::npos) {
            json parsed = json::parse(value, nullptr, false);
            (*cur)[key] = parsed.is_discarded() ? json(value) : parsed;
            break;
        }
        cur = &(*cur)[key];
        pos = dot + 1;
    }
}

json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file " + path);
    try {
        json doc;
        f >> doc;
        return doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("corrupt JSON in " + path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const json& doc) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << doc.dump(2) << "\n";
}

}  // namespace terragen
