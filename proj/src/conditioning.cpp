#include "terragen/conditioning.hpp"

#include <cmath>
#include <stdexcept>

namespace terragen {

void EncoderConfig::validate() const {
    if (embed_dim <= 0 || fusion_heads <= 0 || fusion_key_dim <= 0) {
        throw std::invalid_argument("EncoderConfig: dimensions must be positive");
    }
    if (embed_dim % fusion_heads != 0) {
        throw std::invalid_argument("EncoderConfig: embed_dim " + std::to_string(embed_dim) +
                                    " not divisible by fusion_heads " + std::to_string(fusion_heads));
    }
    if (mask_cnn_channels.size() != 4) {
        throw std::invalid_argument("EncoderConfig: mask_cnn_channels must be a ladder of 4");
    }
    if (mask_cnn_channels.back() != embed_dim) {
        throw std::invalid_argument("EncoderConfig: mask_cnn_channels must end at embed_dim");
    }
    if (mask_input_size < 16 || (mask_input_size & (mask_input_size - 1)) != 0) {
        throw std::invalid_argument("EncoderConfig: mask_input_size must be a power of two >= 16");
    }
    if (n_categories <= 0) throw std::invalid_argument("EncoderConfig: n_categories must be positive");
}

int ConditionBundle::entity_count() const {
    return entity_tokens ? entity_tokens->value.shape[0] : 0;
}

Var ConditionBundle::stacked() const {
    if (entity_tokens) return concat({task_token, caption_token, entity_tokens}, 0);
    return concat({task_token, caption_token}, 0);
}

void init_conditioning_params(ParamStore& params, const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    int D = cfg.embed_dim;
    auto he = [&](const std::vector<int>& shape, int fan_in) {
        return randn_init(rng, shape, std::sqrt(2.0 / fan_in));
    };
    params.add("cond.cat_emb", randn_init(rng, {cfg.n_categories, D}, 0.5));

    // phi_b: Linear(4+D -> D), SiLU, Linear(D -> D)
    params.add("cond.box.w1", he({4 + D, D}, 4 + D));
    params.add("cond.box.b1", Tensor::zeros({D}));
    params.add("cond.box.w2", he({D, D}, D));
    params.add("cond.box.b2", Tensor::zeros({D}));

    // phi_m: 4 stride-2 convs through the ladder
    int cin = 1;
    for (int i = 0; i < 4; ++i) {
        int cout = cfg.mask_cnn_channels[static_cast<size_t>(i)];
        params.add("cond.mask.conv" + std::to_string(i) + ".w", he({cout, cin, 3, 3}, cin * 9));
        params.add("cond.mask.conv" + std::to_string(i) + ".b", Tensor::zeros({cout}));
        cin = cout;
    }

    // psi: multi-head cross-attention plus residual projection
    int hk = cfg.fusion_heads * cfg.fusion_key_dim;
    params.add("cond.fuse.wq", he({D, hk}, D));
    params.add("cond.fuse.wk", he({D, hk}, D));
    params.add("cond.fuse.wv", he({D, D}, D));
    params.add("cond.fuse.wo", he({D, D}, D));
    params.add("cond.fuse.wr", randn_init(rng, {D, D}, 0.05));

    // task conditioning: theta(T) table and FiLM maps
    params.add("cond.task_emb", randn_init(rng, {kNumTasks, D}, 0.5));
    params.add("cond.film.scale.w", randn_init(rng, {D, D}, 0.05));
    params.add("cond.film.scale.b", Tensor::zeros({D}));
    params.add("cond.film.shift.w", randn_init(rng, {D, D}, 0.05));
    params.add("cond.film.shift.b", Tensor::zeros({D}));

    // caption: linear map over normalized category counts
    params.add("cond.caption.w", he({cfg.n_categories, D}, cfg.n_categories));
    params.add("cond.caption.b", Tensor::zeros({D}));

    // learned null tokens for condition dropout
    params.add("cond.null_task", randn_init(rng, {1, D}, 0.5));
    params.add("cond.null_caption", randn_init(rng, {1, D}, 0.5));
}

Tensor resample_mask(const Mask& mask, int size) {
    Tensor out = Tensor::zeros({1, 1, size, size});
    for (int r = 0; r < size; ++r) {
        int sr = std::min(mask.height - 1, r * mask.height / size);
        for (int c = 0; c < size; ++c) {
            int sc = std::min(mask.width - 1, c * mask.width / size);
            out.at(0, 0, r, c) = mask.at(sr, sc) ? 1.0 : 0.0;
        }
    }
    return out;
}

Var encode_boxes(const std::vector<UnifiedEntity>& entities, const EncoderConfig& cfg,
                 const ParamStore& params) {
    if (entities.empty()) return nullptr;
    int n = static_cast<int>(entities.size());
    std::vector<int> ids;
    Tensor coords = Tensor::zeros({n, 4});
    for (int i = 0; i < n; ++i) {
        const auto& e = entities[static_cast<size_t>(i)];
        if (e.category < 0 || e.category >= cfg.n_categories) {
            throw std::invalid_argument("encode_boxes: category id " + std::to_string(e.category) +
                                        " outside table of size " + std::to_string(cfg.n_categories));
        }
        ids.push_back(e.category);
        coords.at(i, 0) = e.box.x1;
        coords.at(i, 1) = e.box.y1;
        coords.at(i, 2) = e.box.x2;
        coords.at(i, 3) = e.box.y2;
    }
    Var cat = embedding(params.get("cond.cat_emb"), ids);         // (n,D)
    Var x = concat({constant(coords), cat}, 1);                   // (n,4+D)
    Var h = silu(linear(x, params.get("cond.box.w1"), params.get("cond.box.b1")));
    return linear(h, params.get("cond.box.w2"), params.get("cond.box.b2"));
}

Var encode_masks(const std::vector<UnifiedEntity>& entities, const EncoderConfig& cfg,
                 const ParamStore& params) {
    if (entities.empty()) return nullptr;
    int E = cfg.mask_input_size;
    std::vector<Var> rows;
    for (const auto& e : entities) {
        Var x = constant(resample_mask(e.mask, E));  // (1,1,E,E)
        for (int i = 0; i < 4; ++i) {
            std::string p = "cond.mask.conv" + std::to_string(i);
            x = conv2d(x, params.get(p + ".w"), params.get(p + ".b"), 2, 1);
            if (i < 3) x = silu(x);
        }
        rows.push_back(adaptive_avg_pool_1x1(x));  // (1,D)
    }
    return rows.size() == 1 ? rows[0] : concat(rows, 0);
}

namespace {

// Standard multi-head attention; q (n,D), k/v (m,D).
Var multi_head_attention(const Var& q_in, const Var& kv_in, const EncoderConfig& cfg,
                         const ParamStore& params) {
    int heads = cfg.fusion_heads;
    int kd = cfg.fusion_key_dim;
    int D = cfg.embed_dim;
    int vd = D / heads;
    Var q = matmul(q_in, params.get("cond.fuse.wq"));   // (n, heads*kd)
    Var k = matmul(kv_in, params.get("cond.fuse.wk"));  // (m, heads*kd)
    Var v = matmul(kv_in, params.get("cond.fuse.wv"));  // (m, D)
    std::vector<Var> outs;
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(kd));
    for (int h = 0; h < heads; ++h) {
        Var qh = narrow(q, 1, h * kd, kd);
        Var kh = narrow(k, 1, h * kd, kd);
        Var vh = narrow(v, 1, h * vd, vd);
        Var scores = scale(matmul(qh, transpose2d(kh)), inv_sqrt);  // (n,m)
        Var weights = softmax(scores, 1);
        outs.push_back(matmul(weights, vh));  // (n,vd)
    }
    Var joined = outs.size() == 1 ? outs[0] : concat(outs, 1);  // (n,D)
    return matmul(joined, params.get("cond.fuse.wo"));
}

}  // namespace

Var fuse(const Var& box_feats, const Var& mask_feats, const EncoderConfig& cfg, const ParamStore& params) {
    if (!box_feats || !mask_feats) throw std::invalid_argument("fuse: null features");
    if (box_feats->value.shape != mask_feats->value.shape) {
        throw std::invalid_argument("fuse: feature shapes differ, " + shape_str(box_feats->value.shape) +
                                    " vs " + shape_str(mask_feats->value.shape));
    }
    Var attn = multi_head_attention(box_feats, mask_feats, cfg, params);
    Var out = add(scale(box_feats, cfg.alpha_box), scale(attn, cfg.alpha_mask));
    return add(out, matmul(box_feats, params.get("cond.fuse.wr")));
}

ConditionBundle condition(const Layout& layout, const EncoderConfig& cfg, const ParamStore& params,
                          bool drop, int unify_grid) {
    ConditionBundle bundle;
    if (drop) {
        bundle.task_token = params.get("cond.null_task");
        bundle.caption_token = params.get("cond.null_caption");
        bundle.entity_tokens = nullptr;
        bundle.null_flag = true;
        return bundle;
    }
    int task_id = static_cast<int>(layout.task);
    Var task_tok = embedding(params.get("cond.task_emb"), {task_id});  // (1,D)

    auto entities = unify(layout, unify_grid, unify_grid);
    Var tokens = nullptr;
    if (!entities.empty()) {
        Var feats = nullptr;
        switch (cfg.modality) {
            case Modality::BoxOnly:
                feats = scale(encode_boxes(entities, cfg, params), cfg.alpha_box);
                break;
            case Modality::MaskOnly:
                feats = scale(encode_masks(entities, cfg, params), cfg.alpha_mask);
                break;
            case Modality::Both:
                feats = fuse(encode_boxes(entities, cfg, params), encode_masks(entities, cfg, params), cfg,
                             params);
                break;
        }
        // delta: FiLM modulation generated from theta(T)
        Var sc = linear(task_tok, params.get("cond.film.scale.w"), params.get("cond.film.scale.b"));
        Var sh = linear(task_tok, params.get("cond.film.shift.w"), params.get("cond.film.shift.b"));
        tokens = add(mul(feats, add_scalar(sc, 1.0)), sh);
    }

    // caption token from the L1-normalized category-count vector
    Tensor counts = Tensor::zeros({1, cfg.n_categories});
    double total = 0.0;
    for (const auto& [cat, cnt] : layout.caption) {
        if (cat >= 0 && cat < cfg.n_categories) {
            counts.at(0, cat) = static_cast<double>(cnt);
            total += cnt;
        }
    }
    if (total > 0) {
        for (double& v : counts.data) v /= total;
    }
    Var cap = linear(constant(counts), params.get("cond.caption.w"), params.get("cond.caption.b"));

    bundle.task_token = task_tok;
    bundle.caption_token = cap;
    bundle.entity_tokens = tokens;
    bundle.null_flag = false;
    return bundle;
}

}  // namespace terragen
