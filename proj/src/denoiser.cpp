#include "terragen/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace terragen {

void UNetConfig::validate() const {
    if (image_size <= 0 || in_channels <= 0 || base_channels <= 0) {
        throw std::invalid_argument("UNetConfig: dimensions must be positive");
    }
    if (levels < 1 || levels > 6) throw std::invalid_argument("UNetConfig: levels must be in [1,6]");
    if (static_cast<int>(channels.size()) != levels) {
        throw std::invalid_argument("UNetConfig: channels must list one width per level");
    }
    if (image_size % (1 << levels) != 0) {
        throw std::invalid_argument("UNetConfig: image size " + std::to_string(image_size) +
                                    " not divisible by 2^" + std::to_string(levels));
    }
    if (injection_resolutions.empty()) {
        throw std::invalid_argument("UNetConfig: need at least one injection resolution");
    }
    for (int r : injection_resolutions) {
        if (r <= 0 || image_size % r != 0) {
            throw std::invalid_argument("UNetConfig: injection resolution " + std::to_string(r) +
                                        " does not divide image size " + std::to_string(image_size));
        }
    }
    if (scale_weight_init.size() != injection_resolutions.size()) {
        throw std::invalid_argument("UNetConfig: scale_weight_init size must match injection resolutions");
    }
    if (base_channels % norm_groups != 0) {
        throw std::invalid_argument("UNetConfig: base_channels not divisible by norm_groups");
    }
    for (int c : channels) {
        if (c % norm_groups != 0) {
            throw std::invalid_argument("UNetConfig: channel width " + std::to_string(c) +
                                        " not divisible by norm_groups");
        }
    }
}

std::vector<int> UNetConfig::active_injection_resolutions() const {
    std::vector<int> rs = injection_resolutions;
    std::sort(rs.begin(), rs.end());  // ascending: coarsest first
    if (injection_mode == InjectionMode::CoarseTwo && rs.size() > 2) {
        rs.resize(2);
    }
    return rs;
}

MaskPyramid build_mask_pyramid(const std::vector<UnifiedEntity>& entities, const UNetConfig& cfg) {
    MaskPyramid pyr;
    pyr.entity_count = static_cast<int>(entities.size());
    int n = pyr.entity_count;
    for (int r : cfg.injection_resolutions) {
        Tensor m = Tensor::zeros({r * r, n + 2});
        // task and caption columns are globally visible
        for (int q = 0; q < r * r; ++q) {
            m.at(q, 0) = 1.0;
            m.at(q, 1) = 1.0;
        }
        for (int i = 0; i < n; ++i) {
            const Mask& em = entities[static_cast<size_t>(i)].mask;
            int bh = em.height / r, bw = em.width / r;
            if (bh == 0 || bw == 0) {
                throw std::invalid_argument("build_mask_pyramid: entity mask " + std::to_string(em.height) +
                                            "x" + std::to_string(em.width) + " finer than resolution " +
                                            std::to_string(r));
            }
            for (int rr = 0; rr < r; ++rr) {
                for (int cc = 0; cc < r; ++cc) {
                    // max-pool the block
                    uint8_t any = 0;
                    for (int y = rr * bh; y < (rr + 1) * bh && !any; ++y) {
                        for (int x = cc * bw; x < (cc + 1) * bw; ++x) {
                            if (em.at(y, x)) {
                                any = 1;
                                break;
                            }
                        }
                    }
                    if (any) m.at(rr * r + cc, 2 + i) = 1.0;
                }
            }
        }
        pyr.resolutions.push_back(r);
        pyr.masks.push_back(std::move(m));
    }
    return pyr;
}

Tensor resample_scale_mask(const Tensor& mask, int r, int g) {
    int cols = mask.shape[1];
    if (r == g) return mask;
    Tensor out = Tensor::zeros({g * g, cols});
    for (int y = 0; y < g; ++y) {
        int sy = std::min(r - 1, y * r / g);
        for (int x = 0; x < g; ++x) {
            int sx = std::min(r - 1, x * r / g);
            for (int c = 0; c < cols; ++c) out.at(y * g + x, c) = mask.at(sy * r + sx, c);
        }
    }
    return out;
}

Tensor exact_softmax_logits(const std::vector<double>& targets) {
    int k = static_cast<int>(targets.size());
    double sum = 0.0;
    for (double t : targets) {
        if (t <= 0.0) throw std::invalid_argument("exact_softmax_logits: targets must be positive");
        sum += t;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("exact_softmax_logits: targets must sum to 1");

    std::vector<double> base(targets.size());
    for (size_t i = 0; i < targets.size(); ++i) base[i] = std::log(targets[i]);

    auto softmax_of = [&](const std::vector<double>& l) {
        double mx = *std::max_element(l.begin(), l.end());
        std::vector<double> e(l.size());
        double s = 0.0;
        for (size_t i = 0; i < l.size(); ++i) {
            e[i] = std::exp(l[i] - mx);
            s += e[i];
        }
        for (double& v : e) v /= s;
        return e;
    };
    auto ulp_shift = [](double x, int n) {
        uint64_t b;
        std::memcpy(&b, &x, 8);
        b += static_cast<uint64_t>(static_cast<int64_t>(n));
        double y;
        std::memcpy(&y, &b, 8);
        return y;
    };

    // Nudge each logit by a few ulps until the computed softmax lands
    // exactly on the targets; the schedule init has to satisfy
    // sum(alpha)=1 with the stated component values bit-for-bit.
    if (k <= 3) {
        const int R = 24;
        std::vector<double> l = base;
        for (int i = -R; i <= R; ++i) {
            l[0] = ulp_shift(base[0], i);
            for (int j = -R; j <= R; ++j) {
                if (k > 1) l[1] = ulp_shift(base[1], j);
                for (int m = -R; m <= R; ++m) {
                    if (k > 2) l[2] = ulp_shift(base[2], m);
                    if (softmax_of(l) == targets) {
                        Tensor out = Tensor::zeros({k});
                        for (int q = 0; q < k; ++q) out[q] = l[static_cast<size_t>(q)];
                        return out;
                    }
                    if (k <= 2) break;
                }
                if (k <= 1) break;
            }
        }
    }
    // Fallback: plain log targets (softmax equals targets to ~1 ulp).
    Tensor out = Tensor::zeros({k});
    for (int q = 0; q < k; ++q) out[q] = base[static_cast<size_t>(q)];
    return out;
}

Var masked_cross_attention(const Var& q, const Var& k, const Var& v,
                           const std::vector<Tensor>& scale_masks, const Var& alphas, MaskMode mode,
                           AttnRecorder::Site* record) {
    if (q->value.ndim() != 2 || k->value.ndim() != 2 || v->value.ndim() != 2) {
        throw std::invalid_argument("masked_cross_attention: expected 2-D token matrices");
    }
    int d = q->value.shape[1];
    if (k->value.shape[1] != d) {
        throw std::invalid_argument("masked_cross_attention: head dim mismatch, Q " +
                                    shape_str(q->value.shape) + " vs K " + shape_str(k->value.shape));
    }
    if (v->value.shape[0] != k->value.shape[0]) {
        throw std::invalid_argument("masked_cross_attention: K/V row mismatch");
    }
    int T = q->value.shape[0];
    int m = k->value.shape[0];
    int K = static_cast<int>(scale_masks.size());
    if (alphas->value.numel() != K) {
        throw std::invalid_argument("masked_cross_attention: scale count mismatch");
    }
    Var logits = scale(matmul(q, transpose2d(k)), 1.0 / std::sqrt(static_cast<double>(d)));  // (T,m)

    Var out = nullptr;
    for (int s = 0; s < K; ++s) {
        const Tensor& mask = scale_masks[static_cast<size_t>(s)];
        if (mask.shape != std::vector<int>{T, m}) {
            throw std::invalid_argument("masked_cross_attention: mask shape " + shape_str(mask.shape) +
                                        " does not match logits " + shape_str(logits->value.shape));
        }
        Var masked;
        if (mode == MaskMode::Additive) {
            // -1e9 bias where blocked; rows with no visible entity still
            // see the always-on task/caption columns.
            Tensor bias = Tensor::zeros(mask.shape);
            for (int64_t i = 0; i < mask.numel(); ++i) bias[i] = mask[i] > 0.5 ? 0.0 : -1e9;
            masked = add(logits, constant(bias));
        } else {
            masked = mul(logits, constant(mask));
        }
        Var weights = softmax(masked, 1);
        if (record) record->per_scale.push_back(weights->value);
        Var contrib = mul(matmul(weights, v), narrow(alphas, 1, s, 1));  // (T,dv) * (1,1)
        out = out ? add(out, contrib) : contrib;
    }
    return out;
}

namespace {

Var he_conv_param(ParamStore& params, const std::string& name, Rng& rng, int co, int ci) {
    return params.add(name, randn_init(rng, {co, ci, 3, 3}, std::sqrt(2.0 / (ci * 9))));
}

}  // namespace

void init_unet_params(ParamStore& params, const UNetConfig& cfg, Rng& rng) {
    cfg.validate();
    int td = cfg.temb_dim;
    params.add("unet.temb.w1", randn_init(rng, {td, td}, std::sqrt(2.0 / td)));
    params.add("unet.temb.b1", Tensor::zeros({td}));
    params.add("unet.temb.w2", randn_init(rng, {td, td}, std::sqrt(2.0 / td)));
    params.add("unet.temb.b2", Tensor::zeros({td}));

    he_conv_param(params, "unet.stem.w", rng, cfg.base_channels, cfg.in_channels);
    params.add("unet.stem.b", Tensor::zeros({cfg.base_channels}));

    auto block = [&](const std::string& prefix, int cin, int cout) {
        he_conv_param(params, prefix + ".w", rng, cout, cin);
        params.add(prefix + ".b", Tensor::zeros({cout}));
        params.add(prefix + ".temb_w", randn_init(rng, {td, cout}, 0.02));
        params.add(prefix + ".temb_b", Tensor::zeros({cout}));
        params.add(prefix + ".gamma", Tensor::full({1, cout, 1, 1}, 1.0));
        params.add(prefix + ".beta", Tensor::zeros({1, cout, 1, 1}));
    };

    int cin = cfg.base_channels;
    for (int i = 0; i < cfg.levels; ++i) {
        block("unet.down" + std::to_string(i), cin, cfg.channels[static_cast<size_t>(i)]);
        cin = cfg.channels[static_cast<size_t>(i)];
    }
    block("unet.mid", cin, cin);
    for (int i = cfg.levels - 1; i >= 0; --i) {
        int skip = i == 0 ? cfg.base_channels : cfg.channels[static_cast<size_t>(i - 1)];
        int cout = i == 0 ? cfg.base_channels : cfg.channels[static_cast<size_t>(i - 1)];
        block("unet.up" + std::to_string(i), cfg.channels[static_cast<size_t>(i)] + skip, cout);
        // next up block consumes this block's output; handled by the loop index
    }
    // zero-initialized head: eps_pred is 0 at initialization
    params.add("unet.head.w", Tensor::zeros({cfg.in_channels, cfg.base_channels, 3, 3}));
    params.add("unet.head.b", Tensor::zeros({cfg.in_channels}));

    params.add("inject.scale_logits", exact_softmax_logits(cfg.scale_weight_init));

    int D = 0;
    // injection parameters need the conditioning embed dim; infer from the
    // caption table if registered, else default 64
    D = params.has("cond.caption.w") ? params.get("cond.caption.w")->value.shape[1] : 64;

    for (int r : cfg.injection_resolutions) {
        params.add("inject.res" + std::to_string(r) + ".wh", randn_init(rng, {D, D}, std::sqrt(1.0 / D)));
    }
    // channel width of the feature map at resolution r on each path
    auto enc_channels_at = [&](int r) {
        int res = cfg.image_size;
        int c = cfg.base_channels;
        for (int i = 0; i < cfg.levels; ++i) {
            res /= 2;
            c = cfg.channels[static_cast<size_t>(i)];
            if (res == r) return c;
        }
        throw std::invalid_argument("init_unet_params: no encoder level at resolution " + std::to_string(r));
    };
    auto dec_channels_at = [&](int r) {
        int res = cfg.image_size >> cfg.levels;
        if (res == r) return cfg.channels.back();  // bottleneck output counts as the decoder path
        for (int i = cfg.levels - 1; i >= 0; --i) {
            res *= 2;
            int cout = i == 0 ? cfg.base_channels : cfg.channels[static_cast<size_t>(i - 1)];
            if (res == r) return cout;
        }
        throw std::invalid_argument("init_unet_params: no decoder level at resolution " + std::to_string(r));
    };
    for (int r : cfg.injection_resolutions) {
        for (const char* path : {"enc", "dec"}) {
            int c = std::string(path) == "enc" ? enc_channels_at(r) : dec_channels_at(r);
            std::string p = "inject." + std::string(path) + std::to_string(r);
            params.add(p + ".wq", randn_init(rng, {c, c}, std::sqrt(1.0 / c)));
            params.add(p + ".wk", randn_init(rng, {D, c}, std::sqrt(1.0 / D)));
            params.add(p + ".wv", randn_init(rng, {D, c}, std::sqrt(1.0 / D)));
            params.add(p + ".wo", Tensor::zeros({c, c}));  // residual no-op at init
        }
    }
}

Tensor sinusoidal_time_embedding(int t, int dim) {
    Tensor out = Tensor::zeros({1, dim});
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        out.at(0, i) = std::sin(t * freq);
        out.at(0, half + i) = std::cos(t * freq);
    }
    return out;
}

Var inject(const Var& f_in, const ConditionBundle& bundle, const MaskPyramid& pyramid,
           const ParamStore& params, const UNetConfig& cfg, const std::string& site_prefix,
           AttnRecorder* recorder) {
    int C = f_in->value.shape[1];
    int H = f_in->value.shape[2];
    int W = f_in->value.shape[3];
    if (H != W) throw std::invalid_argument("inject: expected square feature map");
    int T = H * W;

    Var tokens_in = reshape(f_in, {C, T});
    Var q_tokens = transpose2d(tokens_in);  // (T,C)

    Var q = matmul(q_tokens, params.get(site_prefix + ".wq"));

    Var stackv = bundle.stacked();  // (m,D)
    Var h = matmul(stackv, params.get("inject.res" + std::to_string(H) + ".wh"));
    Var k = matmul(h, params.get(site_prefix + ".wk"));
    Var v = matmul(h, params.get(site_prefix + ".wv"));

    int m = stackv->value.shape[0];
    std::vector<Tensor> scale_masks;
    for (size_t s = 0; s < pyramid.masks.size(); ++s) {
        Tensor mask = resample_scale_mask(pyramid.masks[s], pyramid.resolutions[s], H);
        // the null bundle carries no entity tokens; keep only the always-on
        // task/caption columns in that case
        if (mask.shape[1] != m) {
            if (m == 2) {
                Tensor trimmed = Tensor::zeros({T, 2});
                for (int i = 0; i < T; ++i) {
                    trimmed.at(i, 0) = 1.0;
                    trimmed.at(i, 1) = 1.0;
                }
                mask = std::move(trimmed);
            } else {
                throw std::invalid_argument("inject: pyramid has " + std::to_string(mask.shape[1]) +
                                            " columns but bundle has " + std::to_string(m) + " tokens");
            }
        }
        scale_masks.push_back(std::move(mask));
    }

    ScaleWeights sw{params.get("inject.scale_logits")};
    AttnRecorder::Site site;
    site.grid = H;
    Var attn = masked_cross_attention(q, k, v, scale_masks, sw.alphas(), cfg.mask_mode,
                                      recorder ? &site : nullptr);
    if (recorder) recorder->sites.push_back(std::move(site));

    Var out_tokens = matmul(attn, params.get(site_prefix + ".wo"));  // (T,C)
    Var residual = reshape(transpose2d(out_tokens), {1, C, H, W});
    return add(f_in, residual);
}

namespace {

Var unet_block(const Var& x, const std::string& prefix, const Var& temb, const ParamStore& params,
               const UNetConfig& cfg, int stride) {
    Var h = conv2d(x, params.get(prefix + ".w"), params.get(prefix + ".b"), stride, 1);
    Var tproj = linear(temb, params.get(prefix + ".temb_w"), params.get(prefix + ".temb_b"));  // (1,C)
    int c = h->value.shape[1];
    h = add(h, reshape(tproj, {1, c, 1, 1}));
    h = group_norm(h, cfg.norm_groups);
    h = add(mul(h, params.get(prefix + ".gamma")), params.get(prefix + ".beta"));
    return silu(h);
}

}  // namespace

Var unet_forward(const Var& x_t, int t, const ConditionBundle& bundle, const MaskPyramid& pyramid,
                 const ParamStore& params, const UNetConfig& cfg, AttnRecorder* recorder) {
    if (x_t->value.ndim() != 4 || x_t->value.shape[0] != 1 || x_t->value.shape[1] != cfg.in_channels ||
        x_t->value.shape[2] != cfg.image_size || x_t->value.shape[3] != cfg.image_size) {
        throw std::invalid_argument("unet_forward: input shape " + shape_str(x_t->value.shape) +
                                    " does not match config");
    }
    cfg.validate();

    Var temb = constant(sinusoidal_time_embedding(t, cfg.temb_dim));
    temb = linear(temb, params.get("unet.temb.w1"), params.get("unet.temb.b1"));
    temb = silu(temb);
    temb = linear(temb, params.get("unet.temb.w2"), params.get("unet.temb.b2"));

    auto active = cfg.active_injection_resolutions();
    auto is_active = [&](int r) { return std::find(active.begin(), active.end(), r) != active.end(); };

    Var h = conv2d(x_t, params.get("unet.stem.w"), params.get("unet.stem.b"), 1, 1);

    std::vector<Var> skips = {h};
    int res = cfg.image_size;
    for (int i = 0; i < cfg.levels; ++i) {
        h = unet_block(h, "unet.down" + std::to_string(i), temb, params, cfg, 2);
        res /= 2;
        if (is_active(res)) {
            h = inject(h, bundle, pyramid, params, cfg, "inject.enc" + std::to_string(res), recorder);
        }
        if (i + 1 < cfg.levels) skips.push_back(h);
    }

    h = unet_block(h, "unet.mid", temb, params, cfg, 1);
    if (is_active(res)) {
        h = inject(h, bundle, pyramid, params, cfg, "inject.dec" + std::to_string(res), recorder);
    }

    for (int i = cfg.levels - 1; i >= 0; --i) {
        h = upsample_nearest2x(h);
        res *= 2;
        h = concat({h, skips[static_cast<size_t>(i)]}, 1);
        h = unet_block(h, "unet.up" + std::to_string(i), temb, params, cfg, 1);
        if (is_active(res)) {
            h = inject(h, bundle, pyramid, params, cfg, "inject.dec" + std::to_string(res), recorder);
        }
    }

    return conv2d(h, params.get("unet.head.w"), params.get("unet.head.b"), 1, 1);
}

}  // namespace terragen
