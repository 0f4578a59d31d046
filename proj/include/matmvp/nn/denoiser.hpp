// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "matmvp/nn/attention.hpp"
#include "matmvp/nn/graph.hpp"
#include "matmvp/nn/params.hpp"

namespace matmvp::nn {

// Dual-lane multi-view denoiser. One shared convolutional encoder-decoder runs
// over batch index b = lane * n_views + view (lane 0 = albedo, lane 1 = MR);
// attention bundles at the two lowest resolutions apply, in order: per-lane
// multi-view attention, reference cross-attention on the albedo lane, the
// parameter-free MCAA residual into the MR lane, and per-lane material
// embedding attention.
struct DenoiserConfig {
    int n_views = 6;
    int resolution = 32;
    int image_channels = 3;  // per lane
    int geom_channels = 6;   // normal + canonical position
    int base_width = 16;     // stage widths: w, 2w, 4w
    int head_dim = 16;
    int emb_tokens = 16;
    int emb_width = 64;
    int time_dim = 64;
    int groups = 8;
    bool mcaa = true;

    void validate() const {
        require(n_views >= 1, "denoiser: n_views must be >= 1");
        require(resolution >= 8 && resolution % 4 == 0, "denoiser: resolution must be a multiple of 4");
        require(base_width % groups == 0, "denoiser: base_width must be divisible by groups");
        require((2 * base_width) % head_dim == 0 && (4 * base_width) % head_dim == 0,
                "denoiser: stage widths must be divisible by head_dim");
        require(time_dim % 2 == 0, "denoiser: time_dim must be even");
        require(emb_tokens >= 1 && emb_width >= 1, "denoiser: embedding shape invalid");
        require(image_channels == 3 && geom_channels == 6, "denoiser: unsupported channel layout");
    }

    bool operator==(const DenoiserConfig&) const = default;
};

template <class S>
class Denoiser {
public:
    using Id = typename Graph<S>::Id;

    Denoiser(DenoiserConfig config, uint64_t init_seed) : cfg(config) {
        cfg.validate();
        Rng rng(derive_seed(init_seed, "denoiser-init"));
        build_params(rng);
    }

    DenoiserConfig cfg;
    ParamStore<S> params;

    // Per-parameter AdamW decay eligibility (off for biases/norms/embeddings).
    const std::vector<bool>& decay_mask() const { return decay_mask_; }

    // Reference-branch features cached at the two attention sites.
    struct RefFeatures {
        Id t_mid = -1;  // [T_mid,  2w] tokens at resolution/2
        Id t_low = -1;  // [T_low,  4w] tokens at resolution/4
    };

    // Runs the backbone (without attention bundles) over the reference image;
    // geometry channels are zero and the time embedding is t = 0.
    RefFeatures encode_reference(Graph<S>& g, const Arr<S>& ref_rgb) {
        require(ref_rgb.ndim() == 4 && ref_rgb.dim(0) == 1 && ref_rgb.dim(1) == cfg.image_channels &&
                    ref_rgb.dim(2) == cfg.resolution && ref_rgb.dim(3) == cfg.resolution,
                "encode_reference: reference must be [1,3,res,res]");
        Arr<S> x({1, cfg.image_channels + cfg.geom_channels, cfg.resolution, cfg.resolution});
        std::copy(ref_rgb.v.begin(), ref_rgb.v.end(), x.v.begin());
        const Id xin = g.constant(std::move(x));
        const Id temb = time_embedding(g, 0);

        RefFeatures f;
        Id h = g.conv3x3(xin, P(g, stem_w_), P(g, stem_b_), 1);
        h = resblock(g, h, res0_, temb);
        h = g.conv3x3(h, P(g, down1_w_), P(g, down1_b_), 2);
        h = resblock(g, h, res1_, temb);
        f.t_mid = g.to_tokens(h);
        h = g.conv3x3(h, P(g, down2_w_), P(g, down2_b_), 2);
        h = resblock(g, h, res2_, temb);
        f.t_low = g.to_tokens(h);
        return f;
    }

    // z: [2*n_views, 3, res, res] (lane-major), geom: [n_views, 6, res, res].
    // Returns the epsilon prediction with the same shape as z.
    Id forward(Graph<S>& g, const Arr<S>& z, int t, const Arr<S>& geom, const RefFeatures& ref) {
        const int n = cfg.n_views, res = cfg.resolution;
        require(z.ndim() == 4 && z.dim(0) == 2 * n && z.dim(1) == cfg.image_channels &&
                    z.dim(2) == res && z.dim(3) == res,
                "forward: latent must be [2*n_views,3,res,res]");
        require(geom.ndim() == 4 && geom.dim(0) == n && geom.dim(1) == cfg.geom_channels &&
                    geom.dim(2) == res && geom.dim(3) == res,
                "forward: geometry must be [n_views,6,res,res]");
        require(t >= 0, "forward: bad timestep");
        require(ref.t_mid >= 0 && ref.t_low >= 0, "forward: missing reference features");

        // Assemble [2n, 9, res, res]: per-lane image channels plus that view's
        // geometry conditioning.
        const int ci = cfg.image_channels + cfg.geom_channels;
        Arr<S> x({2 * n, ci, res, res});
        const int64_t plane = static_cast<int64_t>(res) * res;
        for (int b = 0; b < 2 * n; ++b) {
            const int view = b % n;
            std::copy_n(z.data() + static_cast<int64_t>(b) * cfg.image_channels * plane,
                        cfg.image_channels * plane, x.data() + static_cast<int64_t>(b) * ci * plane);
            std::copy_n(geom.data() + static_cast<int64_t>(view) * cfg.geom_channels * plane,
                        cfg.geom_channels * plane,
                        x.data() + static_cast<int64_t>(b) * ci * plane + cfg.image_channels * plane);
        }
        const Id xin = g.constant(std::move(x));
        const Id temb = time_embedding(g, t);

        Id h = g.conv3x3(xin, P(g, stem_w_), P(g, stem_b_), 1);
        h = resblock(g, h, res0_, temb);
        const Id skip0 = h;
        h = g.conv3x3(h, P(g, down1_w_), P(g, down1_b_), 2);
        h = resblock(g, h, res1_, temb);
        h = bundle(g, h, ref.t_mid, bundle_mid_);
        const Id skip1 = h;
        h = g.conv3x3(h, P(g, down2_w_), P(g, down2_b_), 2);
        h = resblock(g, h, res2_, temb);
        h = bundle(g, h, ref.t_low, bundle_low_);
        h = resblock(g, h, res3_, temb);

        h = g.conv3x3(g.upsample2x(h), P(g, up1_w_), P(g, up1_b_), 1);
        h = g.concat_ch(h, skip1);
        h = resblock(g, h, res4_, temb);
        h = g.conv3x3(g.upsample2x(h), P(g, up2_w_), P(g, up2_b_), 1);
        h = g.concat_ch(h, skip0);
        h = resblock(g, h, res5_, temb);

        h = g.silu(g.group_norm(h, P(g, out_gn_g_), P(g, out_gn_b_), cfg.groups));
        return g.conv3x3(h, P(g, out_w_), P(g, out_b_), 1);
    }

private:
    struct ResIdx {
        int gn1_g, gn1_b, conv1_w, conv1_b, temb_w, temb_b, gn2_g, gn2_b, conv2_w, conv2_b;
        int skip_w = -1, skip_b = -1;  // 1x1 projection when cin != cout
        int cin, cout;
    };
    struct ProjIdx {
        int wq, bq, wk, bk, wv, bv, wo, bo;
        int heads;
    };
    struct BundleIdx {
        int ln_mv_g, ln_mv_b;
        ProjIdx mv;
        int ln_ref_g, ln_ref_b;
        ProjIdx ref;
        int ln_emb_g, ln_emb_b;
        ProjIdx emb;
        int width;
    };

    // --- registration ---

    int p_w(const std::string& n, std::vector<int> shape, Rng& rng, double stddev, bool decay) {
        const int idx = params.add(n, std::move(shape));
        init_normal(params.value(idx), rng, stddev);
        decay_mask_.push_back(decay);
        return idx;
    }
    int p_zero(const std::string& n, std::vector<int> shape, bool decay) {
        const int idx = params.add(n, std::move(shape));
        decay_mask_.push_back(decay);
        return idx;
    }
    int p_one(const std::string& n, std::vector<int> shape) {
        const int idx = params.add(n, std::move(shape));
        init_ones(params.value(idx));
        decay_mask_.push_back(false);
        return idx;
    }

    void conv_pair(const std::string& n, int co, int ci, Rng& rng, int& w, int& b) {
        w = p_w(n + ".w", {co, ci, 3, 3}, rng, std::sqrt(2.0 / (ci * 9)), true);
        b = p_zero(n + ".b", {co}, false);
    }

    ResIdx make_res(const std::string& n, int cin, int cout, Rng& rng) {
        ResIdx r;
        r.cin = cin;
        r.cout = cout;
        r.gn1_g = p_one(n + ".gn1.g", {cin});
        r.gn1_b = p_zero(n + ".gn1.b", {cin}, false);
        conv_pair(n + ".conv1", cout, cin, rng, r.conv1_w, r.conv1_b);
        r.temb_w = p_w(n + ".temb.w", {time_hidden(), cout}, rng, std::sqrt(1.0 / time_hidden()), true);
        r.temb_b = p_zero(n + ".temb.b", {cout}, false);
        r.gn2_g = p_one(n + ".gn2.g", {cout});
        r.gn2_b = p_zero(n + ".gn2.b", {cout}, false);
        conv_pair(n + ".conv2", cout, cout, rng, r.conv2_w, r.conv2_b);
        if (cin != cout) {
            r.skip_w = p_w(n + ".skip.w", {cin, cout}, rng, std::sqrt(1.0 / cin), true);
            r.skip_b = p_zero(n + ".skip.b", {cout}, false);
        }
        return r;
    }

    ProjIdx make_proj(const std::string& n, int q_width, int kv_width, int width, Rng& rng) {
        ProjIdx p;
        p.heads = width / cfg.head_dim;
        p.wq = p_w(n + ".wq", {q_width, width}, rng, std::sqrt(1.0 / q_width), true);
        p.bq = p_zero(n + ".bq", {width}, false);
        p.wk = p_w(n + ".wk", {kv_width, width}, rng, std::sqrt(1.0 / kv_width), true);
        p.bk = p_zero(n + ".bk", {width}, false);
        p.wv = p_w(n + ".wv", {kv_width, width}, rng, std::sqrt(1.0 / kv_width), true);
        p.bv = p_zero(n + ".bv", {width}, false);
        p.wo = p_zero(n + ".wo", {width, width}, true);  // zero-init: no-op residual at start
        p.bo = p_zero(n + ".bo", {width}, false);
        return p;
    }

    BundleIdx make_bundle(const std::string& n, int width, Rng& rng) {
        BundleIdx b;
        b.width = width;
        b.ln_mv_g = p_one(n + ".ln_mv.g", {width});
        b.ln_mv_b = p_zero(n + ".ln_mv.b", {width}, false);
        b.mv = make_proj(n + ".mv", width, width, width, rng);
        b.ln_ref_g = p_one(n + ".ln_ref.g", {width});
        b.ln_ref_b = p_zero(n + ".ln_ref.b", {width}, false);
        b.ref = make_proj(n + ".ref", width, width, width, rng);
        b.ln_emb_g = p_one(n + ".ln_emb.g", {width});
        b.ln_emb_b = p_zero(n + ".ln_emb.b", {width}, false);
        b.emb = make_proj(n + ".emb", width, cfg.emb_width, width, rng);
        return b;
    }

    int time_hidden() const { return 2 * cfg.time_dim; }

    void build_params(Rng& rng) {
        const int w = cfg.base_width, c1 = 2 * w, c2 = 4 * w;
        const int ci = cfg.image_channels + cfg.geom_channels;

        time_w1_ = p_w("time.lin1.w", {cfg.time_dim, time_hidden()}, rng, std::sqrt(1.0 / cfg.time_dim), true);
        time_b1_ = p_zero("time.lin1.b", {time_hidden()}, false);
        time_w2_ = p_w("time.lin2.w", {time_hidden(), time_hidden()}, rng, std::sqrt(1.0 / time_hidden()), true);
        time_b2_ = p_zero("time.lin2.b", {time_hidden()}, false);

        conv_pair("stem", w, ci, rng, stem_w_, stem_b_);
        res0_ = make_res("res0", w, w, rng);
        conv_pair("down1", c1, w, rng, down1_w_, down1_b_);
        res1_ = make_res("res1", c1, c1, rng);
        bundle_mid_ = make_bundle("bundle_mid", c1, rng);
        conv_pair("down2", c2, c1, rng, down2_w_, down2_b_);
        res2_ = make_res("res2", c2, c2, rng);
        bundle_low_ = make_bundle("bundle_low", c2, rng);
        res3_ = make_res("res3", c2, c2, rng);
        conv_pair("up1", c1, c2, rng, up1_w_, up1_b_);
        res4_ = make_res("res4", 2 * c1, c1, rng);
        conv_pair("up2", w, c1, rng, up2_w_, up2_b_);
        res5_ = make_res("res5", 2 * w, w, rng);
        out_gn_g_ = p_one("out.gn.g", {w});
        out_gn_b_ = p_zero("out.gn.b", {w}, false);
        out_w_ = p_zero("out.conv.w", {cfg.image_channels, w, 3, 3}, true);  // zero-init head
        out_b_ = p_zero("out.conv.b", {cfg.image_channels}, false);

        // Two independent lane embeddings ("16 x width"), trainable, no decay.
        emb_albedo_ = p_w("emb.albedo", {cfg.emb_tokens, cfg.emb_width}, rng, 0.02, false);
        emb_mr_ = p_w("emb.mr", {cfg.emb_tokens, cfg.emb_width}, rng, 0.02, false);
    }

    // --- graph assembly ---

    Id P(Graph<S>& g, int idx) { return g.param(&params.value(idx), &params.grad(idx)); }

    AttnProj<S> bind_proj(Graph<S>& g, const ProjIdx& p) {
        AttnProj<S> a;
        a.wq = P(g, p.wq);
        a.bq = P(g, p.bq);
        a.wk = P(g, p.wk);
        a.bk = P(g, p.bk);
        a.wv = P(g, p.wv);
        a.bv = P(g, p.bv);
        a.wo = P(g, p.wo);
        a.bo = P(g, p.bo);
        a.heads = p.heads;
        return a;
    }

    Id time_embedding(Graph<S>& g, int t) {
        Arr<S> emb({1, cfg.time_dim});
        const int half = cfg.time_dim / 2;
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * i / half);
            emb.v[static_cast<size_t>(2 * i)] = static_cast<S>(std::sin(t * freq));
            emb.v[static_cast<size_t>(2 * i + 1)] = static_cast<S>(std::cos(t * freq));
        }
        Id h = g.linear(g.constant(std::move(emb)), P(g, time_w1_), P(g, time_b1_));
        return g.linear(g.silu(h), P(g, time_w2_), P(g, time_b2_));
    }

    Id resblock(Graph<S>& g, Id x, const ResIdx& r, Id temb) {
        Id h = g.silu(g.group_norm(x, P(g, r.gn1_g), P(g, r.gn1_b), cfg.groups));
        h = g.conv3x3(h, P(g, r.conv1_w), P(g, r.conv1_b), 1);
        h = g.add_channel_bias(h, g.linear(temb, P(g, r.temb_w), P(g, r.temb_b)));
        h = g.silu(g.group_norm(h, P(g, r.gn2_g), P(g, r.gn2_b), cfg.groups));
        h = g.conv3x3(h, P(g, r.conv2_w), P(g, r.conv2_b), 1);
        Id skip = x;
        if (r.cin != r.cout) {
            const auto& xv = g.val(x);
            const int B = xv.dim(0), H = xv.dim(2), W = xv.dim(3);
            skip = g.from_tokens(g.linear(g.to_tokens(x), P(g, r.skip_w), P(g, r.skip_b)), B, r.cout, H, W);
        }
        return g.add(skip, h);
    }

    // One attention bundle over [2n, C, h, w]. Token rows are lane-contiguous
    // because batch index is lane-major.
    Id bundle(Graph<S>& g, Id x, Id ref_tokens, const BundleIdx& bd) {
        const auto& xv = g.val(x);
        const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const int n = cfg.n_views, T = H * W;
        Id tokens = g.to_tokens(x);

        Id lane[2];
        const AttnProj<S> mv = bind_proj(g, bd.mv);
        const Id ln_mv_g = P(g, bd.ln_mv_g), ln_mv_b = P(g, bd.ln_mv_b);
        for (int l = 0; l < 2; ++l) {
            Id lt = g.slice_rows(tokens, l * n * T, (l + 1) * n * T);
            Id h = g.layer_norm(lt, ln_mv_g, ln_mv_b);
            Id attn = multiview_attention_tokens(g, h, mv);
            lane[l] = g.add(lt, g.linear(attn, mv.wo, mv.bo));
        }

        const AttnProj<S> rp = bind_proj(g, bd.ref);
        const Id ln_ref_g = P(g, bd.ln_ref_g), ln_ref_b = P(g, bd.ln_ref_b);
        {
            Id ha = g.layer_norm(lane[0], ln_ref_g, ln_ref_b);
            Id attn_a = reference_cross_attention(g, ha, ref_tokens, rp);
            Id attn_a_proj = g.linear(attn_a, rp.wo, rp.bo);
            lane[0] = g.add(lane[0], attn_a_proj);
            if (cfg.mcaa) {
                lane[1] = mcaa_inject(g, lane[1], attn_a_proj);
            } else {
                // Ablation: plain weight sharing, the MR lane runs the same
                // reference attention instead of receiving the residual.
                Id hm = g.layer_norm(lane[1], ln_ref_g, ln_ref_b);
                Id attn_m = reference_cross_attention(g, hm, ref_tokens, rp);
                lane[1] = g.add(lane[1], g.linear(attn_m, rp.wo, rp.bo));
            }
        }

        const AttnProj<S> ep = bind_proj(g, bd.emb);
        const Id ln_emb_g = P(g, bd.ln_emb_g), ln_emb_b = P(g, bd.ln_emb_b);
        const int emb_idx[2] = {emb_albedo_, emb_mr_};
        for (int l = 0; l < 2; ++l) {
            Id h = g.layer_norm(lane[l], ln_emb_g, ln_emb_b);
            Id a = material_embedding_attention(g, h, P(g, emb_idx[l]), ep);
            lane[l] = g.add(lane[l], g.linear(a, ep.wo, ep.bo));
        }

        return g.from_tokens(g.concat_rows({lane[0], lane[1]}), B, C, H, W);
    }

    std::vector<bool> decay_mask_;

    int time_w1_, time_b1_, time_w2_, time_b2_;
    int stem_w_, stem_b_, down1_w_, down1_b_, down2_w_, down2_b_;
    int up1_w_, up1_b_, up2_w_, up2_b_;
    int out_gn_g_, out_gn_b_, out_w_, out_b_;
    int emb_albedo_, emb_mr_;
    ResIdx res0_, res1_, res2_, res3_, res4_, res5_;
    BundleIdx bundle_mid_, bundle_low_;
};

}  // namespace matmvp::nn
