// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <functional>

#include "doctest.h"
#include "matmvp/nn/attention.hpp"
#include "matmvp/nn/denoiser.hpp"
#include "matmvp/nn/graph.hpp"
#include "matmvp/nn/params.hpp"
#include "oracles.hpp"

using namespace matmvp;
using namespace matmvp::nn;

namespace {

using G = Graph<double>;

Arr<double> rand_arr(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Arr<double> a(std::move(shape));
    for (auto& v : a.v) v = rng.gaussian() * scale;
    return a;
}

oracle::Mat to_mat(const Arr<double>& a) {
    oracle::Mat m(static_cast<size_t>(a.dim(0)), std::vector<double>(static_cast<size_t>(a.dim(1))));
    for (int r = 0; r < a.dim(0); ++r)
        for (int c = 0; c < a.dim(1); ++c) m[static_cast<size_t>(r)][static_cast<size_t>(c)] = a.v[static_cast<size_t>(r * a.dim(1) + c)];
    return m;
}

// Projects tokens with w/b the way Graph::linear does, in plain loops.
oracle::Mat project(const oracle::Mat& x, const Arr<double>& w, const Arr<double>& b) {
    const size_t K = static_cast<size_t>(w.dim(0)), M = static_cast<size_t>(w.dim(1));
    oracle::Mat out(x.size(), std::vector<double>(M, 0.0));
    for (size_t r = 0; r < x.size(); ++r)
        for (size_t m = 0; m < M; ++m) {
            double acc = b.v[m];
            for (size_t k = 0; k < K; ++k) acc += x[r][k] * w.v[k * M + m];
            out[r][m] = acc;
        }
    return out;
}

double rel_err(double a, double b) {
    const double d = std::abs(a - b);
    return d / std::max({1e-12, std::abs(a), std::abs(b)});
}

// Central-difference check of every parameter element against the analytic
// gradient of a scalar loss.
void gradcheck_elementwise(ParamStore<double>& ps, const std::function<double(bool)>& loss_fn,
                           double tol, double h = 1e-5) {
    ps.zero_grads();
    loss_fn(true);
    std::vector<std::vector<double>> analytic;
    for (int i = 0; i < ps.count(); ++i) analytic.push_back(ps.grad(i).v);

    for (int i = 0; i < ps.count(); ++i) {
        for (size_t j = 0; j < ps.value(i).v.size(); ++j) {
            double& w = ps.value(i).v[j];
            const double w0 = w;
            w = w0 + h;
            const double lp = loss_fn(false);
            w = w0 - h;
            const double lm = loss_fn(false);
            w = w0;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = analytic[static_cast<size_t>(i)][j];
            const double err = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
            if (err > tol) {
                CAPTURE(ps.entry(i).name);
                CAPTURE(j);
                CAPTURE(fd);
                CAPTURE(an);
                CHECK(err <= tol);
                return;
            }
        }
    }
    CHECK(true);
}

}  // namespace

TEST_SUITE("graph_ops") {
    TEST_CASE("elementwise chain gradcheck (silu, add, sub, scale, mse)") {
        Rng rng(1);
        ParamStore<double> ps;
        const int a = ps.add("a", {3, 4});
        const int b = ps.add("b", {3, 4});
        init_normal(ps.value(a), rng, 1.0);
        init_normal(ps.value(b), rng, 1.0);
        const Arr<double> target = rand_arr({3, 4}, rng);

        auto loss = [&](bool back) {
            G g;
            auto ia = g.param(&ps.value(a), &ps.grad(a));
            auto ib = g.param(&ps.value(b), &ps.grad(b));
            auto h = g.silu(g.add(ia, g.scale(g.sub(ib, ia), 0.7)));
            auto l = g.mse(h, g.constant(target));
            if (back) g.backward(l);
            return g.val(l).v[0];
        };
        gradcheck_elementwise(ps, loss, 1e-6);
    }

    TEST_CASE("linear gradcheck") {
        Rng rng(2);
        ParamStore<double> ps;
        const int x = ps.add("x", {5, 3});
        const int w = ps.add("w", {3, 4});
        const int b = ps.add("b", {4});
        for (int i : {x, w, b}) init_normal(ps.value(i), rng, 0.8);
        const Arr<double> target = rand_arr({5, 4}, rng);
        auto loss = [&](bool back) {
            G g;
            auto l = g.mse(g.linear(g.param(&ps.value(x), &ps.grad(x)), g.param(&ps.value(w), &ps.grad(w)),
                                    g.param(&ps.value(b), &ps.grad(b))),
                           g.constant(target));
            if (back) g.backward(l);
            return g.val(l).v[0];
        };
        gradcheck_elementwise(ps, loss, 1e-6);
    }

    TEST_CASE("mha gradcheck (2 heads)") {
        Rng rng(3);
        ParamStore<double> ps;
        const int q = ps.add("q", {4, 6});
        const int k = ps.add("k", {5, 6});
        const int v = ps.add("v", {5, 6});
        for (int i : {q, k, v}) init_normal(ps.value(i), rng, 0.9);
        const Arr<double> target = rand_arr({4, 6}, rng);
        auto loss = [&](bool back) {
            G g;
            auto l = g.mse(g.mha(g.param(&ps.value(q), &ps.grad(q)), g.param(&ps.value(k), &ps.grad(k)),
                                 g.param(&ps.value(v), &ps.grad(v)), 2),
                           g.constant(target));
            if (back) g.backward(l);
            return g.val(l).v[0];
        };
        gradcheck_elementwise(ps, loss, 1e-6);
    }

    TEST_CASE("conv3x3 gradcheck, stride 1 and 2") {
        for (int stride : {1, 2}) {
            Rng rng(4 + stride);
            ParamStore<double> ps;
            const int x = ps.add("x", {2, 3, 4, 4});
            const int w = ps.add("w", {5, 3, 3, 3});
            const int b = ps.add("b", {5});
            for (int i : {x, w, b}) init_normal(ps.value(i), rng, 0.5);
            const Arr<double> target = rand_arr({2, 5, 4 / stride, 4 / stride}, rng);
            auto loss = [&](bool back) {
                G g;
                auto l = g.mse(g.conv3x3(g.param(&ps.value(x), &ps.grad(x)),
                                         g.param(&ps.value(w), &ps.grad(w)),
                                         g.param(&ps.value(b), &ps.grad(b)), stride),
                               g.constant(target));
                if (back) g.backward(l);
                return g.val(l).v[0];
            };
            gradcheck_elementwise(ps, loss, 1e-6);
        }
    }

    TEST_CASE("norms, upsample, bias, concat, tokens gradcheck") {
        Rng rng(6);
        ParamStore<double> ps;
        const int x = ps.add("x", {2, 4, 2, 2});
        const int gm = ps.add("gamma", {4});
        const int bt = ps.add("beta", {4});
        const int cb = ps.add("cbias", {4});
        init_normal(ps.value(x), rng, 1.0);
        init_normal(ps.value(gm), rng, 0.3);
        for (auto& v : ps.value(gm).v) v += 1.0;
        init_normal(ps.value(bt), rng, 0.3);
        init_normal(ps.value(cb), rng, 0.3);
        const Arr<double> target = rand_arr({2 * 4 * 4, 8}, rng);
        auto loss = [&](bool back) {
            G g;
            auto ix = g.param(&ps.value(x), &ps.grad(x));
            auto h = g.group_norm(ix, g.param(&ps.value(gm), &ps.grad(gm)),
                                  g.param(&ps.value(bt), &ps.grad(bt)), 2);
            h = g.add_channel_bias(h, g.param(&ps.value(cb), &ps.grad(cb)));
            h = g.upsample2x(h);                      // [2,4,4,4]
            h = g.concat_ch(h, g.upsample2x(ix));     // [2,8,4,4]
            auto tok = g.to_tokens(h);                // [32, 8]
            auto l = g.mse(tok, g.constant(target));
            if (back) g.backward(l);
            return g.val(l).v[0];
        };
        gradcheck_elementwise(ps, loss, 1e-6);
    }

    TEST_CASE("layer_norm + rows ops gradcheck") {
        Rng rng(7);
        ParamStore<double> ps;
        const int x = ps.add("x", {6, 5});
        const int gm = ps.add("gamma", {5});
        const int bt = ps.add("beta", {5});
        init_normal(ps.value(x), rng, 1.2);
        init_ones(ps.value(gm));
        init_normal(ps.value(bt), rng, 0.2);
        const Arr<double> target = rand_arr({6, 5}, rng);
        auto loss = [&](bool back) {
            G g;
            auto ix = g.param(&ps.value(x), &ps.grad(x));
            auto h = g.layer_norm(ix, g.param(&ps.value(gm), &ps.grad(gm)),
                                  g.param(&ps.value(bt), &ps.grad(bt)));
            auto top = g.slice_rows(h, 0, 3);
            auto bot = g.slice_rows(h, 3, 6);
            auto l = g.mse(g.concat_rows({bot, top}), g.constant(target));
            if (back) g.backward(l);
            return g.val(l).v[0];
        };
        gradcheck_elementwise(ps, loss, 1e-6);
    }

    TEST_CASE("from_tokens inverts to_tokens") {
        Rng rng(8);
        const Arr<double> x = rand_arr({3, 4, 2, 5}, rng);
        G g;
        auto ix = g.constant(x);
        auto back = g.from_tokens(g.to_tokens(ix), 3, 4, 2, 5);
        CHECK(g.val(back).v == x.v);
    }
}

TEST_SUITE("attention_ops") {
    TEST_CASE("multiview attention matches the joint-softmax loop oracle") {
        Rng rng(10);
        for (int trial = 0; trial < 25; ++trial) {
            const int n = 1 + static_cast<int>(rng.uniform_index(3));
            const int T = 1 + static_cast<int>(rng.uniform_index(4));
            const int heads = trial % 2 == 0 ? 1 : 2;
            const int C = heads * (1 + static_cast<int>(rng.uniform_index(4)));

            ParamStore<double> ps;
            AttnProj<double> proj;
            proj.heads = heads;
            G g;
            auto mk = [&](const char* nm, std::vector<int> shp, double sc) {
                const int i = ps.add(nm, std::move(shp));
                init_normal(ps.value(i), rng, sc);
                return g.param(&ps.value(i), &ps.grad(i));
            };
            proj.wq = mk("wq", {C, C}, 0.7);
            proj.bq = mk("bq", {C}, 0.3);
            proj.wk = mk("wk", {C, C}, 0.7);
            proj.bk = mk("bk", {C}, 0.3);
            proj.wv = mk("wv", {C, C}, 0.7);
            proj.bv = mk("bv", {C}, 0.3);

            std::vector<G::Id> views;
            std::vector<Arr<double>> view_vals;
            for (int i = 0; i < n; ++i) {
                view_vals.push_back(rand_arr({T, C}, rng));
                views.push_back(g.constant(view_vals.back()));
            }
            const auto outs = multiview_attention(g, views, proj);

            // Oracle: project per view, concat K/V, per-head loop attention.
            oracle::Mat k_cat, v_cat;
            std::vector<oracle::Mat> qs;
            for (int i = 0; i < n; ++i) {
                const auto zi = to_mat(view_vals[static_cast<size_t>(i)]);
                qs.push_back(project(zi, ps.value(0), ps.value(1)));
                const auto ki = project(zi, ps.value(2), ps.value(3));
                const auto vi = project(zi, ps.value(4), ps.value(5));
                k_cat.insert(k_cat.end(), ki.begin(), ki.end());
                v_cat.insert(v_cat.end(), vi.begin(), vi.end());
            }
            for (int i = 0; i < n; ++i) {
                const auto expect = oracle::mha_reference(qs[static_cast<size_t>(i)], k_cat, v_cat, heads);
                const auto& got = g.val(outs[static_cast<size_t>(i)]);
                for (int r = 0; r < T; ++r)
                    for (int c = 0; c < C; ++c)
                        CHECK(rel_err(got.v[static_cast<size_t>(r * C + c)],
                                      expect[static_cast<size_t>(r)][static_cast<size_t>(c)]) < 1e-6);
            }
        }
    }

    TEST_CASE("n=1 multiview attention is standard self-attention; const V collapses") {
        Rng rng(11);
        const int T = 3, C = 4;
        ParamStore<double> ps;
        G g;
        AttnProj<double> proj;
        proj.heads = 1;
        auto mk = [&](const char* nm, std::vector<int> shp, double sc) {
            const int i = ps.add(nm, std::move(shp));
            init_normal(ps.value(i), rng, sc);
            return g.param(&ps.value(i), &ps.grad(i));
        };
        proj.wq = mk("wq", {C, C}, 0.5);
        proj.bq = mk("bq", {C}, 0.1);
        proj.wk = mk("wk", {C, C}, 0.5);
        proj.bk = mk("bk", {C}, 0.1);
        // Zero value projection with constant bias c: every V row equals c.
        proj.wv = g.constant(Arr<double>({C, C}));
        Arr<double> cvec({C});
        for (int i = 0; i < C; ++i) cvec.v[static_cast<size_t>(i)] = 0.3 * (i + 1);
        proj.bv = g.constant(cvec);

        const Arr<double> z = rand_arr({T, C}, rng);
        const auto outs = multiview_attention(g, {g.constant(z)}, proj);
        REQUIRE(outs.size() == 1);
        for (int r = 0; r < T; ++r)
            for (int c = 0; c < C; ++c)
                CHECK(g.val(outs[0]).v[static_cast<size_t>(r * C + c)] ==
                      doctest::Approx(cvec.v[static_cast<size_t>(c)]).epsilon(1e-9));

        // Ragged shapes are rejected.
        CHECK_THROWS_AS(multiview_attention(g, {g.constant(rand_arr({3, 4}, rng)), g.constant(rand_arr({2, 4}, rng))}, proj),
                        InvalidArgumentError);
    }

    TEST_CASE("reference cross-attention: zero V, single token, loop oracle") {
        Rng rng(12);
        const int Tq = 4, Tr = 3, C = 4;
        ParamStore<double> ps;
        G g;
        AttnProj<double> proj;
        proj.heads = 2;
        auto mk = [&](const char* nm, std::vector<int> shp, double sc) {
            const int i = ps.add(nm, std::move(shp));
            init_normal(ps.value(i), rng, sc);
            return g.param(&ps.value(i), &ps.grad(i));
        };
        proj.wq = mk("wq", {C, C}, 0.6);
        proj.bq = mk("bq", {C}, 0.2);
        proj.wk = mk("wk", {C, C}, 0.6);
        proj.bk = mk("bk", {C}, 0.2);
        proj.wv = mk("wv", {C, C}, 0.6);
        proj.bv = mk("bv", {C}, 0.2);

        const Arr<double> q = rand_arr({Tq, C}, rng);
        const Arr<double> ref = rand_arr({Tr, C}, rng);
        const auto out = reference_cross_attention(g, g.constant(q), g.constant(ref), proj);
        const auto oq = project(to_mat(q), ps.value(0), ps.value(1));
        const auto ok = project(to_mat(ref), ps.value(2), ps.value(3));
        const auto ov = project(to_mat(ref), ps.value(4), ps.value(5));
        const auto expect = oracle::mha_reference(oq, ok, ov, 2);
        for (int r = 0; r < Tq; ++r)
            for (int c = 0; c < C; ++c)
                CHECK(rel_err(g.val(out).v[static_cast<size_t>(r * C + c)],
                              expect[static_cast<size_t>(r)][static_cast<size_t>(c)]) < 1e-6);

        // All-zero V projection -> zero output.
        AttnProj<double> zp = proj;
        zp.wv = g.constant(Arr<double>({C, C}));
        zp.bv = g.constant(Arr<double>({C}));
        const auto zout = reference_cross_attention(g, g.constant(q), g.constant(ref), zp);
        for (double v : g.val(zout).v) CHECK(v == 0.0);

        // Single reference token: every query returns that token's V row.
        const Arr<double> ref1 = rand_arr({1, C}, rng);
        const auto o1 = reference_cross_attention(g, g.constant(q), g.constant(ref1), proj);
        const auto v1 = project(to_mat(ref1), ps.value(4), ps.value(5));
        for (int r = 0; r < Tq; ++r)
            for (int c = 0; c < C; ++c)
                CHECK(g.val(o1).v[static_cast<size_t>(r * C + c)] ==
                      doctest::Approx(v1[0][static_cast<size_t>(c)]).epsilon(1e-9));

        // Width mismatch (wrong resolution level) is rejected.
        CHECK_THROWS_AS(reference_cross_attention(g, g.constant(rand_arr({2, 6}, rng)),
                                                  g.constant(rand_arr({2, 4}, rng)), proj),
                        InvalidArgumentError);
    }

    TEST_CASE("mcaa_inject is an exact elementwise sum with shape checking") {
        Rng rng(13);
        G g;
        const Arr<double> a = rand_arr({5, 3}, rng);
        const Arr<double> b = rand_arr({5, 3}, rng);
        const auto out = mcaa_inject(g, g.constant(a), g.constant(b));
        for (size_t i = 0; i < a.v.size(); ++i) CHECK(g.val(out).v[i] == a.v[i] + b.v[i]);

        const auto zero = g.constant(Arr<double>({5, 3}));
        CHECK(g.val(mcaa_inject(g, g.constant(a), zero)).v == a.v);
        CHECK(g.val(mcaa_inject(g, zero, g.constant(b))).v == b.v);
        CHECK_THROWS_AS(mcaa_inject(g, g.constant(a), g.constant(rand_arr({3, 5}, rng))),
                        InvalidArgumentError);
    }

    TEST_CASE("material embedding attention: oracle match and const-V row sums") {
        Rng rng(14);
        const int T = 5, C = 4, E = 16, W = 6;
        ParamStore<double> ps;
        G g;
        AttnProj<double> proj;
        proj.heads = 2;
        auto mk = [&](const char* nm, std::vector<int> shp, double sc) {
            const int i = ps.add(nm, std::move(shp));
            init_normal(ps.value(i), rng, sc);
            return g.param(&ps.value(i), &ps.grad(i));
        };
        proj.wq = mk("wq", {C, C}, 0.5);
        proj.bq = mk("bq", {C}, 0.1);
        proj.wk = mk("wk", {W, C}, 0.5);
        proj.bk = mk("bk", {C}, 0.1);
        proj.wv = mk("wv", {W, C}, 0.5);
        proj.bv = mk("bv", {C}, 0.1);

        const Arr<double> tokens = rand_arr({T, C}, rng);
        const Arr<double> emb = rand_arr({E, W}, rng);
        const auto out = material_embedding_attention(g, g.constant(tokens), g.constant(emb), proj);
        const auto expect = oracle::mha_reference(project(to_mat(tokens), ps.value(0), ps.value(1)),
                                                  project(to_mat(emb), ps.value(2), ps.value(3)),
                                                  project(to_mat(emb), ps.value(4), ps.value(5)), 2);
        for (int r = 0; r < T; ++r)
            for (int c = 0; c < C; ++c)
                CHECK(rel_err(g.val(out).v[static_cast<size_t>(r * C + c)],
                              expect[static_cast<size_t>(r)][static_cast<size_t>(c)]) < 1e-6);

        // Constant V rows: softmax weights over the 16 keys must sum to 1, so
        // the output equals the constant for every query.
        AttnProj<double> cp = proj;
        cp.wv = g.constant(Arr<double>({W, C}));
        Arr<double> cvec({C});
        for (int i = 0; i < C; ++i) cvec.v[static_cast<size_t>(i)] = 1.5 - 0.4 * i;
        cp.bv = g.constant(cvec);
        const auto cout_ = material_embedding_attention(g, g.constant(tokens), g.constant(emb), cp);
        for (int r = 0; r < T; ++r)
            for (int c = 0; c < C; ++c)
                CHECK(g.val(cout_).v[static_cast<size_t>(r * C + c)] ==
                      doctest::Approx(cvec.v[static_cast<size_t>(c)]).epsilon(1e-6));
    }
}

namespace {

DenoiserConfig tiny_cfg(int n_views = 2) {
    DenoiserConfig cfg;
    cfg.n_views = n_views;
    cfg.resolution = 8;
    cfg.base_width = 16;
    cfg.head_dim = 16;
    cfg.emb_tokens = 16;
    cfg.emb_width = 16;
    cfg.time_dim = 16;
    cfg.groups = 8;
    return cfg;
}

struct TinyInputs {
    Arr<double> z, geom, ref;
};

TinyInputs tiny_inputs(const DenoiserConfig& cfg, Rng& rng) {
    TinyInputs in;
    in.z = rand_arr({2 * cfg.n_views, 3, cfg.resolution, cfg.resolution}, rng, 0.5);
    in.geom = rand_arr({cfg.n_views, 6, cfg.resolution, cfg.resolution}, rng, 0.5);
    in.ref = rand_arr({1, 3, cfg.resolution, cfg.resolution}, rng, 0.5);
    return in;
}

Arr<double> run_forward(Denoiser<double>& model, const TinyInputs& in, int t) {
    Graph<double> g;
    const auto ref = model.encode_reference(g, in.ref);
    const auto out = model.forward(g, in.z, t, in.geom, ref);
    return g.val(out);
}

}  // namespace

TEST_SUITE("denoiser") {
    TEST_CASE("output shape equals input shape and forward is deterministic") {
        const DenoiserConfig cfg = tiny_cfg(3);
        Denoiser<double> model(cfg, 77);
        Rng rng(20);
        const TinyInputs in = tiny_inputs(cfg, rng);
        const Arr<double> a = run_forward(model, in, 5);
        const Arr<double> b = run_forward(model, in, 5);
        CHECK(a.shape == in.z.shape);
        CHECK(a.v == b.v);

        Denoiser<double> twin(cfg, 77);
        for (int i = 0; i < model.params.count(); ++i)
            CHECK(model.params.value(i).v == twin.params.value(i).v);
    }

    TEST_CASE("view-permutation equivariance of the full forward pass") {
        const DenoiserConfig cfg = tiny_cfg(3);
        Denoiser<double> model(cfg, 31);
        Rng rng(21);
        const TinyInputs in = tiny_inputs(cfg, rng);
        const Arr<double> base = run_forward(model, in, 9);

        const int perm[3] = {2, 0, 1};
        TinyInputs pin = in;
        const int64_t img = static_cast<int64_t>(3) * cfg.resolution * cfg.resolution;
        const int64_t gimg = static_cast<int64_t>(6) * cfg.resolution * cfg.resolution;
        for (int l = 0; l < 2; ++l)
            for (int v = 0; v < 3; ++v)
                std::copy_n(in.z.data() + (static_cast<int64_t>(l) * 3 + perm[v]) * img, img,
                            pin.z.data() + (static_cast<int64_t>(l) * 3 + v) * img);
        for (int v = 0; v < 3; ++v)
            std::copy_n(in.geom.data() + static_cast<int64_t>(perm[v]) * gimg, gimg,
                        pin.geom.data() + static_cast<int64_t>(v) * gimg);

        const Arr<double> permuted = run_forward(model, pin, 9);
        double max_err = 0.0;
        for (int l = 0; l < 2; ++l)
            for (int v = 0; v < 3; ++v)
                for (int64_t i = 0; i < img; ++i) {
                    const double want = base.v[static_cast<size_t>((static_cast<int64_t>(l) * 3 + perm[v]) * img + i)];
                    const double got = permuted.v[static_cast<size_t>((static_cast<int64_t>(l) * 3 + v) * img + i)];
                    max_err = std::max(max_err, std::abs(want - got));
                }
        CHECK(max_err < 1e-5);
    }

    TEST_CASE("MCAA on/off have identical trainable parameter counts") {
        DenoiserConfig on = tiny_cfg();
        DenoiserConfig off = tiny_cfg();
        off.mcaa = false;
        Denoiser<double> a(on, 1), b(off, 1);
        CHECK(a.params.total_size() == b.params.total_size());
        CHECK(a.params.count() == b.params.count());
    }

    TEST_CASE("lane isolation: the MR embedding cannot reach albedo output") {
        const DenoiserConfig cfg = tiny_cfg(2);
        Denoiser<double> model(cfg, 55);
        // Give the (zero-initialized) attention output projections real values
        // so embedding attention actually propagates.
        Rng wr(56);
        for (int i = 0; i < model.params.count(); ++i) {
            const auto& name = model.params.entry(i).name;
            if (name.find(".wo") != std::string::npos) init_normal(model.params.value(i), wr, 0.2);
        }
        Rng rng(57);
        const TinyInputs in = tiny_inputs(cfg, rng);
        const Arr<double> base = run_forward(model, in, 3);

        int emb_mr = -1, emb_albedo = -1;
        for (int i = 0; i < model.params.count(); ++i) {
            if (model.params.entry(i).name == "emb.mr") emb_mr = i;
            if (model.params.entry(i).name == "emb.albedo") emb_albedo = i;
        }
        REQUIRE(emb_mr >= 0);
        REQUIRE(emb_albedo >= 0);
        for (auto& v : model.params.value(emb_mr).v) v += 0.37;
        const Arr<double> bumped = run_forward(model, in, 3);

        const int64_t lane_sz = base.size() / 2;
        bool mr_changed = false;
        for (int64_t i = 0; i < lane_sz; ++i) {
            CHECK(bumped.v[static_cast<size_t>(i)] == base.v[static_cast<size_t>(i)]);  // albedo lane bitwise equal
            mr_changed = mr_changed || bumped.v[static_cast<size_t>(lane_sz + i)] != base.v[static_cast<size_t>(lane_sz + i)];
        }
        CHECK(mr_changed);

        // And symmetrically: the albedo embedding does not touch the MR lane
        // except through MCAA (which reads albedo attention, not embeddings);
        // check the albedo embedding does affect the albedo lane.
        for (auto& v : model.params.value(emb_albedo).v) v += 0.37;
        const Arr<double> bumped2 = run_forward(model, in, 3);
        bool albedo_changed = false;
        for (int64_t i = 0; i < lane_sz; ++i)
            albedo_changed = albedo_changed || bumped2.v[static_cast<size_t>(i)] != bumped.v[static_cast<size_t>(i)];
        CHECK(albedo_changed);
    }

    TEST_CASE("full-forward directional gradient check (Eq.2 loss, float64)") {
        const DenoiserConfig cfg = tiny_cfg(2);
        Denoiser<double> model(cfg, 91);
        Rng rng(92);
        const TinyInputs in = tiny_inputs(cfg, rng);
        Arr<double> ref2 = rand_arr({1, 3, cfg.resolution, cfg.resolution}, rng, 0.5);
        const Arr<double> eps_true = rand_arr(in.z.shape, rng);
        const double lambda = 0.1;

        auto loss_fn = [&](bool back) {
            Graph<double> g;
            const auto r1 = model.encode_reference(g, in.ref);
            const auto r2 = model.encode_reference(g, ref2);
            const auto e1 = model.forward(g, in.z, 4, in.geom, r1);
            const auto e2 = model.forward(g, in.z, 4, in.geom, r2);
            const auto l_pbr = g.mse(e1, g.constant(eps_true));
            const auto l_cons = g.mse(e1, e2);
            const auto l = g.wsum2(l_pbr, 1.0 - lambda, l_cons, lambda);
            if (back) g.backward(l);
            return g.val(l).v[0];
        };

        model.params.zero_grads();
        loss_fn(true);
        std::vector<std::vector<double>> analytic;
        for (int i = 0; i < model.params.count(); ++i) analytic.push_back(model.params.grad(i).v);

        Rng dir_rng(93);
        for (int trial = 0; trial < 5; ++trial) {
            // Random unit direction over the whole parameter vector.
            std::vector<std::vector<double>> dir;
            double norm2 = 0.0;
            for (int i = 0; i < model.params.count(); ++i) {
                dir.emplace_back(model.params.value(i).v.size());
                for (auto& d : dir.back()) {
                    d = dir_rng.gaussian();
                    norm2 += d * d;
                }
            }
            const double inv = 1.0 / std::sqrt(norm2);
            double analytic_dir = 0.0;
            for (int i = 0; i < model.params.count(); ++i)
                for (size_t j = 0; j < dir[static_cast<size_t>(i)].size(); ++j) {
                    dir[static_cast<size_t>(i)][j] *= inv;
                    analytic_dir += dir[static_cast<size_t>(i)][j] * analytic[static_cast<size_t>(i)][j];
                }

            const double h = 1e-4;
            auto shift = [&](double s) {
                for (int i = 0; i < model.params.count(); ++i)
                    for (size_t j = 0; j < dir[static_cast<size_t>(i)].size(); ++j)
                        model.params.value(i).v[j] += s * dir[static_cast<size_t>(i)][j];
            };
            shift(h);
            const double lp = loss_fn(false);
            shift(-2.0 * h);
            const double lm = loss_fn(false);
            shift(h);
            const double fd = (lp - lm) / (2.0 * h);
            CHECK(rel_err(fd, analytic_dir) < 1e-4);
        }
    }
}
