// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "matmvp/core/parallel.hpp"
#include "matmvp/nn/array.hpp"

namespace matmvp::nn {

namespace detail {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using Map = Eigen::Map<Mat<S>>;
template <class S>
using CMap = Eigen::Map<const Mat<S>>;

// Row-chunked GEMMs; each output row is produced by exactly one worker, so
// results are bitwise deterministic for a fixed worker count.
template <class S>
void gemm_nn(const S* a, const S* b, S* c, int m, int k, int n, bool acc) {
    CMap<S> A(a, m, k), B(b, k, n);
    Map<S> C(c, m, n);
    const int64_t flops = static_cast<int64_t>(m) * k * n;
    if (flops < (1 << 18)) {
        if (acc)
            C.noalias() += A * B;
        else
            C.noalias() = A * B;
        return;
    }
    parallel_for(m, [&](int64_t r0, int64_t r1) {
        const auto rows = static_cast<int>(r1 - r0);
        if (acc)
            C.middleRows(static_cast<int>(r0), rows).noalias() += A.middleRows(static_cast<int>(r0), rows) * B;
        else
            C.middleRows(static_cast<int>(r0), rows).noalias() = A.middleRows(static_cast<int>(r0), rows) * B;
    });
}

// C[m,n] = A[m,k] * B[n,k]^T
template <class S>
void gemm_nt(const S* a, const S* b, S* c, int m, int k, int n, bool acc) {
    CMap<S> A(a, m, k), B(b, n, k);
    Map<S> C(c, m, n);
    const int64_t flops = static_cast<int64_t>(m) * k * n;
    if (flops < (1 << 18)) {
        if (acc)
            C.noalias() += A * B.transpose();
        else
            C.noalias() = A * B.transpose();
        return;
    }
    parallel_for(m, [&](int64_t r0, int64_t r1) {
        const auto rows = static_cast<int>(r1 - r0);
        if (acc)
            C.middleRows(static_cast<int>(r0), rows).noalias() +=
                A.middleRows(static_cast<int>(r0), rows) * B.transpose();
        else
            C.middleRows(static_cast<int>(r0), rows).noalias() =
                A.middleRows(static_cast<int>(r0), rows) * B.transpose();
    });
}

// C[k,n] = A[m,k]^T * B[m,n]
template <class S>
void gemm_tn(const S* a, const S* b, S* c, int m, int k, int n, bool acc) {
    CMap<S> A(a, m, k), B(b, m, n);
    Map<S> C(c, k, n);
    const int64_t flops = static_cast<int64_t>(m) * k * n;
    if (flops < (1 << 18)) {
        if (acc)
            C.noalias() += A.transpose() * B;
        else
            C.noalias() = A.transpose() * B;
        return;
    }
    parallel_for(k, [&](int64_t r0, int64_t r1) {
        const auto rows = static_cast<int>(r1 - r0);
        if (acc)
            C.middleRows(static_cast<int>(r0), rows).noalias() +=
                A.middleCols(static_cast<int>(r0), rows).transpose() * B;
        else
            C.middleRows(static_cast<int>(r0), rows).noalias() =
                A.middleCols(static_cast<int>(r0), rows).transpose() * B;
    });
}

template <class S>
void im2col_3x3(const S* x, int C, int H, int W, int stride, S* cols) {
    // cols: [C*9, Ho*Wo], pad 1.
    const int Ho = H / stride, Wo = W / stride;
    for (int ci = 0; ci < C; ++ci) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                S* dst = cols + (static_cast<int64_t>(ci) * 9 + ky * 3 + kx) * Ho * Wo;
                const S* src = x + static_cast<int64_t>(ci) * H * W;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride + ky - 1;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride + kx - 1;
                        dst[oy * Wo + ox] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                                ? src[iy * W + ix]
                                                : S(0);
                    }
                }
            }
        }
    }
}

template <class S>
void col2im_3x3(const S* cols, int C, int H, int W, int stride, S* x_grad) {
    const int Ho = H / stride, Wo = W / stride;
    for (int ci = 0; ci < C; ++ci) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const S* src = cols + (static_cast<int64_t>(ci) * 9 + ky * 3 + kx) * Ho * Wo;
                S* dst = x_grad + static_cast<int64_t>(ci) * H * W;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride + kx - 1;
                        if (ix < 0 || ix >= W) continue;
                        dst[iy * W + ix] += src[oy * Wo + ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// Reverse-mode tape. Nodes are appended in topological order; backward walks
// the tape in reverse. Leaf parameters accumulate their gradients into
// external arrays so several forward passes in one graph share weights.
template <class S>
class Graph {
public:
    using Id = int;

    Id constant(Arr<S> a) {
        Node n;
        n.val = std::move(a);
        n.needs_grad = false;
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size()) - 1;
    }

    Id param(Arr<S>* value, Arr<S>* grad_sink) {
        require(value && grad_sink && value->shape == grad_sink->shape, "graph: bad param binding");
        Node n;
        n.val = *value;  // snapshot
        n.needs_grad = true;
        n.ext_grad = grad_sink;
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size()) - 1;
    }

    const Arr<S>& val(Id id) const { return nodes_[static_cast<size_t>(id)].val; }
    const Arr<S>& grad(Id id) const { return nodes_[static_cast<size_t>(id)].grad; }
    size_t node_count() const { return nodes_.size(); }

    // ---- elementwise ----

    Id add(Id a, Id b) {
        check_same(a, b, "add");
        Arr<S> out = nodes_[static_cast<size_t>(a)].val;
        const Arr<S>& bv = nodes_[static_cast<size_t>(b)].val;
        for (int64_t i = 0; i < out.size(); ++i) out.v[static_cast<size_t>(i)] += bv.v[static_cast<size_t>(i)];
        return make_node(std::move(out), {a, b}, [this, a, b](const Arr<S>& g) {
            add_into(a, g.data(), g.size());
            add_into(b, g.data(), g.size());
        });
    }

    Id sub(Id a, Id b) {
        check_same(a, b, "sub");
        Arr<S> out = nodes_[static_cast<size_t>(a)].val;
        const Arr<S>& bv = nodes_[static_cast<size_t>(b)].val;
        for (int64_t i = 0; i < out.size(); ++i) out.v[static_cast<size_t>(i)] -= bv.v[static_cast<size_t>(i)];
        return make_node(std::move(out), {a, b}, [this, a, b](const Arr<S>& g) {
            add_into(a, g.data(), g.size());
            sub_into(b, g.data(), g.size());
        });
    }

    Id scale(Id a, S c) {
        Arr<S> out = nodes_[static_cast<size_t>(a)].val;
        for (auto& x : out.v) x *= c;
        return make_node(std::move(out), {a}, [this, a, c](const Arr<S>& g) {
            if (!wants(a)) return;
            Arr<S>& ga = grad_of(a);
            for (int64_t i = 0; i < g.size(); ++i) ga.v[static_cast<size_t>(i)] += c * g.v[static_cast<size_t>(i)];
        });
    }

    Id silu(Id a) {
        Arr<S> out = nodes_[static_cast<size_t>(a)].val;
        for (auto& x : out.v) {
            const S s = S(1) / (S(1) + std::exp(-x));
            x = x * s;
        }
        return make_node(std::move(out), {a}, [this, a](const Arr<S>& g) {
            if (!wants(a)) return;
            const Arr<S>& xv = nodes_[static_cast<size_t>(a)].val;
            Arr<S>& ga = grad_of(a);
            for (int64_t i = 0; i < g.size(); ++i) {
                const S x = xv.v[static_cast<size_t>(i)];
                const S s = S(1) / (S(1) + std::exp(-x));
                ga.v[static_cast<size_t>(i)] += g.v[static_cast<size_t>(i)] * s * (S(1) + x * (S(1) - s));
            }
        });
    }

    // ---- linear algebra ----

    // x [N,K] * w [K,M] (+ b [M] broadcast over rows)
    Id linear(Id x, Id w, Id b = -1) {
        const auto& xv = nodes_[static_cast<size_t>(x)].val;
        const auto& wv = nodes_[static_cast<size_t>(w)].val;
        require(xv.ndim() == 2 && wv.ndim() == 2 && xv.dim(1) == wv.dim(0), "linear: shape mismatch");
        const int N = xv.dim(0), K = xv.dim(1), M = wv.dim(1);
        Arr<S> out({N, M});
        detail::gemm_nn(xv.data(), wv.data(), out.data(), N, K, M, false);
        if (b >= 0) {
            const auto& bv = nodes_[static_cast<size_t>(b)].val;
            require(bv.size() == M, "linear: bias size mismatch");
            for (int r = 0; r < N; ++r)
                for (int m = 0; m < M; ++m) out.v[static_cast<size_t>(r) * M + m] += bv.v[static_cast<size_t>(m)];
        }
        std::vector<Id> parents = b >= 0 ? std::vector<Id>{x, w, b} : std::vector<Id>{x, w};
        return make_node(std::move(out), parents, [this, x, w, b, N, K, M](const Arr<S>& g) {
            const auto& xv = nodes_[static_cast<size_t>(x)].val;
            const auto& wv = nodes_[static_cast<size_t>(w)].val;
            if (wants(x)) detail::gemm_nt(g.data(), wv.data(), grad_of(x).data(), N, M, K, true);
            if (wants(w)) detail::gemm_tn(xv.data(), g.data(), grad_of(w).data(), N, K, M, true);
            if (b >= 0 && wants(b)) {
                Arr<S>& gb = grad_of(b);
                for (int r = 0; r < N; ++r)
                    for (int m = 0; m < M; ++m) gb.v[static_cast<size_t>(m)] += g.v[static_cast<size_t>(r) * M + m];
            }
        });
    }

    // Fused multi-head attention: softmax(q k^T / sqrt(d)) v per head.
    // q [Nq,C], k/v [Nk,C], heads | C. Softmax matrices are cached per head.
    Id mha(Id q, Id k, Id v, int heads) {
        const auto& qv = nodes_[static_cast<size_t>(q)].val;
        const auto& kv = nodes_[static_cast<size_t>(k)].val;
        const auto& vv = nodes_[static_cast<size_t>(v)].val;
        require(qv.ndim() == 2 && kv.ndim() == 2 && vv.ndim() == 2, "mha: tokens must be 2-d");
        require(qv.dim(1) == kv.dim(1) && kv.shape == vv.shape, "mha: width mismatch");
        require(heads >= 1 && qv.dim(1) % heads == 0, "mha: heads must divide width");
        const int Nq = qv.dim(0), Nk = kv.dim(0), C = qv.dim(1), d = C / heads;
        const S scale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(d)));

        auto probs = std::make_shared<std::vector<Arr<S>>>();
        probs->reserve(static_cast<size_t>(heads));
        Arr<S> out({Nq, C});

        Arr<S> qh({Nq, d}), kh({Nk, d}), vh({Nk, d});
        for (int h = 0; h < heads; ++h) {
            copy_head(qv, qh, h, d);
            copy_head(kv, kh, h, d);
            copy_head(vv, vh, h, d);
            Arr<S> p({Nq, Nk});
            detail::gemm_nt(qh.data(), kh.data(), p.data(), Nq, d, Nk, false);
            softmax_rows_scaled(p, scale);
            Arr<S> oh({Nq, d});
            detail::gemm_nn(p.data(), vh.data(), oh.data(), Nq, Nk, d, false);
            paste_head(oh, out, h, d);
            probs->push_back(std::move(p));
        }

        return make_node(std::move(out), {q, k, v},
                         [this, q, k, v, heads, Nq, Nk, C, d, scale, probs](const Arr<S>& g) {
            const auto& qv = nodes_[static_cast<size_t>(q)].val;
            const auto& kv = nodes_[static_cast<size_t>(k)].val;
            const auto& vv = nodes_[static_cast<size_t>(v)].val;
            Arr<S> qh({Nq, d}), kh({Nk, d}), vh({Nk, d}), goh({Nq, d});
            Arr<S> dp({Nq, Nk}), dvh({Nk, d}), dqh({Nq, d}), dkh({Nk, d});
            for (int h = 0; h < heads; ++h) {
                copy_head(qv, qh, h, d);
                copy_head(kv, kh, h, d);
                copy_head(vv, vh, h, d);
                copy_head(g, goh, h, d);
                const Arr<S>& p = (*probs)[static_cast<size_t>(h)];
                // dV = P^T dO
                detail::gemm_tn(p.data(), goh.data(), dvh.data(), Nq, Nk, d, false);
                // dP = dO V^T
                detail::gemm_nt(goh.data(), vh.data(), dp.data(), Nq, d, Nk, false);
                // dS = P o (dP - rowsum(P o dP)); apply the 1/sqrt(d) scale.
                parallel_for(Nq, [&](int64_t r0, int64_t r1) {
                    for (int64_t r = r0; r < r1; ++r) {
                        const S* pr = p.data() + r * Nk;
                        S* dpr = dp.data() + r * Nk;
                        S dot = S(0);
                        for (int j = 0; j < Nk; ++j) dot += pr[j] * dpr[j];
                        for (int j = 0; j < Nk; ++j) dpr[j] = pr[j] * (dpr[j] - dot) * scale;
                    }
                });
                detail::gemm_nn(dp.data(), kh.data(), dqh.data(), Nq, Nk, d, false);
                detail::gemm_tn(dp.data(), qh.data(), dkh.data(), Nq, Nk, d, false);
                if (wants(q)) paste_head_add(dqh, grad_of(q), h, d);
                if (wants(k)) paste_head_add(dkh, grad_of(k), h, d);
                if (wants(v)) paste_head_add(dvh, grad_of(v), h, d);
            }
        });
    }

    // ---- convolutions / image ops ----

    // x [B,Ci,H,W], w [Co,Ci,3,3], b [Co]; pad 1, stride 1 or 2.
    Id conv3x3(Id x, Id w, Id b, int stride) {
        const auto& xv = nodes_[static_cast<size_t>(x)].val;
        const auto& wv = nodes_[static_cast<size_t>(w)].val;
        const auto& bv = nodes_[static_cast<size_t>(b)].val;
        require(xv.ndim() == 4 && wv.ndim() == 4 && wv.dim(2) == 3 && wv.dim(3) == 3,
                "conv3x3: expected [B,Ci,H,W] and [Co,Ci,3,3]");
        require(xv.dim(1) == wv.dim(1), "conv3x3: channel mismatch");
        require(stride == 1 || stride == 2, "conv3x3: stride must be 1 or 2");
        require(bv.size() == wv.dim(0), "conv3x3: bias mismatch");
        const int B = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const int Co = wv.dim(0), Ho = H / stride, Wo = W / stride;
        Arr<S> out({B, Co, Ho, Wo});

        parallel_for_each(B, [&](int64_t bi) {
            Arr<S> cols({Ci * 9, Ho * Wo});
            detail::im2col_3x3(xv.data() + bi * Ci * H * W, Ci, H, W, stride, cols.data());
            S* ob = out.data() + bi * Co * Ho * Wo;
            detail::gemm_nn(wv.data(), cols.data(), ob, Co, Ci * 9, Ho * Wo, false);
            for (int co = 0; co < Co; ++co) {
                const S bias = bv.v[static_cast<size_t>(co)];
                S* p = ob + static_cast<int64_t>(co) * Ho * Wo;
                for (int i = 0; i < Ho * Wo; ++i) p[i] += bias;
            }
        });

        return make_node(std::move(out), {x, w, b},
                         [this, x, w, b, B, Ci, H, W, Co, Ho, Wo, stride](const Arr<S>& g) {
            const auto& xv = nodes_[static_cast<size_t>(x)].val;
            const auto& wv = nodes_[static_cast<size_t>(w)].val;
            if (wants(x)) {
                Arr<S>& gx = grad_of(x);
                parallel_for_each(B, [&](int64_t bi) {
                    Arr<S> dcols({Ci * 9, Ho * Wo});
                    detail::gemm_tn(wv.data(), g.data() + bi * Co * Ho * Wo, dcols.data(), Co,
                                    Ci * 9, Ho * Wo, false);
                    detail::col2im_3x3(dcols.data(), Ci, H, W, stride, gx.data() + bi * Ci * H * W);
                });
            }
            if (wants(w) || wants(b)) {
                // Fixed per-worker partials reduced in worker order keep the
                // accumulation deterministic for a fixed worker count.
                const int workers = std::min<int>(num_workers(), B);
                const int chunk = (B + workers - 1) / workers;
                std::vector<Arr<S>> wparts(static_cast<size_t>(workers), Arr<S>({Co, Ci * 9}));
                std::vector<Arr<S>> bparts(static_cast<size_t>(workers), Arr<S>({Co}));
                parallel_for_each(workers, [&](int64_t wk) {
                    Arr<S> cols({Ci * 9, Ho * Wo});
                    const int lo = static_cast<int>(wk) * chunk;
                    const int hi = std::min(B, lo + chunk);
                    for (int bi = lo; bi < hi; ++bi) {
                        detail::im2col_3x3(xv.data() + static_cast<int64_t>(bi) * Ci * H * W, Ci, H,
                                           W, stride, cols.data());
                        detail::gemm_nt(g.data() + static_cast<int64_t>(bi) * Co * Ho * Wo,
                                        cols.data(), wparts[static_cast<size_t>(wk)].data(), Co,
                                        Ho * Wo, Ci * 9, true);
                        for (int co = 0; co < Co; ++co) {
                            const S* gp = g.data() + (static_cast<int64_t>(bi) * Co + co) * Ho * Wo;
                            S acc = S(0);
                            for (int i = 0; i < Ho * Wo; ++i) acc += gp[i];
                            bparts[static_cast<size_t>(wk)].v[static_cast<size_t>(co)] += acc;
                        }
                    }
                });
                for (int wk = 0; wk < workers; ++wk) {
                    if (wants(w)) add_into(w, wparts[static_cast<size_t>(wk)].data(), wparts[static_cast<size_t>(wk)].size());
                    if (wants(b)) add_into(b, bparts[static_cast<size_t>(wk)].data(), bparts[static_cast<size_t>(wk)].size());
                }
            }
        });
    }

    Id upsample2x(Id x) {
        const auto& xv = nodes_[static_cast<size_t>(x)].val;
        require(xv.ndim() == 4, "upsample2x: expected [B,C,H,W]");
        const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        Arr<S> out({B, C, H * 2, W * 2});
        parallel_for_each(static_cast<int64_t>(B) * C, [&](int64_t bc) {
            const S* src = xv.data() + bc * H * W;
            S* dst = out.data() + bc * H * W * 4;
            for (int y = 0; y < 2 * H; ++y)
                for (int x2 = 0; x2 < 2 * W; ++x2) dst[y * 2 * W + x2] = src[(y / 2) * W + (x2 / 2)];
        });
        return make_node(std::move(out), {x}, [this, x, B, C, H, W](const Arr<S>& g) {
            if (!wants(x)) return;
            Arr<S>& gx = grad_of(x);
            parallel_for_each(static_cast<int64_t>(B) * C, [&](int64_t bc) {
                const S* gs = g.data() + bc * H * W * 4;
                S* gd = gx.data() + bc * H * W;
                for (int y = 0; y < 2 * H; ++y)
                    for (int x2 = 0; x2 < 2 * W; ++x2) gd[(y / 2) * W + (x2 / 2)] += gs[y * 2 * W + x2];
            });
        });
    }

    // ---- normalization ----

    Id group_norm(Id x, Id gamma, Id beta, int groups, S eps = S(1e-5)) {
        const auto& xv = nodes_[static_cast<size_t>(x)].val;
        require(xv.ndim() == 4, "group_norm: expected [B,C,H,W]");
        const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        require(C % groups == 0, "group_norm: groups must divide channels");
        const auto& gm = nodes_[static_cast<size_t>(gamma)].val;
        const auto& bt = nodes_[static_cast<size_t>(beta)].val;
        require(gm.size() == C && bt.size() == C, "group_norm: affine size mismatch");
        const int Cg = C / groups;
        const int64_t n = static_cast<int64_t>(Cg) * H * W;

        auto stats = std::make_shared<Arr<S>>(Arr<S>({B, groups, 2}));  // mean, inv-std
        Arr<S> out({B, C, H, W});
        parallel_for_each(static_cast<int64_t>(B) * groups, [&](int64_t bg) {
            const int64_t base = bg * n;
            const S* xs = xv.data() + base;
            S mean = S(0);
            for (int64_t i = 0; i < n; ++i) mean += xs[i];
            mean /= static_cast<S>(n);
            S var = S(0);
            for (int64_t i = 0; i < n; ++i) {
                const S dxi = xs[i] - mean;
                var += dxi * dxi;
            }
            var /= static_cast<S>(n);
            const S inv = S(1) / std::sqrt(var + eps);
            stats->v[static_cast<size_t>(bg) * 2] = mean;
            stats->v[static_cast<size_t>(bg) * 2 + 1] = inv;
            const int g0 = static_cast<int>(bg % groups) * Cg;
            S* os = out.data() + base;
            for (int c = 0; c < Cg; ++c) {
                const S ga = gm.v[static_cast<size_t>(g0 + c)];
                const S be = bt.v[static_cast<size_t>(g0 + c)];
                for (int i = 0; i < H * W; ++i) {
                    const int64_t idx = static_cast<int64_t>(c) * H * W + i;
                    os[idx] = (xs[idx] - mean) * inv * ga + be;
                }
            }
        });

        return make_node(std::move(out), {x, gamma, beta},
                         [this, x, gamma, beta, B, C, H, W, groups, Cg, n, stats](const Arr<S>& g) {
            const auto& xv = nodes_[static_cast<size_t>(x)].val;
            const auto& gm = nodes_[static_cast<size_t>(gamma)].val;
            // d(gamma)/d(beta) accumulate per channel over (b, h, w).
            if (wants(gamma) || wants(beta)) {
                Arr<S>& gg = grad_of(gamma);
                Arr<S>& gb = grad_of(beta);
                for (int b = 0; b < B; ++b)
                    for (int c = 0; c < C; ++c) {
                        const int64_t bg = static_cast<int64_t>(b) * groups + c / Cg;
                        const S mean = stats->v[static_cast<size_t>(bg) * 2];
                        const S inv = stats->v[static_cast<size_t>(bg) * 2 + 1];
                        const int64_t base = (static_cast<int64_t>(b) * C + c) * H * W;
                        S sg = S(0), sb = S(0);
                        for (int i = 0; i < H * W; ++i) {
                            const S xhat = (xv.v[static_cast<size_t>(base + i)] - mean) * inv;
                            sg += g.v[static_cast<size_t>(base + i)] * xhat;
                            sb += g.v[static_cast<size_t>(base + i)];
                        }
                        if (wants(gamma)) gg.v[static_cast<size_t>(c)] += sg;
                        if (wants(beta)) gb.v[static_cast<size_t>(c)] += sb;
                    }
            }
            if (!wants(x)) return;
            Arr<S>& gx = grad_of(x);
            parallel_for_each(static_cast<int64_t>(B) * groups, [&](int64_t bg) {
                const int64_t base = bg * n;
                const S mean = stats->v[static_cast<size_t>(bg) * 2];
                const S inv = stats->v[static_cast<size_t>(bg) * 2 + 1];
                const int g0 = static_cast<int>(bg % groups) * Cg;
                const S* xs = xv.data() + base;
                const S* gs = g.data() + base;
                // dxhat = g * gamma; dx = inv/n (n dxhat - sum(dxhat) - xhat sum(dxhat xhat))
                S sum_d = S(0), sum_dx = S(0);
                for (int c = 0; c < Cg; ++c) {
                    const S ga = gm.v[static_cast<size_t>(g0 + c)];
                    for (int i = 0; i < H * W; ++i) {
                        const int64_t idx = static_cast<int64_t>(c) * H * W + i;
                        const S dh = gs[idx] * ga;
                        sum_d += dh;
                        sum_dx += dh * (xs[idx] - mean) * inv;
                    }
                }
                S* gxs = gx.data() + base;
                for (int c = 0; c < Cg; ++c) {
                    const S ga = gm.v[static_cast<size_t>(g0 + c)];
                    for (int i = 0; i < H * W; ++i) {
                        const int64_t idx = static_cast<int64_t>(c) * H * W + i;
                        const S dh = gs[idx] * ga;
                        const S xhat = (xs[idx] - mean) * inv;
                        gxs[idx] += inv * (dh - (sum_d + xhat * sum_dx) / static_cast<S>(n));
                    }
                }
            });
        });
    }

    // Per-row layer norm over token width: x [N,C].
    Id layer_norm(Id x, Id gamma, Id beta, S eps = S(1e-5)) {
        const auto& xv = nodes_[static_cast<size_t>(x)].val;
        require(xv.ndim() == 2, "layer_norm: expected [N,C]");
        const int N = xv.dim(0), C = xv.dim(1);
        const auto& gm = nodes_[static_cast<size_t>(gamma)].val;
        const auto& bt = nodes_[static_cast<size_t>(beta)].val;
        require(gm.size() == C && bt.size() == C, "layer_norm: affine size mismatch");

        auto stats = std::make_shared<Arr<S>>(Arr<S>({N, 2}));
        Arr<S> out({N, C});
        parallel_for_each(N, [&](int64_t r) {
            const S* xs = xv.data() + r * C;
            S mean = S(0);
            for (int c = 0; c < C; ++c) mean += xs[c];
            mean /= static_cast<S>(C);
            S var = S(0);
            for (int c = 0; c < C; ++c) {
                const S d = xs[c] - mean;
                var += d * d;
            }
            var /= static_cast<S>(C);
            const S inv = S(1) / std::sqrt(var + eps);
            stats->v[static_cast<size_t>(r) * 2] = mean;
            stats->v[static_cast<size_t>(r) * 2 + 1] = inv;
            S* os = out.data() + r * C;
            for (int c = 0; c < C; ++c)
                os[c] = (xs[c] - mean) * inv * gm.v[static_cast<size_t>(c)] + bt.v[static_cast<size_t>(c)];
        });

        return make_node(std::move(out), {x, gamma, beta},
                         [this, x, gamma, beta, N, C, stats](const Arr<S>& g) {
            const auto& xv = nodes_[static_cast<size_t>(x)].val;
            const auto& gm = nodes_[static_cast<size_t>(gamma)].val;
            if (wants(gamma) || wants(beta)) {
                Arr<S>& gg = grad_of(gamma);
                Arr<S>& gb = grad_of(beta);
                for (int r = 0; r < N; ++r) {
                    const S mean = stats->v[static_cast<size_t>(r) * 2];
                    const S inv = stats->v[static_cast<size_t>(r) * 2 + 1];
                    for (int c = 0; c < C; ++c) {
                        const S xhat = (xv.v[static_cast<size_t>(r) * C + c] - mean) * inv;
                        if (wants(gamma)) gg.v[static_cast<size_t>(c)] += g.v[static_cast<size_t>(r) * C + c] * xhat;
                        if (wants(beta)) gb.v[static_cast<size_t>(c)] += g.v[static_cast<size_t>(r) * C + c];
                    }
                }
            }
            if (!wants(x)) return;
            Arr<S>& gx = grad_of(x);
            parallel_for_each(N, [&](int64_t r) {
                const S mean = stats->v[static_cast<size_t>(r) * 2];
                const S inv = stats->v[static_cast<size_t>(r) * 2 + 1];
                const S* xs = xv.data() + r * C;
                const S* gs = g.data() + r * C;
                S sum_d = S(0), sum_dx = S(0);
                for (int c = 0; c < C; ++c) {
                    const S dh = gs[c] * gm.v[static_cast<size_t>(c)];
                    sum_d += dh;
                    sum_dx += dh * (xs[c] - mean) * inv;
                }
                S* gxs = gx.data() + r * C;
                for (int c = 0; c < C; ++c) {
                    const S dh = gs[c] * gm.v[static_cast<size_t>(c)];
                    const S xhat = (xs[c] - mean) * inv;
                    gxs[c] += inv * (dh - (sum_d + xhat * sum_dx) / static_cast<S>(C));
                }
            });
        });
    }

    // ---- structural ----

    Id add_channel_bias(Id x, Id bias) {
        const auto& xv = nodes_[static_cast<size_t>(x)].val;
        const auto& bv = nodes_[static_cast<size_t>(bias)].val;
        require(xv.ndim() == 4 && bv.size() == xv.dim(1), "add_channel_bias: shape mismatch");
        const int B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
        Arr<S> out = xv;
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                S* p = out.data() + (static_cast<int64_t>(b) * C + c) * HW;
                const S add = bv.v[static_cast<size_t>(c)];
                for (int i = 0; i < HW; ++i) p[i] += add;
            }
        return make_node(std::move(out), {x, bias}, [this, x, bias, B, C, HW](const Arr<S>& g) {
            if (wants(x)) add_into(x, g.data(), g.size());
            if (wants(bias)) {
                Arr<S>& gb = grad_of(bias);
                for (int b = 0; b < B; ++b)
                    for (int c = 0; c < C; ++c) {
                        const S* p = g.data() + (static_cast<int64_t>(b) * C + c) * HW;
                        S acc = S(0);
                        for (int i = 0; i < HW; ++i) acc += p[i];
                        gb.v[static_cast<size_t>(c)] += acc;
                    }
            }
        });
    }

    Id concat_ch(Id a, Id b) {
        const auto& av = nodes_[static_cast<size_t>(a)].val;
        const auto& bv = nodes_[static_cast<size_t>(b)].val;
        require(av.ndim() == 4 && bv.ndim() == 4 && av.dim(0) == bv.dim(0) && av.dim(2) == bv.dim(2) &&
                    av.dim(3) == bv.dim(3),
                "concat_ch: shape mismatch");
        const int B = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), HW = av.dim(2) * av.dim(3);
        Arr<S> out({B, Ca + Cb, av.dim(2), av.dim(3)});
        for (int bi = 0; bi < B; ++bi) {
            std::copy_n(av.data() + static_cast<int64_t>(bi) * Ca * HW, static_cast<int64_t>(Ca) * HW,
                        out.data() + static_cast<int64_t>(bi) * (Ca + Cb) * HW);
            std::copy_n(bv.data() + static_cast<int64_t>(bi) * Cb * HW, static_cast<int64_t>(Cb) * HW,
                        out.data() + static_cast<int64_t>(bi) * (Ca + Cb) * HW + static_cast<int64_t>(Ca) * HW);
        }
        return make_node(std::move(out), {a, b}, [this, a, b, B, Ca, Cb, HW](const Arr<S>& g) {
            for (int bi = 0; bi < B; ++bi) {
                if (wants(a)) {
                    Arr<S>& ga = grad_of(a);
                    const S* src = g.data() + static_cast<int64_t>(bi) * (Ca + Cb) * HW;
                    S* dst = ga.data() + static_cast<int64_t>(bi) * Ca * HW;
                    for (int64_t i = 0; i < static_cast<int64_t>(Ca) * HW; ++i) dst[i] += src[i];
                }
                if (wants(b)) {
                    Arr<S>& gb = grad_of(b);
                    const S* src = g.data() + static_cast<int64_t>(bi) * (Ca + Cb) * HW + static_cast<int64_t>(Ca) * HW;
                    S* dst = gb.data() + static_cast<int64_t>(bi) * Cb * HW;
                    for (int64_t i = 0; i < static_cast<int64_t>(Cb) * HW; ++i) dst[i] += src[i];
                }
            }
        });
    }

    // [B,C,H,W] -> [B*H*W, C]; token index = b*H*W + y*W + x.
    Id to_tokens(Id x) {
        const auto& xv = nodes_[static_cast<size_t>(x)].val;
        require(xv.ndim() == 4, "to_tokens: expected [B,C,H,W]");
        const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        Arr<S> out({B * H * W, C});
        parallel_for_each(B, [&](int64_t b) {
            for (int c = 0; c < C; ++c) {
                const S* src = xv.data() + (b * C + c) * H * W;
                S* dst = out.data() + b * H * W * C + c;
                for (int i = 0; i < H * W; ++i) dst[static_cast<int64_t>(i) * C] = src[i];
            }
        });
        return make_node(std::move(out), {x}, [this, x, B, C, H, W](const Arr<S>& g) {
            if (!wants(x)) return;
            Arr<S>& gx = grad_of(x);
            parallel_for_each(B, [&](int64_t b) {
                for (int c = 0; c < C; ++c) {
                    const S* src = g.data() + b * H * W * C + c;
                    S* dst = gx.data() + (b * C + c) * H * W;
                    for (int i = 0; i < H * W; ++i) dst[i] += src[static_cast<int64_t>(i) * C];
                }
            });
        });
    }

    Id from_tokens(Id t, int B, int C, int H, int W) {
        const auto& tv = nodes_[static_cast<size_t>(t)].val;
        require(tv.ndim() == 2 && tv.dim(0) == B * H * W && tv.dim(1) == C, "from_tokens: shape mismatch");
        Arr<S> out({B, C, H, W});
        parallel_for_each(B, [&](int64_t b) {
            for (int c = 0; c < C; ++c) {
                const S* src = tv.data() + b * H * W * C + c;
                S* dst = out.data() + (b * C + c) * H * W;
                for (int i = 0; i < H * W; ++i) dst[i] = src[static_cast<int64_t>(i) * C];
            }
        });
        return make_node(std::move(out), {t}, [this, t, B, C, H, W](const Arr<S>& g) {
            if (!wants(t)) return;
            Arr<S>& gt = grad_of(t);
            parallel_for_each(B, [&](int64_t b) {
                for (int c = 0; c < C; ++c) {
                    const S* src = g.data() + (b * C + c) * H * W;
                    S* dst = gt.data() + b * H * W * C + c;
                    for (int i = 0; i < H * W; ++i) dst[static_cast<int64_t>(i) * C] += src[i];
                }
            });
        });
    }

    Id slice_rows(Id x, int r0, int r1) {
        const auto& xv = nodes_[static_cast<size_t>(x)].val;
        require(xv.ndim() == 2 && r0 >= 0 && r1 <= xv.dim(0) && r0 < r1, "slice_rows: bad range");
        const int C = xv.dim(1);
        Arr<S> out({r1 - r0, C});
        std::copy_n(xv.data() + static_cast<int64_t>(r0) * C, static_cast<int64_t>(r1 - r0) * C, out.data());
        return make_node(std::move(out), {x}, [this, x, r0, C](const Arr<S>& g) {
            if (!wants(x)) return;
            Arr<S>& gx = grad_of(x);
            S* dst = gx.data() + static_cast<int64_t>(r0) * C;
            for (int64_t i = 0; i < g.size(); ++i) dst[i] += g.v[static_cast<size_t>(i)];
        });
    }

    Id concat_rows(const std::vector<Id>& parts) {
        require(!parts.empty(), "concat_rows: empty");
        int rows = 0;
        const int C = nodes_[static_cast<size_t>(parts[0])].val.dim(1);
        for (Id p : parts) {
            const auto& pv = nodes_[static_cast<size_t>(p)].val;
            require(pv.ndim() == 2 && pv.dim(1) == C, "concat_rows: width mismatch");
            rows += pv.dim(0);
        }
        Arr<S> out({rows, C});
        int64_t off = 0;
        for (Id p : parts) {
            const auto& pv = nodes_[static_cast<size_t>(p)].val;
            std::copy_n(pv.data(), pv.size(), out.data() + off);
            off += pv.size();
        }
        return make_node(std::move(out), parts, [this, parts, C](const Arr<S>& g) {
            int64_t off = 0;
            for (Id p : parts) {
                const int64_t sz = nodes_[static_cast<size_t>(p)].val.size();
                if (wants(p)) {
                    Arr<S>& gp = grad_of(p);
                    for (int64_t i = 0; i < sz; ++i) gp.v[static_cast<size_t>(i)] += g.v[static_cast<size_t>(off + i)];
                }
                off += sz;
            }
        });
    }

    // ---- reductions ----

    // Mean squared difference -> scalar node (shape {1}).
    Id mse(Id a, Id b) {
        check_same(a, b, "mse");
        const auto& av = nodes_[static_cast<size_t>(a)].val;
        const auto& bv = nodes_[static_cast<size_t>(b)].val;
        const int64_t n = av.size();
        double acc = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(av.v[static_cast<size_t>(i)]) - static_cast<double>(bv.v[static_cast<size_t>(i)]);
            acc += d * d;
        }
        Arr<S> out({1});
        out.v[0] = static_cast<S>(acc / static_cast<double>(n));
        return make_node(std::move(out), {a, b}, [this, a, b, n](const Arr<S>& g) {
            const auto& av = nodes_[static_cast<size_t>(a)].val;
            const auto& bv = nodes_[static_cast<size_t>(b)].val;
            const S c = g.v[0] * S(2) / static_cast<S>(n);
            if (wants(a)) {
                Arr<S>& ga = grad_of(a);
                for (int64_t i = 0; i < n; ++i)
                    ga.v[static_cast<size_t>(i)] += c * (av.v[static_cast<size_t>(i)] - bv.v[static_cast<size_t>(i)]);
            }
            if (wants(b)) {
                Arr<S>& gb = grad_of(b);
                for (int64_t i = 0; i < n; ++i)
                    gb.v[static_cast<size_t>(i)] -= c * (av.v[static_cast<size_t>(i)] - bv.v[static_cast<size_t>(i)]);
            }
        });
    }

    Id wsum2(Id s1, S c1, Id s2, S c2) {
        const auto& a = nodes_[static_cast<size_t>(s1)].val;
        const auto& b = nodes_[static_cast<size_t>(s2)].val;
        require(a.size() == 1 && b.size() == 1, "wsum2: scalars expected");
        Arr<S> out({1});
        out.v[0] = c1 * a.v[0] + c2 * b.v[0];
        return make_node(std::move(out), {s1, s2}, [this, s1, s2, c1, c2](const Arr<S>& g) {
            if (wants(s1)) grad_of(s1).v[0] += c1 * g.v[0];
            if (wants(s2)) grad_of(s2).v[0] += c2 * g.v[0];
        });
    }

    // ---- backward ----

    void backward(Id root) {
        require(nodes_[static_cast<size_t>(root)].val.size() == 1, "backward: root must be scalar");
        for (auto& n : nodes_)
            if (n.needs_grad && n.grad.v.empty()) n.grad = Arr<S>(n.val.shape);
        nodes_[static_cast<size_t>(root)].grad.v[0] = S(1);
        for (int64_t i = static_cast<int64_t>(nodes_.size()) - 1; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (!n.needs_grad) continue;
            if (n.back) n.back(n.grad);
            if (n.ext_grad) {
                for (int64_t j = 0; j < n.grad.size(); ++j)
                    n.ext_grad->v[static_cast<size_t>(j)] += n.grad.v[static_cast<size_t>(j)];
            }
        }
    }

private:
    struct Node {
        Arr<S> val;
        Arr<S> grad;
        std::function<void(const Arr<S>&)> back;
        bool needs_grad = false;
        Arr<S>* ext_grad = nullptr;
    };

    std::vector<Node> nodes_;

    bool wants(Id id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

    Arr<S>& grad_of(Id id) { return nodes_[static_cast<size_t>(id)].grad; }

    void add_into(Id id, const S* src, int64_t n) {
        if (!wants(id)) return;
        Arr<S>& g = grad_of(id);
        for (int64_t i = 0; i < n; ++i) g.v[static_cast<size_t>(i)] += src[i];
    }
    void sub_into(Id id, const S* src, int64_t n) {
        if (!wants(id)) return;
        Arr<S>& g = grad_of(id);
        for (int64_t i = 0; i < n; ++i) g.v[static_cast<size_t>(i)] -= src[i];
    }

    void check_same(Id a, Id b, const char* op) {
        require(nodes_[static_cast<size_t>(a)].val.shape == nodes_[static_cast<size_t>(b)].val.shape,
                std::string(op) + ": shape mismatch");
    }

    Id make_node(Arr<S> out, const std::vector<Id>& parents, std::function<void(const Arr<S>&)> back) {
        Node n;
        n.val = std::move(out);
        for (Id p : parents) n.needs_grad = n.needs_grad || nodes_[static_cast<size_t>(p)].needs_grad;
        if (n.needs_grad) n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size()) - 1;
    }

    static void copy_head(const Arr<S>& src, Arr<S>& dst, int h, int d) {
        const int N = src.dim(0), C = src.dim(1);
        for (int r = 0; r < N; ++r)
            std::copy_n(src.data() + static_cast<int64_t>(r) * C + static_cast<int64_t>(h) * d, d,
                        dst.data() + static_cast<int64_t>(r) * d);
    }
    static void paste_head(const Arr<S>& src, Arr<S>& dst, int h, int d) {
        const int N = dst.dim(0), C = dst.dim(1);
        for (int r = 0; r < N; ++r)
            std::copy_n(src.data() + static_cast<int64_t>(r) * d, d,
                        dst.data() + static_cast<int64_t>(r) * C + static_cast<int64_t>(h) * d);
    }
    static void paste_head_add(const Arr<S>& src, Arr<S>& dst, int h, int d) {
        const int N = dst.dim(0), C = dst.dim(1);
        for (int r = 0; r < N; ++r)
            for (int c = 0; c < d; ++c)
                dst.v[static_cast<size_t>(r) * C + static_cast<size_t>(h) * d + c] +=
                    src.v[static_cast<size_t>(r) * d + c];
    }

    static void softmax_rows_scaled(Arr<S>& p, S scale) {
        const int N = p.dim(0), M = p.dim(1);
        parallel_for(N, [&](int64_t r0, int64_t r1) {
            for (int64_t r = r0; r < r1; ++r) {
                S* row = p.data() + r * M;
                S mx = row[0] * scale;
                for (int j = 0; j < M; ++j) {
                    row[j] *= scale;
                    mx = std::max(mx, row[j]);
                }
                S z = S(0);
                for (int j = 0; j < M; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    z += row[j];
                }
                const S inv = S(1) / z;
                for (int j = 0; j < M; ++j) row[j] *= inv;
            }
        });
    }
};

}  // namespace matmvp::nn
