// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "matmvp/nn/graph.hpp"

namespace matmvp::nn {

// Graph-node bundle for one attention projection set. `wo/bo` (zero-initialized
// output projection) are applied by the caller where a residual is formed.
template <class S>
struct AttnProj {
    typename Graph<S>::Id wq = -1, bq = -1;
    typename Graph<S>::Id wk = -1, bk = -1;
    typename Graph<S>::Id wv = -1, bv = -1;
    typename Graph<S>::Id wo = -1, bo = -1;
    int heads = 1;
};

// Joint multi-view attention: every view's queries attend over the
// concatenation of all views' keys/values with one shared softmax normalizer.
// Returns one output per view, same shapes as the inputs.
template <class S>
std::vector<typename Graph<S>::Id> multiview_attention(Graph<S>& g,
                                                       const std::vector<typename Graph<S>::Id>& z_views,
                                                       const AttnProj<S>& p) {
    require(!z_views.empty(), "multiview_attention: no views");
    const std::vector<int> shape = g.val(z_views[0]).shape;  // copy: pushes may reallocate nodes
    require(shape.size() == 2, "multiview_attention: tokens must be [T, C]");
    for (auto id : z_views)
        require(g.val(id).shape == shape, "multiview_attention: ragged view shapes");
    const int T = shape[0];

    std::vector<typename Graph<S>::Id> qs, ks, vs;
    for (auto id : z_views) {
        qs.push_back(g.linear(id, p.wq, p.bq));
        ks.push_back(g.linear(id, p.wk, p.bk));
        vs.push_back(g.linear(id, p.wv, p.bv));
    }
    const auto q_cat = g.concat_rows(qs);
    const auto k_cat = g.concat_rows(ks);
    const auto v_cat = g.concat_rows(vs);
    const auto out = g.mha(q_cat, k_cat, v_cat, p.heads);

    std::vector<typename Graph<S>::Id> per_view;
    for (size_t i = 0; i < z_views.size(); ++i)
        per_view.push_back(g.slice_rows(out, static_cast<int>(i) * T, static_cast<int>(i + 1) * T));
    return per_view;
}

// Same computation over one already-concatenated lane token matrix
// [n_views*T, C] (the model's internal layout).
template <class S>
typename Graph<S>::Id multiview_attention_tokens(Graph<S>& g, typename Graph<S>::Id tokens,
                                                 const AttnProj<S>& p) {
    const auto q = g.linear(tokens, p.wq, p.bq);
    const auto k = g.linear(tokens, p.wk, p.bk);
    const auto v = g.linear(tokens, p.wv, p.bv);
    return g.mha(q, k, v, p.heads);
}

// Reference-guided cross-attention: queries from the (albedo-lane) tokens,
// keys/values projected from the reference-branch tokens.
template <class S>
typename Graph<S>::Id reference_cross_attention(Graph<S>& g, typename Graph<S>::Id q_tokens,
                                                typename Graph<S>::Id ref_tokens,
                                                const AttnProj<S>& p) {
    require(g.val(q_tokens).ndim() == 2 && g.val(ref_tokens).ndim() == 2,
            "reference_cross_attention: tokens must be [T, C]");
    require(g.val(q_tokens).dim(1) == g.val(ref_tokens).dim(1),
            "reference_cross_attention: resolution level mismatch");
    const auto q = g.linear(q_tokens, p.wq, p.bq);
    const auto k = g.linear(ref_tokens, p.wk, p.bk);
    const auto v = g.linear(ref_tokens, p.wv, p.bv);
    return g.mha(q, k, v, p.heads);
}

// Parameter-free residual injection of the albedo attention into the MR lane.
template <class S>
typename Graph<S>::Id mcaa_inject(Graph<S>& g, typename Graph<S>::Id z_mr_tokens,
                                  typename Graph<S>::Id attn_albedo_tokens) {
    require(g.val(z_mr_tokens).shape == g.val(attn_albedo_tokens).shape,
            "mcaa_inject: shape mismatch");
    return g.add(z_mr_tokens, attn_albedo_tokens);
}

// Cross-attention from lane tokens to that lane's learnable embedding matrix.
template <class S>
typename Graph<S>::Id material_embedding_attention(Graph<S>& g, typename Graph<S>::Id lane_tokens,
                                                   typename Graph<S>::Id lane_embedding,
                                                   const AttnProj<S>& p) {
    require(g.val(lane_embedding).ndim() == 2, "material_embedding_attention: embedding must be [T, W]");
    const auto q = g.linear(lane_tokens, p.wq, p.bq);
    const auto k = g.linear(lane_embedding, p.wk, p.bk);
    const auto v = g.linear(lane_embedding, p.wv, p.bv);
    return g.mha(q, k, v, p.heads);
}

}  // namespace matmvp::nn
