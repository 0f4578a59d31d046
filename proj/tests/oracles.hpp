// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations used as test oracles. These must stay
// naive transcriptions of the underlying formulas, not calls into the library
// paths they check.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Scalar BRDF transcription: GGX distribution, height-correlated Smith
// visibility, Schlick Fresnel with f90 clamp. Works channel by channel via an
// explicit half vector.
// ---------------------------------------------------------------------------

struct BrdfIn {
    std::array<double, 3> albedo;
    double metallic;
    double roughness;
    std::array<double, 3> n, v, l;
};

inline double dot3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

inline std::array<double, 3> normalize3(std::array<double, 3> a) {
    const double len = std::sqrt(dot3(a, a));
    return {a[0] / len, a[1] / len, a[2] / len};
}

// Full BRDF value (no cosine factor, no radiance).
inline std::array<double, 3> brdf_reference(const BrdfIn& in) {
    const double rough = in.roughness < 0.04 ? 0.04 : in.roughness;
    const double alpha = rough * rough;
    const double a2 = alpha * alpha;

    std::array<double, 3> out{};
    for (int c = 0; c < 3; ++c) out[c] = (1.0 - in.metallic) * in.albedo[c] / kPi;

    const double ndotl = dot3(in.n, in.l);
    const double ndotv = dot3(in.n, in.v);
    if (ndotl <= 0.0 || ndotv <= 0.0) return out;

    const std::array<double, 3> h =
        normalize3({in.v[0] + in.l[0], in.v[1] + in.l[1], in.v[2] + in.l[2]});
    const double ndoth = dot3(in.n, h);
    const double vdoth = dot3(in.v, h);

    const double denom = ndoth * ndoth * (a2 - 1.0) + 1.0;
    const double D = a2 / (kPi * denom * denom);

    const double lambda_v = ndotl * std::sqrt(ndotv * ndotv * (1.0 - a2) + a2);
    const double lambda_l = ndotv * std::sqrt(ndotl * ndotl * (1.0 - a2) + a2);
    const double vis = 0.5 / (lambda_v + lambda_l);

    double f0_sum = 0.0;
    std::array<double, 3> f0{};
    for (int c = 0; c < 3; ++c) {
        f0[c] = 0.04 * (1.0 - in.metallic) + in.albedo[c] * in.metallic;
        f0_sum += f0[c];
    }
    double f90 = 16.5 * f0_sum;
    if (f90 > 1.0) f90 = 1.0;
    if (f90 < 0.0) f90 = 0.0;
    const double fw = std::pow(1.0 - vdoth, 5.0);

    for (int c = 0; c < 3; ++c) {
        const double F = f0[c] * (1.0 - fw) + f90 * fw;
        out[c] += F * D * vis;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Naive attention loops. Tokens are row-major [tokens x width] matrices.
// ---------------------------------------------------------------------------

using Mat = std::vector<std::vector<double>>;

// Single-head scaled dot-product attention: softmax(q k^T / sqrt(d)) v,
// written as explicit loops over (query, key) pairs.
inline Mat attention_reference(const Mat& q, const Mat& k, const Mat& v, double d_scale) {
    const size_t nq = q.size(), nk = k.size(), dk = q.empty() ? 0 : q[0].size();
    const size_t dv = v.empty() ? 0 : v[0].size();
    Mat out(nq, std::vector<double>(dv, 0.0));
    for (size_t i = 0; i < nq; ++i) {
        std::vector<double> score(nk, 0.0);
        double mx = -1e300;
        for (size_t j = 0; j < nk; ++j) {
            double s = 0.0;
            for (size_t c = 0; c < dk; ++c) s += q[i][c] * k[j][c];
            score[j] = s / std::sqrt(d_scale);
            if (score[j] > mx) mx = score[j];
        }
        double z = 0.0;
        for (size_t j = 0; j < nk; ++j) {
            score[j] = std::exp(score[j] - mx);
            z += score[j];
        }
        for (size_t j = 0; j < nk; ++j) {
            const double w = score[j] / z;
            for (size_t c = 0; c < dv; ++c) out[i][c] += w * v[j][c];
        }
    }
    return out;
}

// Multi-view attention: each view's queries attend over the concatenation of
// all views' keys/values, softmax normalized jointly (the j-sum with a shared
// normalizer). Inputs: per-view q/k/v matrices.
inline std::vector<Mat> multiview_attention_reference(const std::vector<Mat>& q,
                                                      const std::vector<Mat>& k,
                                                      const std::vector<Mat>& v, double d_scale) {
    Mat k_cat, v_cat;
    for (const Mat& m : k) k_cat.insert(k_cat.end(), m.begin(), m.end());
    for (const Mat& m : v) v_cat.insert(v_cat.end(), m.begin(), m.end());
    std::vector<Mat> out;
    out.reserve(q.size());
    for (const Mat& qi : q) out.push_back(attention_reference(qi, k_cat, v_cat, d_scale));
    return out;
}

// Multi-head wrapper: splits width into `heads` contiguous slices and runs the
// single-head loop per slice.
inline Mat mha_reference(const Mat& q, const Mat& k, const Mat& v, int heads) {
    const size_t width = q[0].size();
    const size_t d = width / static_cast<size_t>(heads);
    Mat out(q.size(), std::vector<double>(width, 0.0));
    for (int h = 0; h < heads; ++h) {
        auto slice = [&](const Mat& m) {
            Mat s(m.size(), std::vector<double>(d));
            for (size_t i = 0; i < m.size(); ++i)
                for (size_t c = 0; c < d; ++c) s[i][c] = m[i][static_cast<size_t>(h) * d + c];
            return s;
        };
        const Mat oh = attention_reference(slice(q), slice(k), slice(v), static_cast<double>(d));
        for (size_t i = 0; i < q.size(); ++i)
            for (size_t c = 0; c < d; ++c) out[i][static_cast<size_t>(h) * d + c] = oh[i][c];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Chi-square critical value via the Wilson-Hilferty approximation (accurate
// to well under 1% for the dof used here).
// ---------------------------------------------------------------------------

inline double chi2_critical(int dof, double significance) {
    // z for the upper tail; significance 0.01 -> z = 2.3263.
    double z;
    if (significance <= 0.011 && significance >= 0.009)
        z = 2.3263478740408408;
    else if (significance <= 0.051 && significance >= 0.049)
        z = 1.6448536269514722;
    else
        z = 2.3263478740408408;
    const double nu = static_cast<double>(dof);
    const double t = 1.0 - 2.0 / (9.0 * nu) + z * std::sqrt(2.0 / (9.0 * nu));
    return nu * t * t * t;
}

}  // namespace oracle
