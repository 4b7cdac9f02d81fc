#pragma once

// Two-branch residual GCN over the three relation graphs.
//
// Branch A (similarity): layer 1 is Z = G_sim g(X) W1 + X where g is a d x d
// input transform and G_sim is computed from the features *before* g; layers
// 2..L are Z = G_sim A W + A. Branch B (spatio-temporal): every layer is
// Z = G_front B Wf + G_back B Wb + B. Each layer is followed by layer
// normalization then ReLU (the final layer too, unless configured off).
// Branch outputs are summed, mean-pooled over nodes, concatenated with the
// global video feature, passed through dropout (training only) and a linear
// classifier.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "strg/graphs.hpp"
#include "strg/matrix.hpp"

namespace strg {

enum class ClassMode { single_label, multi_label };

inline const char* class_mode_name(ClassMode m) {
    return m == ClassMode::single_label ? "single" : "multi";
}

/// Every learnable tensor of the model. Gradients reuse the same layout.
struct ModelParams {
    AffinityTransforms transforms;        // w, w_prime: d x d each
    Matrix g_weight;                      // d x d, similarity-branch input transform
    std::vector<Matrix> sim_weights;      // L of d x d
    std::vector<Matrix> front_weights;    // L of d x d
    std::vector<Matrix> back_weights;     // L of d x d
    std::vector<Vector> sim_gain, sim_bias;  // L of d
    std::vector<Vector> st_gain, st_bias;    // L of d
    Matrix classifier_w;                  // 2d x C
    Vector classifier_b;                  // C
};

/// One tensor per model parameter, same shapes.
using Gradients = ModelParams;

struct GcnModel {
    std::size_t d = 0;       // feature width
    std::size_t layers = 3;  // L
    std::size_t classes = 0; // C
    ClassMode mode = ClassMode::single_label;
    double dropout_rate = 0.3;
    double ln_eps = 1e-5;
    bool normalize_final_layer = true;  // LN+ReLU after the last layer of each branch

    ModelParams p;
};

/// Zero-filled gradient tensors matching a model's shapes.
inline Gradients zero_gradients(const GcnModel& m) {
    Gradients g;
    g.transforms.w = Matrix(m.d, m.d);
    g.transforms.w_prime = Matrix(m.d, m.d);
    g.g_weight = Matrix(m.d, m.d);
    for (std::size_t l = 0; l < m.layers; ++l) {
        g.sim_weights.emplace_back(m.d, m.d);
        g.front_weights.emplace_back(m.d, m.d);
        g.back_weights.emplace_back(m.d, m.d);
        g.sim_gain.emplace_back(m.d, 0.0);
        g.sim_bias.emplace_back(m.d, 0.0);
        g.st_gain.emplace_back(m.d, 0.0);
        g.st_bias.emplace_back(m.d, 0.0);
    }
    g.classifier_w = Matrix(2 * m.d, m.classes);
    g.classifier_b.assign(m.classes, 0.0);
    return g;
}

/// Flat view over one parameter tensor.
struct ParamView {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::span<double> data;
};

/// Visits every tensor in the fixed serialization order. The same order is
/// used by the checkpoint container, SGD updates and gradient checking.
inline void visit_params(ModelParams& p, const std::function<void(const ParamView&)>& fn) {
    auto mat = [&](const std::string& name, Matrix& m) {
        fn({name, m.rows(), m.cols(), m.data()});
    };
    auto vec = [&](const std::string& name, Vector& v) {
        fn({name, 1, v.size(), std::span<double>(v)});
    };
    mat("affinity.w", p.transforms.w);
    mat("affinity.w_prime", p.transforms.w_prime);
    mat("g_weight", p.g_weight);
    for (std::size_t l = 0; l < p.sim_weights.size(); ++l)
        mat("sim.w." + std::to_string(l), p.sim_weights[l]);
    for (std::size_t l = 0; l < p.front_weights.size(); ++l)
        mat("front.w." + std::to_string(l), p.front_weights[l]);
    for (std::size_t l = 0; l < p.back_weights.size(); ++l)
        mat("back.w." + std::to_string(l), p.back_weights[l]);
    for (std::size_t l = 0; l < p.sim_gain.size(); ++l)
        vec("sim.norm.gain." + std::to_string(l), p.sim_gain[l]);
    for (std::size_t l = 0; l < p.sim_bias.size(); ++l)
        vec("sim.norm.bias." + std::to_string(l), p.sim_bias[l]);
    for (std::size_t l = 0; l < p.st_gain.size(); ++l)
        vec("st.norm.gain." + std::to_string(l), p.st_gain[l]);
    for (std::size_t l = 0; l < p.st_bias.size(); ++l)
        vec("st.norm.bias." + std::to_string(l), p.st_bias[l]);
    mat("classifier.w", p.classifier_w);
    vec("classifier.b", p.classifier_b);
}

inline void visit_params(const ModelParams& p, const std::function<void(const ParamView&)>& fn) {
    visit_params(const_cast<ModelParams&>(p), fn);
}

/// Assembled per-video input. g_sim holds the adjacency snapshot taken at
/// assembly time (for export and inspection); forward recomputes the
/// similarity adjacency from node_features and the current transforms, since
/// it depends on learnable parameters.
struct VideoGraphInput {
    Matrix node_features;  // N x d
    AdjacencyMatrix g_sim;
    AdjacencyMatrix g_front;
    AdjacencyMatrix g_back;
    Vector global_feature; // d
};

/// Pre-activation graph convolution with residual: G X W + X.
inline Matrix gcn_layer_pre(const AdjacencyMatrix& g, const Matrix& x, const Matrix& w) {
    if (g.m.rows() != x.rows() || g.m.cols() != x.rows())
        throw ShapeError("gcn_layer: adjacency " + g.m.shape_str() + " vs features " + x.shape_str());
    if (w.rows() != x.cols() || w.cols() != x.cols())
        throw ShapeError("gcn_layer: weight " + w.shape_str() + " vs features " + x.shape_str());
    return add(matmul(matmul(g.m, x), w), x);
}

/// One graph-convolution layer: Z = G X W + X, then layer_norm, then relu.
inline Matrix gcn_layer(const AdjacencyMatrix& g, const Matrix& x, const Matrix& w,
                        const Vector& gain, const Vector& bias, double eps = 1e-5) {
    return relu(layer_norm(gcn_layer_pre(g, x, w), gain, bias, eps));
}

/// Multi-graph pre-activation: sum_i G_i X W_i + X, weights not shared.
inline Matrix gcn_layer_multi_pre(const std::vector<AdjacencyMatrix>& gs, const Matrix& x,
                                  const std::vector<Matrix>& ws) {
    if (gs.size() != ws.size())
        throw ShapeError("gcn_layer_multi: " + std::to_string(gs.size()) + " graphs vs " +
                         std::to_string(ws.size()) + " weights");
    if (gs.empty()) throw ShapeError("gcn_layer_multi: no graphs");
    Matrix z = x;
    for (std::size_t i = 0; i < gs.size(); ++i)
        add_in_place(z, matmul(matmul(gs[i].m, x), ws[i]));
    return z;
}

inline Matrix gcn_layer_multi(const std::vector<AdjacencyMatrix>& gs, const Matrix& x,
                              const std::vector<Matrix>& ws, const Vector& gain,
                              const Vector& bias, double eps = 1e-5) {
    return relu(layer_norm(gcn_layer_multi_pre(gs, x, ws), gain, bias, eps));
}

/// The raw non-local block on region proposals: Z = G_sim(x) (x g_w^T) W + x,
/// with no normalization or activation. Identical to the similarity branch's
/// first-layer pre-activation when parameters are shared.
inline Matrix nonlocal_block(const Matrix& x, const AffinityTransforms& t, const Matrix& g_weight,
                             const Matrix& w) {
    const Matrix g_sim = softmax_rows(affinity(x, t));
    const Matrix u = matmul_nt(x, g_weight);
    const Matrix y = matmul(g_sim, u);
    return add(matmul(y, w), x);
}

/// Elementwise max over per-clip logit vectors (score-level aggregation).
inline Vector aggregate_clips(const std::vector<Vector>& clip_logits) {
    if (clip_logits.empty()) throw ShapeError("aggregate_clips: no clips");
    return max_elementwise(clip_logits);
}

struct ForwardOptions {
    bool training = false;        // enables dropout
    std::uint64_t dropout_seed = 0;
};

/// Every intermediate the reverse pass needs.
struct ForwardTrace {
    // similarity adjacency path
    Matrix ft_p;   // X w^T
    Matrix ft_q;   // X w'^T
    Matrix g_sim;  // softmax_rows(P Q^T)

    // branch A (similarity)
    Matrix g_x;                      // X g_weight^T
    std::vector<Matrix> a_in;        // layer inputs: a_in[0] = X, a_in[l] = A_l-1
    std::vector<Matrix> a_prod;      // G_sim * (g(X) for layer 1, A_l-1 after)
    std::vector<Matrix> a_z;         // pre-norm Z
    std::vector<LayerNormCache> a_ln;
    std::vector<Matrix> a_y;         // post-norm, pre-relu
    std::vector<Matrix> a_act;       // layer outputs

    // branch B (spatio-temporal)
    std::vector<Matrix> b_in;
    std::vector<Matrix> b_front_prod;  // G_front * B_l-1
    std::vector<Matrix> b_back_prod;   // G_back * B_l-1
    std::vector<Matrix> b_z;
    std::vector<LayerNormCache> b_ln;
    std::vector<Matrix> b_y;
    std::vector<Matrix> b_act;

    Matrix node_out;      // A_L + B_L
    Vector pooled;        // mean over nodes
    Vector concat;        // pooled ++ global_feature
    Vector dropout_scale; // per-entry factor applied to concat (empty: none)
    Vector head_in;       // classifier input
    Vector logits;
};

namespace detail {

inline void check_forward_shapes(const GcnModel& m, const VideoGraphInput& in) {
    const std::size_t n = in.node_features.rows();
    if (n == 0 || in.node_features.cols() != m.d)
        throw ShapeError("forward: features " + in.node_features.shape_str() + " vs model d=" +
                         std::to_string(m.d));
    if (in.g_front.m.rows() != n || in.g_front.m.cols() != n ||
        in.g_back.m.rows() != n || in.g_back.m.cols() != n)
        throw ShapeError("forward: adjacency " + in.g_front.m.shape_str() + "/" +
                         in.g_back.m.shape_str() + " vs N=" + std::to_string(n));
    if (in.global_feature.size() != m.d)
        throw ShapeError("forward: global feature length " +
                         std::to_string(in.global_feature.size()) + " vs d=" + std::to_string(m.d));
    if (m.p.sim_weights.size() != m.layers || m.p.front_weights.size() != m.layers ||
        m.p.back_weights.size() != m.layers)
        throw ShapeError("forward: model has " + std::to_string(m.p.sim_weights.size()) +
                         " layer weights, expected " + std::to_string(m.layers));
    if (m.p.classifier_w.rows() != 2 * m.d || m.p.classifier_w.cols() != m.classes)
        throw ShapeError("forward: classifier " + m.p.classifier_w.shape_str() + " vs " +
                         std::to_string(2 * m.d) + "x" + std::to_string(m.classes));
}

}  // namespace detail

/// Full forward pass keeping all intermediates for the reverse pass.
inline ForwardTrace forward_traced(const GcnModel& m, const VideoGraphInput& in,
                                   const ForwardOptions& opt = {}) {
    detail::check_forward_shapes(m, in);
    const Matrix& x = in.node_features;
    ForwardTrace t;

    // Similarity adjacency from pre-g features; depends on w and w_prime.
    t.ft_p = matmul_nt(x, m.p.transforms.w);
    t.ft_q = matmul_nt(x, m.p.transforms.w_prime);
    t.g_sim = softmax_rows(matmul_nt(t.ft_p, t.ft_q));

    const bool norm_last = m.normalize_final_layer;
    for (auto* v : {&t.a_in, &t.a_prod, &t.a_z, &t.a_y, &t.a_act, &t.b_in, &t.b_front_prod,
                    &t.b_back_prod, &t.b_z, &t.b_y, &t.b_act})
        v->reserve(m.layers);
    t.a_ln.reserve(m.layers);
    t.b_ln.reserve(m.layers);

    // Branch A. Layer 1 propagates g(X) but keeps the residual on raw X.
    t.g_x = matmul_nt(x, m.p.g_weight);
    {
        const Matrix* cur = &x;
        for (std::size_t l = 0; l < m.layers; ++l) {
            t.a_in.push_back(*cur);
            const Matrix& propagated = (l == 0) ? t.g_x : *cur;
            t.a_prod.push_back(matmul(t.g_sim, propagated));
            Matrix z = add(matmul(t.a_prod[l], m.p.sim_weights[l]), *cur);
            const bool norm_here = (l + 1 < m.layers) || norm_last;
            if (norm_here) {
                LayerNormCache ln;
                Matrix y = layer_norm(z, m.p.sim_gain[l], m.p.sim_bias[l], m.ln_eps, &ln);
                t.a_z.push_back(std::move(z));
                t.a_ln.push_back(std::move(ln));
                t.a_act.push_back(relu(y));
                t.a_y.push_back(std::move(y));
            } else {
                t.a_act.push_back(z);
                t.a_z.push_back(std::move(z));
                t.a_ln.emplace_back();
                t.a_y.emplace_back();
            }
            cur = &t.a_act[l];
        }
    }

    // Branch B: both spatio-temporal graphs per layer, weights not shared.
    {
        const Matrix* cur = &x;
        for (std::size_t l = 0; l < m.layers; ++l) {
            t.b_in.push_back(*cur);
            t.b_front_prod.push_back(matmul(in.g_front.m, *cur));
            t.b_back_prod.push_back(matmul(in.g_back.m, *cur));
            Matrix z = add(matmul(t.b_front_prod[l], m.p.front_weights[l]), *cur);
            add_in_place(z, matmul(t.b_back_prod[l], m.p.back_weights[l]));
            const bool norm_here = (l + 1 < m.layers) || norm_last;
            if (norm_here) {
                LayerNormCache ln;
                Matrix y = layer_norm(z, m.p.st_gain[l], m.p.st_bias[l], m.ln_eps, &ln);
                t.b_z.push_back(std::move(z));
                t.b_ln.push_back(std::move(ln));
                t.b_act.push_back(relu(y));
                t.b_y.push_back(std::move(y));
            } else {
                t.b_act.push_back(z);
                t.b_z.push_back(std::move(z));
                t.b_ln.emplace_back();
                t.b_y.emplace_back();
            }
            cur = &t.b_act[l];
        }
    }

    t.node_out = add(t.a_act.back(), t.b_act.back());
    t.pooled = mean_rows(t.node_out);

    t.concat.reserve(2 * m.d);
    t.concat.insert(t.concat.end(), t.pooled.begin(), t.pooled.end());
    t.concat.insert(t.concat.end(), in.global_feature.begin(), in.global_feature.end());

    t.head_in = t.concat;
    if (opt.training && m.dropout_rate > 0.0) {
        // Inverted dropout on the concatenated vector: kept entries scaled by
        // 1/(1-p) so eval needs no rescaling.
        std::mt19937_64 rng(opt.dropout_seed);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        const double keep = 1.0 - m.dropout_rate;
        t.dropout_scale.resize(t.concat.size());
        for (std::size_t i = 0; i < t.concat.size(); ++i) {
            t.dropout_scale[i] = uni(rng) < keep ? 1.0 / keep : 0.0;
            t.head_in[i] = t.concat[i] * t.dropout_scale[i];
        }
    }

    t.logits.assign(m.classes, 0.0);
    for (std::size_t i = 0; i < t.head_in.size(); ++i) {
        const double v = t.head_in[i];
        if (v == 0.0) continue;
        for (std::size_t c = 0; c < m.classes; ++c) t.logits[c] += v * m.p.classifier_w(i, c);
    }
    for (std::size_t c = 0; c < m.classes; ++c) t.logits[c] += m.p.classifier_b[c];
    return t;
}

struct ForwardResult {
    Vector logits;
    Matrix node_out;
};

/// Forward pass: logits for classification plus the updated node features.
inline ForwardResult forward(const GcnModel& m, const VideoGraphInput& in, bool training = false,
                             std::uint64_t dropout_seed = 0) {
    ForwardTrace t = forward_traced(m, in, {training, dropout_seed});
    return {std::move(t.logits), std::move(t.node_out)};
}

}  // namespace strg
