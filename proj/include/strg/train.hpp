#pragma once

// Training: initialization, losses, reverse-mode gradients through the whole
// forward pass (including the softmax-normalized similarity adjacency into
// the affinity transforms), plain SGD with an iteration/multiplier schedule,
// and finite-difference gradient verification.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "strg/model.hpp"

namespace strg {

enum class LossMode { softmax_ce, per_class_sigmoid_bce };

inline const char* loss_mode_name(LossMode m) {
    return m == LossMode::softmax_ce ? "softmax_ce" : "per_class_sigmoid_bce";
}

/// Classification target: a class index (single-label) or a {0,1} vector
/// with one entry per action class (multi-label).
struct TrainTarget {
    int class_index = -1;
    std::vector<int> multi_hot;
};

/// Gaussian(0, 0.01^2) for the affinity transforms, the g input transform and
/// the classifier; exact zero for every graph-convolution weight; layer-norm
/// gains 1 and biases 0. Deterministic for a fixed seed.
inline GcnModel init_model(std::size_t d, std::size_t layers, std::size_t classes,
                           std::uint64_t seed, ClassMode mode = ClassMode::single_label) {
    if (d == 0 || layers == 0 || classes == 0)
        throw ShapeError("init_model: dimensions must be positive (d=" + std::to_string(d) +
                         ", L=" + std::to_string(layers) + ", C=" + std::to_string(classes) + ")");
    GcnModel m;
    m.d = d;
    m.layers = layers;
    m.classes = classes;
    m.mode = mode;
    m.p = zero_gradients(m);  // correct shapes, all zero
    for (auto& v : m.p.sim_gain) v.assign(d, 1.0);
    for (auto& v : m.p.st_gain) v.assign(d, 1.0);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 0.01);
    for (Matrix* t : {&m.p.transforms.w, &m.p.transforms.w_prime, &m.p.g_weight, &m.p.classifier_w})
        for (double& v : t->data()) v = gauss(rng);
    return m;
}

/// Adds N(0, std^2) noise to every parameter tensor. Used by gradient
/// checking, which needs all paths (graph weights included) away from zero.
inline void jitter_params(GcnModel& m, std::uint64_t seed, double std_dev = 0.1) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, std_dev);
    visit_params(m.p, [&](const ParamView& v) {
        for (double& x : v.data) x += gauss(rng);
    });
}

struct LossResult {
    double value = 0.0;
    Vector dlogits;
};

/// Scalar loss and its gradient w.r.t. the logits.
/// softmax_ce: log-sum-exp stabilized cross-entropy, gradient softmax - onehot.
/// per_class_sigmoid_bce: mean over classes of per-class sigmoid cross-entropy,
/// gradient (sigmoid(z) - y) / C.
inline LossResult loss(const Vector& logits, const TrainTarget& target, LossMode mode) {
    const std::size_t c = logits.size();
    if (c == 0) throw ShapeError("loss: empty logits");
    LossResult out;
    out.dlogits.assign(c, 0.0);
    if (mode == LossMode::softmax_ce) {
        if (target.class_index < 0 || static_cast<std::size_t>(target.class_index) >= c)
            throw DataError("loss: target index " + std::to_string(target.class_index) +
                            " out of range for C=" + std::to_string(c));
        double mx = logits[0];
        for (double z : logits) mx = std::max(mx, z);
        double sum = 0.0;
        for (double z : logits) sum += std::exp(z - mx);
        const double lse = mx + std::log(sum);
        out.value = lse - logits[static_cast<std::size_t>(target.class_index)];
        for (std::size_t i = 0; i < c; ++i) out.dlogits[i] = std::exp(logits[i] - lse);
        out.dlogits[static_cast<std::size_t>(target.class_index)] -= 1.0;
    } else {
        if (target.multi_hot.size() != c)
            throw DataError("loss: multi-hot length " + std::to_string(target.multi_hot.size()) +
                            " vs C=" + std::to_string(c));
        for (std::size_t i = 0; i < c; ++i) {
            const int y = target.multi_hot[i];
            if (y != 0 && y != 1)
                throw DataError("loss: multi-hot entry " + std::to_string(y) + " not in {0,1}");
            const double z = logits[i];
            // max(z,0) - z*y + log(1 + exp(-|z|)) is the stable form
            out.value += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
            const double sig = 1.0 / (1.0 + std::exp(-z));
            out.dlogits[i] = (sig - y) / static_cast<double>(c);
        }
        out.value /= static_cast<double>(c);
    }
    return out;
}

/// Reverse sweep from dL/dlogits down to every parameter. The similarity
/// adjacency is a function of w and w_prime, so its use in every similarity
/// layer backpropagates through the row softmax into the affinity transforms.
/// Front/back adjacencies are constants. Node features receive no gradient
/// (they are fixed inputs).
inline Gradients backward_from_dlogits(const GcnModel& m, const VideoGraphInput& in,
                                       const ForwardTrace& t, const Vector& dlogits) {
    if (dlogits.size() != m.classes)
        throw ShapeError("backward: dlogits length " + std::to_string(dlogits.size()) + " vs C=" +
                         std::to_string(m.classes));
    const Matrix& x = in.node_features;
    const std::size_t n = x.rows();
    const std::size_t width = 2 * m.d;
    Gradients g = zero_gradients(m);

    // Classifier: logits = head_in * W + b.
    Vector dhead(width, 0.0);
    for (std::size_t i = 0; i < width; ++i) {
        const double h = t.head_in[i];
        double acc = 0.0;
        for (std::size_t c = 0; c < m.classes; ++c) {
            g.classifier_w(i, c) += h * dlogits[c];
            acc += dlogits[c] * m.p.classifier_w(i, c);
        }
        dhead[i] = acc;
    }
    g.classifier_b = dlogits;

    // Dropout applied the same per-entry scale in forward.
    if (!t.dropout_scale.empty())
        for (std::size_t i = 0; i < width; ++i) dhead[i] *= t.dropout_scale[i];

    // Mean pooling: every node shares the pooled gradient.
    Matrix dnode(n, m.d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m.d; ++j)
            dnode(i, j) = dhead[j] / static_cast<double>(n);

    Matrix d_a = dnode;  // d/dA_L
    Matrix d_b = dnode;  // d/dB_L
    Matrix d_gsim(n, n);

    const bool norm_last = m.normalize_final_layer;

    // Branch A reverse.
    for (std::size_t li = m.layers; li-- > 0;) {
        const bool norm_here = (li + 1 < m.layers) || norm_last;
        Matrix dz;
        if (norm_here) {
            Matrix dy = relu_backward(t.a_y[li], d_a);
            dz = layer_norm_backward(t.a_ln[li], m.p.sim_gain[li], dy, g.sim_gain[li],
                                     g.sim_bias[li]);
        } else {
            dz = d_a;
        }
        // z = (G_sim * propagated) * W + a_in
        add_in_place(g.sim_weights[li], matmul_tn(t.a_prod[li], dz));
        const Matrix dprod = matmul_nt(dz, m.p.sim_weights[li]);
        const Matrix& propagated = (li == 0) ? t.g_x : t.a_in[li];
        add_in_place(d_gsim, matmul_nt(dprod, propagated));
        const Matrix dpropagated = matmul_tn(t.g_sim, dprod);
        if (li == 0) {
            add_in_place(g.g_weight, matmul_tn(dpropagated, x));
        } else {
            d_a = add(dpropagated, dz);  // propagated input + residual
        }
    }

    // Branch B reverse.
    for (std::size_t li = m.layers; li-- > 0;) {
        const bool norm_here = (li + 1 < m.layers) || norm_last;
        Matrix dz;
        if (norm_here) {
            Matrix dy = relu_backward(t.b_y[li], d_b);
            dz = layer_norm_backward(t.b_ln[li], m.p.st_gain[li], dy, g.st_gain[li], g.st_bias[li]);
        } else {
            dz = d_b;
        }
        add_in_place(g.front_weights[li], matmul_tn(t.b_front_prod[li], dz));
        add_in_place(g.back_weights[li], matmul_tn(t.b_back_prod[li], dz));
        if (li > 0) {
            Matrix d_prev = add(dz, matmul_tn(in.g_front.m, matmul_nt(dz, m.p.front_weights[li])));
            add_in_place(d_prev, matmul_tn(in.g_back.m, matmul_nt(dz, m.p.back_weights[li])));
            d_b = std::move(d_prev);
        }
    }

    // Similarity adjacency: through the row softmax into the bilinear form.
    const Matrix d_aff = softmax_rows_backward(t.g_sim, d_gsim);
    add_in_place(g.transforms.w, matmul_tn(matmul(d_aff, t.ft_q), x));
    add_in_place(g.transforms.w_prime, matmul_tn(matmul_tn(d_aff, t.ft_p), x));
    return g;
}

struct BackwardResult {
    double loss_value = 0.0;
    Gradients grads;
};

/// Forward + loss + full reverse pass.
inline BackwardResult backward(const GcnModel& m, const VideoGraphInput& in,
                               const TrainTarget& target, LossMode mode,
                               const ForwardOptions& opt = {}) {
    const ForwardTrace t = forward_traced(m, in, opt);
    LossResult l = loss(t.logits, target, mode);
    return {l.value, backward_from_dlogits(m, in, t, l.dlogits)};
}

/// Which parameter groups train; the rest keep their current values
/// (with zero initialization that means "frozen at zero").
enum class BranchMode { joint, similarity_only, spatio_temporal_only, baseline };

inline const char* branch_mode_name(BranchMode b) {
    switch (b) {
        case BranchMode::joint: return "joint";
        case BranchMode::similarity_only: return "similarity_only";
        case BranchMode::spatio_temporal_only: return "spatio_temporal_only";
        case BranchMode::baseline: return "baseline";
    }
    return "?";
}

struct ScheduleEntry {
    std::size_t iteration = 0;
    double multiplier = 1.0;
};

struct TrainConfig {
    double learning_rate = 0.00125;
    std::vector<ScheduleEntry> schedule{{1800, 0.1}};  // desk-scale default
    std::size_t total_iters = 2000;
    std::size_t batch_size = 2;
    std::uint64_t seed = 0;
    LossMode loss_mode = LossMode::softmax_ce;
    double weight_decay = 0.0;
    double momentum = 0.0;  // plain SGD unless raised
    BranchMode branch_mode = BranchMode::joint;
    std::size_t threads = 0;  // 0: one thread per batch element, capped by hardware

    void validate() const {
        if (!(learning_rate > 0.0)) throw DataError("train config: learning_rate must be > 0");
        for (std::size_t i = 1; i < schedule.size(); ++i)
            if (schedule[i].iteration <= schedule[i - 1].iteration)
                throw DataError("train config: schedule iterations must be strictly increasing");
        if (batch_size == 0) throw DataError("train config: batch_size must be >= 1");
    }
};

/// Multiplier of the latest schedule entry at or before `iter` (1 before any).
inline double schedule_multiplier(const std::vector<ScheduleEntry>& schedule, std::size_t iter) {
    double mult = 1.0;
    for (const auto& e : schedule) {
        if (e.iteration <= iter) mult = e.multiplier;
        else break;
    }
    return mult;
}

struct TrainSample {
    VideoGraphInput input;
    TrainTarget target;
    std::string id;
};

struct TrainState {
    std::size_t iter = 0;
    std::uint64_t seed = 0;
    ModelParams velocity;  // allocated on first momentum update
    bool velocity_ready = false;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    // splitmix64 over the combined words
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1) + 0x632be59bd9b4e019ULL * (c + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::vector<ParamView> collect_views(ModelParams& p) {
    std::vector<ParamView> views;
    visit_params(p, [&](const ParamView& v) { views.push_back(v); });
    return views;
}

inline void zero_group(Gradients& g, BranchMode mode) {
    auto clear = [](std::vector<Matrix>& ms) {
        for (auto& m : ms)
            for (double& v : m.data()) v = 0.0;
    };
    switch (mode) {
        case BranchMode::joint: break;
        case BranchMode::similarity_only:
            clear(g.front_weights);
            clear(g.back_weights);
            break;
        case BranchMode::spatio_temporal_only:
            clear(g.sim_weights);
            break;
        case BranchMode::baseline:
            clear(g.sim_weights);
            clear(g.front_weights);
            clear(g.back_weights);
            break;
    }
}

}  // namespace detail

/// One mini-batch SGD step: parameter <- parameter - lr * (mean gradient).
/// Per-sample passes may run on separate threads; the reduction is in sample
/// order, so results are deterministic. Returns the mean batch loss.
inline double train_step(GcnModel& model, TrainState& state, std::span<const TrainSample> batch,
                         const TrainConfig& cfg) {
    if (batch.empty()) throw DataError("train_step: empty batch");
    const double lr = cfg.learning_rate * schedule_multiplier(cfg.schedule, state.iter);

    std::vector<BackwardResult> results(batch.size());
    std::vector<std::string> errors(batch.size());
    auto run_one = [&](std::size_t k) {
        try {
            ForwardOptions fo;
            fo.training = true;
            fo.dropout_seed = detail::mix_seed(state.seed, state.iter, k);
            results[k] = backward(model, batch[k].input, batch[k].target, cfg.loss_mode, fo);
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    };
    const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    const std::size_t threads = std::min(batch.size(), cfg.threads ? cfg.threads : hw);
    if (threads <= 1 || batch.size() == 1) {
        for (std::size_t k = 0; k < batch.size(); ++k) run_one(k);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (std::size_t tix = 0; tix < threads; ++tix)
            pool.emplace_back([&] {
                for (std::size_t k = next.fetch_add(1); k < batch.size(); k = next.fetch_add(1))
                    run_one(k);
            });
        for (auto& th : pool) th.join();
    }
    for (std::size_t k = 0; k < batch.size(); ++k)
        if (!errors[k].empty())
            throw NumericError("train_step: sample '" + batch[k].id + "' failed: " + errors[k]);

    double mean_loss = 0.0;
    Gradients total = std::move(results[0].grads);
    mean_loss += results[0].loss_value;
    auto total_views = detail::collect_views(total);
    for (std::size_t k = 1; k < batch.size(); ++k) {
        mean_loss += results[k].loss_value;
        auto views = detail::collect_views(results[k].grads);
        for (std::size_t vi = 0; vi < views.size(); ++vi)
            for (std::size_t i = 0; i < views[vi].data.size(); ++i)
                total_views[vi].data[i] += views[vi].data[i];
    }
    mean_loss /= static_cast<double>(batch.size());
    if (!std::isfinite(mean_loss))
        throw NumericError("train_step: non-finite loss " + std::to_string(mean_loss) +
                           " at iteration " + std::to_string(state.iter));

    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    for (auto& v : total_views)
        for (double& x : v.data) x *= inv_batch;
    detail::zero_group(total, cfg.branch_mode);

    auto model_views = detail::collect_views(model.p);
    if (cfg.weight_decay > 0.0) {
        // decay on weight matrices only, not on norm gains/biases
        for (std::size_t vi = 0; vi < model_views.size(); ++vi)
            if (model_views[vi].rows > 1)
                for (std::size_t i = 0; i < model_views[vi].data.size(); ++i)
                    total_views[vi].data[i] += cfg.weight_decay * model_views[vi].data[i];
        detail::zero_group(total, cfg.branch_mode);
    }

    if (cfg.momentum > 0.0) {
        if (!state.velocity_ready) {
            state.velocity = zero_gradients(model);
            state.velocity_ready = true;
        }
        auto vel_views = detail::collect_views(state.velocity);
        for (std::size_t vi = 0; vi < model_views.size(); ++vi)
            for (std::size_t i = 0; i < model_views[vi].data.size(); ++i) {
                vel_views[vi].data[i] =
                    cfg.momentum * vel_views[vi].data[i] + total_views[vi].data[i];
                model_views[vi].data[i] -= lr * vel_views[vi].data[i];
            }
    } else {
        for (std::size_t vi = 0; vi < model_views.size(); ++vi)
            for (std::size_t i = 0; i < model_views[vi].data.size(); ++i)
                model_views[vi].data[i] -= lr * total_views[vi].data[i];
    }
    state.iter += 1;
    return mean_loss;
}

struct IterationMetrics {
    std::size_t iter = 0;
    double loss = 0.0;
    double lr = 0.0;
    long long wall_ms = 0;
};

/// One NDJSON metrics record.
inline std::string metrics_line(const IterationMetrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "{\"iter\":%zu,\"loss\":%.17g,\"lr\":%.17g,\"wall_ms\":%lld}",
                  m.iter, m.loss, m.lr, m.wall_ms);
    return buf;
}

/// Mini-batch SGD over the dataset with per-epoch reshuffling. Writes one
/// NDJSON metrics record per iteration when `metrics_out` is given. wall_ms
/// is 0 unless `log_timing` is set, so default logs are reproducible.
inline std::vector<IterationMetrics> fit(GcnModel& model, std::span<const TrainSample> dataset,
                                         const TrainConfig& cfg, std::ostream* metrics_out = nullptr,
                                         bool log_timing = false) {
    cfg.validate();
    if (dataset.empty()) throw DataError("fit: empty dataset");
    TrainState state;
    state.seed = cfg.seed;

    std::mt19937_64 shuffle_rng(cfg.seed);
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::size_t cursor = 0;

    std::vector<IterationMetrics> log;
    log.reserve(cfg.total_iters);
    std::vector<TrainSample> batch;
    for (std::size_t it = 0; it < cfg.total_iters; ++it) {
        batch.clear();
        for (std::size_t k = 0; k < cfg.batch_size; ++k) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), shuffle_rng);
                cursor = 0;
            }
            batch.push_back(dataset[order[cursor++]]);
        }
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = cfg.learning_rate * schedule_multiplier(cfg.schedule, state.iter);
        const double loss_value = train_step(model, state, batch, cfg);
        IterationMetrics im;
        im.iter = it;
        im.loss = loss_value;
        im.lr = lr;
        if (log_timing)
            im.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
        if (metrics_out) (*metrics_out) << metrics_line(im) << '\n';
        log.push_back(im);
    }
    return log;
}

struct GradCheckEntry {
    std::string name;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    GradCheckEntry worst;
    std::size_t checked = 0;
    bool passed(double tol) const { return max_rel_err < tol; }
};

/// Central finite differences over every parameter scalar vs the analytic
/// gradient. Relative error uses max(|analytic|, |numeric|, floor) in the
/// denominator; the floor absorbs finite-difference noise on near-zero
/// gradients. Dropout must be off (it is not differentiable pointwise).
inline GradCheckReport gradient_check(const GcnModel& model, const VideoGraphInput& in,
                                      const TrainTarget& target, LossMode mode, double h = 1e-5,
                                      double denom_floor = 1e-6) {
    GcnModel work = model;
    const ForwardTrace trace = forward_traced(work, in, {});
    const LossResult base = loss(trace.logits, target, mode);
    Gradients analytic = backward_from_dlogits(work, in, trace, base.dlogits);

    auto views = detail::collect_views(work.p);
    auto grad_views = detail::collect_views(analytic);

    GradCheckReport report;
    for (std::size_t vi = 0; vi < views.size(); ++vi) {
        for (std::size_t i = 0; i < views[vi].data.size(); ++i) {
            double& theta = views[vi].data[i];
            const double saved = theta;
            theta = saved + h;
            const double lp = loss(forward_traced(work, in, {}).logits, target, mode).value;
            theta = saved - h;
            const double lm = loss(forward_traced(work, in, {}).logits, target, mode).value;
            theta = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = grad_views[vi].data[i];
            const double denom = std::max({std::abs(an), std::abs(fd), denom_floor});
            const double rel = std::abs(an - fd) / denom;
            ++report.checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = {views[vi].name, i, an, fd, rel};
            }
        }
    }
    return report;
}

}  // namespace strg
