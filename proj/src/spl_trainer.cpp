// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmcl/spl_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mmcl/modality_curriculum.hpp"

namespace mmcl {

namespace {

constexpr std::uint64_t kShuffleStream = 0x7368756666ULL;

void check_finite(std::size_t sample_id, const char* metric, double value) {
    if (!std::isfinite(value)) throw NumericAbort(sample_id, metric, value);
}

// Everything computed for one sample before its gradient is formed.
struct SampleEval {
    std::size_t sample_id = 0;
    std::size_t label = 0;
    std::vector<ForwardResult> unimodal;
    std::vector<std::vector<double>> probs;
    std::vector<double> losses;
    std::optional<ForwardResult> head_pass;
    std::vector<double> fused_probs;
    ModalityState modality;
    DifficultyRecord difficulty;
    double w_factor = 1.0;
    double v = 1.0;
};

std::vector<std::vector<double>> logits_of(const std::vector<ForwardResult>& passes) {
    std::vector<std::vector<double>> z;
    z.reserve(passes.size());
    for (const auto& p : passes) z.push_back(p.logits);
    return z;
}

std::vector<std::vector<double>> features_of(const std::vector<ForwardResult>& passes) {
    std::vector<std::vector<double>> f;
    f.reserve(passes.size());
    for (const auto& p : passes) {
        auto s = p.cache.features();
        f.emplace_back(s.begin(), s.end());
    }
    return f;
}

ModalityOptions modality_options(const TrainOptions& options) {
    ModalityOptions mo;
    mo.use_gmr = options.curriculum.gmr_enabled;
    mo.use_hmir = options.curriculum.hmir_enabled;
    mo.gating_enabled = options.curriculum.gating_enabled;
    mo.threshold = options.curriculum.gate_threshold;
    mo.mu = options.curriculum.mu;
    mo.renormalize = options.fusion.renormalize;
    return mo;
}

// Modality quantities with the modality curriculum switched off: gates fixed
// at 1, every modality active, fusion effectiveness 1.
ModalityState fixed_modality_state(std::span<const double> losses, double loss_concat, const TrainOptions& options) {
    ModalityState s;
    s.losses.assign(losses.begin(), losses.end());
    s.loss_concat = loss_concat;
    s.gains = gains(losses, loss_concat);
    s.omega = omega_init(losses);
    s.d_gmr = gmr(losses, loss_concat);
    s.d_hmir = hmir(s.gains, s.omega);
    s.lambda = balance_factors(s.gains);
    s.gates.assign(losses.size(), 1.0);
    GateSelection sel = activate_and_reweight(s.omega, s.gates, -1.0, options.curriculum.mu);
    s.active = std::move(sel.active);
    s.omega_star = std::move(sel.omega_star);
    if (options.fusion.renormalize) {
        const double total = std::accumulate(s.omega_star.begin(), s.omega_star.end(), 0.0);
        for (double& w : s.omega_star) w /= total;
    }
    s.d_fuse = 1.0;
    return s;
}

double clamp_loss(double loss) { return std::max(loss, kProbabilityFloor); }

SampleEval evaluate_sample(const TrainState& state, const SyntheticSample& sample, std::size_t sample_id,
                           const TrainOptions& options, const MetricTriple& psi) {
    const MultimodalModel& model = state.model;
    const std::size_t n_mod = model.num_modalities();
    SampleEval ev;
    ev.sample_id = sample_id;
    ev.label = sample.label;
    for (std::size_t m = 0; m < n_mod; ++m) {
        ev.unimodal.push_back(forward(model.encoders[m], sample.features[m]));
        ev.probs.push_back(softmax(ev.unimodal.back().logits));
        ev.losses.push_back(cross_entropy(ev.probs.back(), sample.label));
        check_finite(sample_id, "unimodal_loss", ev.losses.back());
    }
    // Ratios of losses need strictly positive values; the probability floor
    // already bounds them below by ~1e-12 except for exact one-hot outputs.
    std::vector<double> positive_losses(ev.losses);
    for (double& l : positive_losses) l = clamp_loss(l);

    const auto logits = logits_of(ev.unimodal);
    const FusionKind kind = options.fusion.kind;
    std::vector<double> fused_logits;
    double preliminary_loss = 0.0;
    if (kind == FusionKind::gated) {
        // Preliminary fusion with the gates this sample received last epoch.
        const std::vector<double> omega = omega_init(positive_losses);
        std::vector<double> prev = state.prev_gates.size() > sample_id ? state.prev_gates[sample_id]
                                                                         : std::vector<double>{};
        if (prev.size() != n_mod) prev.assign(n_mod, 0.5);
        const double threshold = options.curriculum.gating_enabled ? options.curriculum.gate_threshold : -1.0;
        GateSelection sel = activate_and_reweight(omega, prev, threshold, options.curriculum.mu);
        if (options.fusion.renormalize) {
            const double total = std::accumulate(sel.omega_star.begin(), sel.omega_star.end(), 0.0);
            for (double& w : sel.omega_star) w /= total;
        }
        preliminary_loss = cross_entropy(softmax(fuse_gated(logits, sel.omega_star, sel.active)), sample.label);
    } else {
        if (kind == FusionKind::concat_head) {
            ev.head_pass = fuse_concat(features_of(ev.unimodal), *model.head);
            fused_logits = ev.head_pass->logits;
        } else if (kind == FusionKind::summation) {
            fused_logits = fuse_summation(logits);
        } else {
            fused_logits = fuse_uniform(logits);
        }
        preliminary_loss = cross_entropy(softmax(fused_logits), sample.label);
    }
    check_finite(sample_id, "preliminary_fused_loss", preliminary_loss);

    if (options.curriculum.mdc_enabled) {
        ev.modality = assess_modalities(positive_losses, clamp_loss(preliminary_loss), modality_options(options));
    } else {
        ev.modality = fixed_modality_state(positive_losses, clamp_loss(preliminary_loss), options);
    }
    check_finite(sample_id, "d_gmr", ev.modality.d_gmr);
    check_finite(sample_id, "d_hmir", ev.modality.d_hmir);
    check_finite(sample_id, "d_fuse", ev.modality.d_fuse);

    if (kind == FusionKind::gated) {
        fused_logits = fuse_gated(logits, ev.modality.omega_star, ev.modality.active);
    }
    ev.fused_probs = softmax(fused_logits);
    const double loss_concat = cross_entropy(ev.fused_probs, sample.label);
    check_finite(sample_id, "fused_loss", loss_concat);

    PredictionSet preds{ev.probs, ev.fused_probs, sample.label};
    ev.difficulty = score_difficulty(ev.losses, loss_concat, preds, options.curriculum.orientation, psi);
    check_finite(sample_id, "d_loss", ev.difficulty.d_loss);
    check_finite(sample_id, "d_consistency", ev.difficulty.d_consistency);
    check_finite(sample_id, "d_stability", ev.difficulty.d_stability);
    if (!options.curriculum.sdc_enabled) ev.difficulty.d_task = 1.0;
    check_finite(sample_id, "d_task", ev.difficulty.d_task);

    ev.w_factor = ev.difficulty.d_task * ev.modality.d_fuse;
    return ev;
}

struct BatchGradients {
    std::vector<EncoderGradients> encoders;
    std::optional<EncoderGradients> head;
};

// Adds the gradient of scale * (fused_loss + sum_m delta_m unimodal_loss_m).
void accumulate_gradients(const MultimodalModel& model, const SampleEval& ev, const TrainOptions& options,
                          double scale, BatchGradients& out) {
    const std::size_t n_mod = model.num_modalities();
    const std::size_t k = model.num_classes();
    std::vector<double> fused_residual(ev.fused_probs);
    fused_residual[ev.label] -= 1.0;

    std::vector<std::vector<double>> grad_logits(n_mod, std::vector<double>(k, 0.0));
    for (std::size_t m = 0; m < n_mod; ++m) {
        const double delta = ev.difficulty.delta_weights[m];
        for (std::size_t c = 0; c < k; ++c) {
            grad_logits[m][c] = scale * delta * (ev.probs[m][c] - (c == ev.label ? 1.0 : 0.0));
        }
    }
    std::vector<std::vector<double>> grad_features(n_mod);
    switch (options.fusion.kind) {
        case FusionKind::gated:
            for (std::size_t m : ev.modality.active) {
                const double w = scale * ev.modality.omega_star[m];
                for (std::size_t c = 0; c < k; ++c) grad_logits[m][c] += w * fused_residual[c];
            }
            break;
        case FusionKind::summation:
        case FusionKind::uniform_weighted: {
            const double w = options.fusion.kind == FusionKind::summation
                                 ? scale
                                 : scale / static_cast<double>(n_mod);
            for (std::size_t m = 0; m < n_mod; ++m) {
                for (std::size_t c = 0; c < k; ++c) grad_logits[m][c] += w * fused_residual[c];
            }
            break;
        }
        case FusionKind::concat_head: {
            std::vector<double> head_grad(fused_residual);
            for (double& g : head_grad) g *= scale;
            std::vector<double> grad_input;
            *out.head += backward(*model.head, ev.head_pass->cache, head_grad, {}, &grad_input);
            std::size_t offset = 0;
            for (std::size_t m = 0; m < n_mod; ++m) {
                const std::size_t width = ev.unimodal[m].cache.features().size();
                grad_features[m].assign(grad_input.begin() + static_cast<std::ptrdiff_t>(offset),
                                        grad_input.begin() + static_cast<std::ptrdiff_t>(offset + width));
                offset += width;
            }
            break;
        }
    }
    for (std::size_t m = 0; m < n_mod; ++m) {
        out.encoders[m] += backward(model.encoders[m], ev.unimodal[m].cache, grad_logits[m], grad_features[m]);
    }
}

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    double hi = values[mid];
    if (values.size() % 2 == 1) return hi;
    const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

}  // namespace

NumericAbort::NumericAbort(std::size_t sample_id, std::string metric, double value)
    : std::runtime_error("numeric abort: sample " + std::to_string(sample_id) + ", metric " + metric + " = " +
                         std::to_string(value)),
      sample_id_(sample_id),
      metric_(std::move(metric)) {}

double solve_v(double w_factor, double task_loss, double eta) {
    if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
    return std::clamp(1.0 - (w_factor * task_loss) / (2.0 * eta), 0.0, 1.0);
}

EtaKind parse_eta_kind(const std::string& name) {
    if (name == "linear") return EtaKind::linear;
    if (name == "exponential") return EtaKind::exponential;
    throw std::invalid_argument("unknown schedule kind '" + name + "'");
}

std::string to_string(EtaKind kind) { return kind == EtaKind::linear ? "linear" : "exponential"; }

double eta_at(const EtaSchedule& schedule, std::size_t t) {
    const double td = static_cast<double>(t);
    if (schedule.kind == EtaKind::linear) return schedule.eta0 * (1.0 + schedule.growth * td);
    return schedule.eta0 * std::pow(1.0 + schedule.growth, td);
}

MultimodalModel MultimodalModel::create(const std::vector<std::vector<std::size_t>>& encoder_dims,
                                        Activation activation, const FusionStrategy& fusion, std::uint64_t seed) {
    if (encoder_dims.empty()) throw std::invalid_argument("model needs at least one modality");
    MultimodalModel model;
    model.fusion = fusion;
    for (std::size_t m = 0; m < encoder_dims.size(); ++m) {
        model.encoders.push_back(MlpEncoder::glorot(encoder_dims[m], activation, mix_seed(seed, 1000 + m)));
        if (model.encoders.back().output_dim() != model.encoders.front().output_dim()) {
            throw ShapeError(static_cast<int>(encoder_dims[m].size()) - 2,
                             "modality " + std::to_string(m) + " encoder emits a different number of classes");
        }
    }
    if (fusion.kind == FusionKind::concat_head) {
        std::vector<std::size_t> dims{0};
        for (const auto& d : encoder_dims) dims[0] += d[d.size() - 2];
        dims.insert(dims.end(), fusion.head_hidden.begin(), fusion.head_hidden.end());
        dims.push_back(encoder_dims.front().back());
        model.head = MlpEncoder::glorot(dims, activation, mix_seed(seed, 999));
    }
    const std::size_t n_mod = encoder_dims.size();
    model.eval_omega_star.assign(n_mod, 1.5 / static_cast<double>(n_mod));
    model.eval_active.resize(n_mod);
    std::iota(model.eval_active.begin(), model.eval_active.end(), 0);
    return model;
}

std::vector<std::vector<double>> MultimodalModel::unimodal_logits(const SyntheticSample& sample) const {
    std::vector<std::vector<double>> z;
    for (std::size_t m = 0; m < encoders.size(); ++m) z.push_back(forward(encoders[m], sample.features[m]).logits);
    return z;
}

std::vector<double> MultimodalModel::predict(const SyntheticSample& sample) const {
    switch (fusion.kind) {
        case FusionKind::gated: return softmax(fuse_gated(unimodal_logits(sample), eval_omega_star, eval_active));
        case FusionKind::summation: return softmax(fuse_summation(unimodal_logits(sample)));
        case FusionKind::uniform_weighted: return softmax(fuse_uniform(unimodal_logits(sample)));
        case FusionKind::concat_head: {
            std::vector<ForwardResult> passes;
            for (std::size_t m = 0; m < encoders.size(); ++m) passes.push_back(forward(encoders[m], sample.features[m]));
            return softmax(fuse_concat(features_of(passes), *head).logits);
        }
    }
    return {};
}

double evaluate_accuracy(const MultimodalModel& model, const Dataset& data, std::span<const std::size_t> indices) {
    if (indices.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i : indices) {
        const auto p = model.predict(data.samples[i]);
        const auto pred = static_cast<std::size_t>(std::distance(p.begin(), std::max_element(p.begin(), p.end())));
        if (pred == data.samples[i].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

double modality_alignment(std::span<const std::vector<double>> features_a,
                          std::span<const std::vector<double>> features_b) {
    if (features_a.size() != features_b.size()) {
        throw std::invalid_argument("alignment needs equal sample counts");
    }
    if (features_a.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < features_a.size(); ++i) {
        const auto& a = features_a[i];
        const auto& b = features_b[i];
        if (a.size() != b.size()) throw std::invalid_argument("alignment needs equal feature widths");
        const double ma = a.empty() ? 0.0 : std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
        const double mb = b.empty() ? 0.0 : std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t d = 0; d < a.size(); ++d) {
            const double x = a[d] - ma;
            const double y = b[d] - mb;
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        const double cos = na > 0.0 && nb > 0.0 ? std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0) : 0.0;
        total += 0.5 * (1.0 + cos);
    }
    return total / static_cast<double>(features_a.size());
}

TrainRecord train_epoch(TrainState& state, const Dataset& data, std::span<const std::size_t> train_indices,
                        const TrainOptions& options, std::size_t epoch) {
    MultimodalModel& model = state.model;
    const std::size_t n_mod = model.num_modalities();
    if (data.num_modalities() != n_mod) throw std::invalid_argument("dataset and model modality counts differ");
    for (std::size_t m = 0; m < n_mod; ++m) {
        if (data.feature_dims[m] != model.encoders[m].input_dim()) {
            throw ShapeError(0, "modality " + std::to_string(m) + " features have width " +
                                    std::to_string(data.feature_dims[m]) + ", encoder expects " +
                                    std::to_string(model.encoders[m].input_dim()));
        }
    }
    if (model.num_classes() != data.n_classes) throw std::invalid_argument("encoders emit the wrong class count");
    if (options.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (state.prev_gates.size() < data.samples.size()) state.prev_gates.resize(data.samples.size());

    std::vector<std::size_t> order(train_indices.begin(), train_indices.end());
    std::mt19937_64 rng(mix_seed(options.seed ^ kShuffleStream, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    const MetricMask& mask = options.curriculum.metrics_enabled;
    TrainRecord rec;
    rec.epoch = epoch;
    rec.gates.assign(n_mod, 0.0);
    rec.gains.assign(n_mod, 0.0);
    rec.omegas.assign(n_mod, 0.0);
    std::vector<double> sum_omega_star(n_mod, 0.0);
    state.last_epoch.clear();

    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
        const std::size_t end = std::min(order.size(), start + options.batch_size);
        const MetricTriple psi = metric_weights(state.volatility, mask);

        std::vector<SampleEval> batch;
        batch.reserve(end - start);
        for (std::size_t b = start; b < end; ++b) {
            batch.push_back(evaluate_sample(state, data.samples[order[b]], order[b], options, psi));
        }

        if (!(state.schedule.eta0 > 0.0)) {
            std::vector<double> wl;
            for (const auto& ev : batch) wl.push_back(ev.w_factor * ev.difficulty.d_loss);
            state.schedule.eta0 = std::max(0.5 * median(wl), 1e-12);
        }
        const double eta = eta_at(state.schedule, epoch);

        BatchGradients grads;
        for (const auto& enc : model.encoders) grads.encoders.push_back(EncoderGradients::zeros_like(enc));
        if (model.head) grads.head = EncoderGradients::zeros_like(*model.head);

        MetricTriple batch_standardized{0.0, 0.0, 0.0};
        const double inv_batch = 1.0 / static_cast<double>(batch.size());
        for (auto& ev : batch) {
            ev.v = options.curriculum.self_paced_enabled ? solve_v(ev.w_factor, ev.difficulty.d_loss, eta) : 1.0;
            const double scale = ev.v * ev.w_factor * inv_batch;
            if (scale != 0.0) accumulate_gradients(model, ev, options, scale, grads);

            for (std::size_t j = 0; j < 3; ++j) batch_standardized[j] += ev.difficulty.standardized[j] * inv_batch;
            if (options.curriculum.mdc_enabled) state.prev_gates[ev.sample_id] = ev.modality.gates;

            rec.mean_loss += ev.difficulty.d_loss;
            rec.mean_v += ev.v;
            rec.mean_d_task += ev.difficulty.d_task;
            rec.mean_d_fuse += ev.modality.d_fuse;
            rec.mean_gmr += ev.modality.d_gmr;
            rec.mean_hmir += ev.modality.d_hmir;
            for (std::size_t m = 0; m < n_mod; ++m) {
                rec.gates[m] += ev.modality.gates[m];
                rec.gains[m] += ev.modality.gains[m];
                rec.omegas[m] += ev.modality.omega[m];
                sum_omega_star[m] += ev.modality.omega_star[m];
            }
            state.last_epoch.push_back({ev.sample_id, data.samples[ev.sample_id].true_difficulty,
                                        ev.difficulty.d_task, ev.modality.d_fuse, ev.v, ev.difficulty.d_loss});
        }

        for (std::size_t m = 0; m < n_mod; ++m) sgd_step(model.encoders[m], grads.encoders[m], options.lr);
        if (model.head) sgd_step(*model.head, *grads.head, options.lr);
        if (options.curriculum.sdc_enabled) state.volatility = update_volatility(state.volatility, batch_standardized);
    }

    const double n = static_cast<double>(std::max<std::size_t>(order.size(), 1));
    rec.mean_loss /= n;
    rec.mean_v /= n;
    rec.mean_d_task /= n;
    rec.mean_d_fuse /= n;
    rec.mean_gmr /= n;
    rec.mean_hmir /= n;
    for (std::size_t m = 0; m < n_mod; ++m) {
        rec.gates[m] /= n;
        rec.gains[m] /= n;
        rec.omegas[m] /= n;
        sum_omega_star[m] /= n;
    }
    rec.psi = metric_weights(state.volatility, mask);

    if (!order.empty()) {
        model.eval_omega_star = sum_omega_star;
        model.eval_active.clear();
        const double threshold = options.curriculum.gating_enabled ? options.curriculum.gate_threshold : -1.0;
        for (std::size_t m = 0; m < n_mod; ++m) {
            if (rec.gates[m] >= threshold) model.eval_active.push_back(m);
        }
        if (model.eval_active.empty()) {
            model.eval_active.push_back(static_cast<std::size_t>(
                std::distance(rec.gates.begin(), std::max_element(rec.gates.begin(), rec.gates.end()))));
        }
    }
    std::sort(state.last_epoch.begin(), state.last_epoch.end(),
              [](const SampleCurriculum& a, const SampleCurriculum& b) { return a.sample_id < b.sample_id; });

    rec.accuracy = evaluate_accuracy(model, data, train_indices);
    if (n_mod >= 2) {
        std::vector<std::vector<std::vector<double>>> per_mod(n_mod);
        for (std::size_t i : train_indices) {
            auto z = model.unimodal_logits(data.samples[i]);
            for (std::size_t m = 0; m < n_mod; ++m) per_mod[m].push_back(std::move(z[m]));
        }
        double total = 0.0;
        std::size_t pairs = 0;
        for (std::size_t a = 0; a < n_mod; ++a) {
            for (std::size_t b = a + 1; b < n_mod; ++b) {
                total += modality_alignment(per_mod[a], per_mod[b]);
                ++pairs;
            }
        }
        rec.modality_alignment = total / static_cast<double>(pairs);
    } else {
        rec.modality_alignment = 1.0;
    }
    return rec;
}

}  // namespace mmcl
