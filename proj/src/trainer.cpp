#include "dpsc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

#include "dpsc/errors.hpp"
#include "dpsc/rng.hpp"

namespace dpsc {

void PrivacyConfig::validate() const {
    if (!(sampling_rate > 0.0 && sampling_rate <= 1.0))
        throw std::invalid_argument("privacy: sampling rate must lie in (0, 1]");
    if (std::isnan(epsilon_target) || epsilon_target < 0.0)
        throw std::invalid_argument("privacy: epsilon must be >= 0");
    if (!is_private()) return;
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("privacy: delta in (0, 1)");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("privacy: clip norm must be > 0");
    if (noise_multiplier && !(*noise_multiplier > 0.0))
        throw std::invalid_argument("privacy: a private run needs sigma > 0");
}

namespace {

struct BatchForward {
    std::vector<HeadOutputs> outputs;
    std::vector<int> labels;
    std::vector<std::span<const double>> targets;
    std::vector<ForwardMode> modes;
};

BatchForward run_batch(const ParamVector& params, const ModelSpec& spec, const Batch& batch,
                       const LossSpec& loss) {
    if (!batch.data) throw std::invalid_argument("batch: no dataset");
    const auto& data = *batch.data;
    const auto c = static_cast<std::size_t>(spec.num_classes);
    if (loss.is_sat() && (!spec.abstention_head || !batch.sat_targets))
        throw std::invalid_argument("batch: SAT loss needs an abstention head and targets");
    if (loss.is_selectivenet() && !spec.selectivenet_heads)
        throw std::invalid_argument("batch: SelectiveNet loss needs SelectiveNet heads");

    BatchForward bf;
    for (auto i : batch.indices) {
        ForwardMode mode = Deterministic{};
        if (batch.dropout_seed) mode = DropoutPass{derive_seed({*batch.dropout_seed, i})};
        bf.outputs.push_back(forward(params, spec, data.row(i), mode));
        bf.labels.push_back(data.labels[i]);
        bf.modes.push_back(mode);
        if (loss.is_sat()) bf.targets.emplace_back(batch.sat_targets->data() + i * c, c);
    }
    return bf;
}

void check_finite(std::span<const double> g) {
    for (double v : g)
        if (!std::isfinite(v)) throw NumericError("non-finite gradient");
}

}  // namespace

std::vector<std::vector<double>> per_sample_grad(const ParamVector& params, const ModelSpec& spec,
                                                 const Batch& batch, const LossSpec& loss) {
    if (batch.indices.empty()) throw std::invalid_argument("per_sample_grad: empty batch");
    auto bf = run_batch(params, spec, batch, loss);
    const auto og = objective_gradients(loss, bf.outputs, bf.labels, bf.targets);
    const double m = static_cast<double>(batch.indices.size());
    std::vector<std::vector<double>> grads(batch.indices.size());
    for (std::size_t k = 0; k < batch.indices.size(); ++k) {
        grads[k].assign(params.size(), 0.0);
        backward(params, spec, batch.data->row(batch.indices[k]), bf.modes[k], og.d_outputs[k],
                 grads[k], m);
        check_finite(grads[k]);
    }
    return grads;
}

std::vector<double> batch_gradient(const ParamVector& params, const ModelSpec& spec,
                                   const Batch& batch, const LossSpec& loss) {
    std::vector<double> g(params.size(), 0.0);
    if (batch.indices.empty()) return g;
    auto bf = run_batch(params, spec, batch, loss);
    const auto og = objective_gradients(loss, bf.outputs, bf.labels, bf.targets);
    for (std::size_t k = 0; k < batch.indices.size(); ++k)
        backward(params, spec, batch.data->row(batch.indices[k]), bf.modes[k], og.d_outputs[k], g);
    check_finite(g);
    return g;
}

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double clip_to_norm(std::span<double> g, double c) {
    const double factor = 1.0 / std::max(1.0, l2_norm(g) / c);
    if (factor != 1.0)
        for (auto& v : g) v *= factor;
    return factor;
}

ParamVector dpsgd_step(const ParamVector& params, const ModelSpec& spec, const Batch& batch,
                       const LossSpec& loss, double clip_norm, double sigma, double eta,
                       std::uint64_t noise_seed) {
    if (!(clip_norm > 0.0)) throw std::invalid_argument("dpsgd_step: clip norm must be > 0");
    if (!(sigma >= 0.0)) throw std::invalid_argument("dpsgd_step: sigma must be >= 0");
    std::vector<double> sum(params.size(), 0.0);
    if (!batch.indices.empty()) {
        auto grads = per_sample_grad(params, spec, batch, loss);
        for (auto& g : grads) {
            clip_to_norm(g, clip_norm);
            if (l2_norm(g) > clip_norm * (1.0 + 1e-12))
                throw NumericError("dpsgd_step: clipped gradient exceeds the clip norm");
            for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += g[j];
        }
    }
    if (sigma > 0.0) {
        const double sd = sigma * clip_norm;
        if (!std::isfinite(sd)) throw NumericError("dpsgd_step: noise scale is not finite");
        Rng rng{noise_seed, tag("noise")};
        for (auto& v : sum) v += sd * rng.normal();
    }
    const double denom = static_cast<double>(std::max<std::size_t>(batch.indices.size(), 1));
    ParamVector next = params;
    for (std::size_t j = 0; j < sum.size(); ++j) next.values[j] -= eta * sum[j] / denom;
    return next;
}

ParamVector sgd_step(const ParamVector& params, const ModelSpec& spec, const Batch& batch,
                     const LossSpec& loss, double eta) {
    const auto g = batch_gradient(params, spec, batch, loss);
    ParamVector next = params;
    for (std::size_t j = 0; j < g.size(); ++j) next.values[j] -= eta * g[j];
    return next;
}

std::vector<std::size_t> poisson_sample(std::size_t n, double q, std::uint64_t seed,
                                        std::size_t step) {
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("poisson_sample: q in (0, 1]");
    std::vector<std::size_t> out;
    if (q == 1.0) {
        out.resize(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = i;
        return out;
    }
    Rng rng{seed, tag("batch"), step};
    for (std::size_t i = 0; i < n; ++i)
        if (rng.bernoulli(q)) out.push_back(i);
    return out;
}

std::string dataset_fingerprint(const LabeledDataset& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    mix(&data.dim, sizeof data.dim);
    mix(&data.num_classes, sizeof data.num_classes);
    mix(data.features.data(), data.features.size() * sizeof(double));
    mix(data.labels.data(), data.labels.size() * sizeof(int));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

CheckpointLog make_checkpoint_log(const ModelSpec& spec, const LabeledDataset& eval_set) {
    CheckpointLog log;
    log.eval_set_id = dataset_fingerprint(eval_set);
    log.num_classes = spec.num_classes;
    return log;
}

void append_checkpoint(CheckpointLog& log, std::size_t time, const ParamVector& params,
                       const ModelSpec& spec, const LabeledDataset& eval_set) {
    if (!log.times.empty() && time <= log.times.back())
        throw std::invalid_argument("checkpoint times must increase");
    std::vector<int> preds(eval_set.size());
    std::vector<std::vector<double>> probs(eval_set.size());
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const auto out = forward(params, spec, eval_set.row(i));
        preds[i] = argmax(out.logits, spec.num_classes);
        probs[i] = softmax(out.logits);
    }
    log.times.push_back(time);
    log.predictions.push_back(std::move(preds));
    log.final_probs = std::move(probs);
}

TrainResult train(const LabeledDataset& data, const ModelSpec& spec, const TrainConfig& cfg,
                  const PrivacyConfig& privacy, const LabeledDataset& eval_set) {
    data.validate();
    spec.validate();
    cfg.loss.validate();
    privacy.validate();
    if (data.dim != spec.input_dim || eval_set.dim != spec.input_dim)
        throw std::invalid_argument("train: data dimension does not match the model");
    if (cfg.checkpoint_interval == 0)
        throw std::invalid_argument("train: checkpoint interval must be >= 1");
    if (privacy.steps > 0 && cfg.checkpoint_interval > privacy.steps)
        throw std::invalid_argument("train: checkpoint interval exceeds the step count");
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");

    TrainResult res;
    const bool priv = privacy.is_private();
    double sigma = 0.0;
    if (priv) {
        sigma = privacy.noise_multiplier
                    ? *privacy.noise_multiplier
                    : calibrate_sigma(privacy.epsilon_target, privacy.delta,
                                      privacy.sampling_rate, privacy.steps);
        res.privacy = account(sigma, privacy.sampling_rate, privacy.steps, privacy.delta);
    } else {
        res.privacy.epsilon = kInfinity;
        res.privacy.delta = 0.0;
        res.privacy.sampling_rate = privacy.sampling_rate;
        res.privacy.steps = privacy.steps;
    }

    const auto c = static_cast<std::size_t>(spec.num_classes);
    std::vector<double> sat_targets;
    const SatLoss* sat = std::get_if<SatLoss>(&cfg.loss.kind);
    if (sat) {
        sat_targets.assign(data.size() * c, 0.0);
        for (std::size_t i = 0; i < data.size(); ++i)
            sat_targets[i * c + static_cast<std::size_t>(data.labels[i])] = 1.0;
    }

    ParamVector theta = init_params(spec, derive_seed({cfg.seed, tag("init")}));
    res.log = make_checkpoint_log(spec, eval_set);

    for (std::size_t t = 0; t < privacy.steps; ++t) {
        Batch batch;
        batch.data = &data;
        batch.indices = poisson_sample(data.size(), privacy.sampling_rate, cfg.seed, t);
        if (batch.indices.empty()) ++res.empty_batches;
        if (spec.dropout_rate > 0.0) batch.dropout_seed = derive_seed({cfg.seed, tag("dropout"), t});
        if (sat) {
            const double epoch = std::floor(static_cast<double>(t) * privacy.sampling_rate);
            if (epoch >= sat->burn_in_epochs) {
                for (auto i : batch.indices) {
                    const auto out = forward(theta, spec, data.row(i));
                    const auto p = softmax(std::span<const double>(out.logits).first(c));
                    sat_update_targets(std::span<double>(sat_targets).subspan(i * c, c), p,
                                       sat->momentum, epoch, sat->burn_in_epochs);
                }
            }
            batch.sat_targets = &sat_targets;
        }

        if (priv) {
            theta = dpsgd_step(theta, spec, batch, cfg.loss, privacy.clip_norm, sigma,
                               cfg.learning_rate, derive_seed({cfg.seed, tag("noise"), t}));
        } else {
            theta = sgd_step(theta, spec, batch, cfg.loss, cfg.learning_rate);
        }

        const std::size_t done = t + 1;
        if (done % cfg.checkpoint_interval == 0 || done == privacy.steps)
            append_checkpoint(res.log, done, theta, spec, eval_set);
    }
    if (privacy.steps == 0) append_checkpoint(res.log, 0, theta, spec, eval_set);
    res.params = std::move(theta);
    return res;
}

}  // namespace dpsc
