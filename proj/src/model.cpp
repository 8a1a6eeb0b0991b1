#include "dpsc/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dpsc/errors.hpp"
#include "dpsc/rng.hpp"

namespace dpsc {

void ModelSpec::validate() const {
    if (input_dim < 1) throw std::invalid_argument("model: input_dim must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("model: num_classes must be >= 2");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw std::invalid_argument("model: dropout rate must lie in [0, 1)");
    if (abstention_head && selectivenet_heads)
        throw std::invalid_argument("model: abstention and SelectiveNet heads are exclusive");
    if (architecture == Architecture::Mlp) {
        if (hidden_sizes.empty()) throw std::invalid_argument("model: MLP needs hidden layers");
        for (auto h : hidden_sizes)
            if (h == 0) throw std::invalid_argument("model: hidden sizes must be positive");
    }
}

std::size_t ModelSpec::representation_dim() const {
    if (architecture == Architecture::Linear || hidden_sizes.empty()) return input_dim;
    return hidden_sizes.back();
}

std::vector<Block> param_layout(const ModelSpec& spec) {
    spec.validate();
    std::vector<Block> out;
    std::size_t offset = 0;
    auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
        out.push_back({std::move(name), rows, cols, offset});
        offset += rows * cols;
    };
    std::size_t in = spec.input_dim;
    if (spec.architecture == Architecture::Mlp) {
        for (std::size_t l = 0; l < spec.hidden_sizes.size(); ++l) {
            const auto h = spec.hidden_sizes[l];
            add("hidden" + std::to_string(l) + ".weight", h, in);
            add("hidden" + std::to_string(l) + ".bias", h, 1);
            in = h;
        }
    }
    const auto c = static_cast<std::size_t>(spec.num_classes);
    add("f.weight", static_cast<std::size_t>(spec.primary_outputs()), in);
    add("f.bias", static_cast<std::size_t>(spec.primary_outputs()), 1);
    if (spec.selectivenet_heads) {
        add("g.weight", 1, in);
        add("g.bias", 1, 1);
        add("h.weight", c, in);
        add("h.bias", c, 1);
    }
    return out;
}

std::size_t param_count(const ModelSpec& spec) {
    const auto layout = param_layout(spec);
    return layout.back().offset + layout.back().size();
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    ParamVector p;
    p.layout = param_layout(spec);
    p.values.assign(p.layout.back().offset + p.layout.back().size(), 0.0);
    for (std::size_t b = 0; b < p.layout.size(); ++b) {
        const auto& blk = p.layout[b];
        if (blk.cols == 1 && blk.name.ends_with(".bias")) continue;
        Rng rng{seed, tag("init"), b};
        const double sd = std::sqrt(2.0 / static_cast<double>(blk.cols));
        for (std::size_t i = 0; i < blk.size(); ++i) p.values[blk.offset + i] = sd * rng.normal();
    }
    return p;
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<double> log_softmax(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double z : logits) s += std::exp(z - m);
    const double lse = m + std::log(s);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) s += (out[i] = std::exp(logits[i] - m));
    for (auto& v : out) v /= s;
    return out;
}

int argmax(std::span<const double> v, int count) {
    int best = 0;
    for (int i = 1; i < count; ++i)
        if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
    return best;
}

namespace {

// Activations kept for the reverse pass: inputs[l] feeds layer l; heads read
// inputs.back(). masks[l] multiplies the ReLU output of hidden layer l.
struct Tape {
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> masks;
};

void check_layout(const ParamVector& params, const ModelSpec& spec) {
    const std::size_t n_hidden =
        spec.architecture == Architecture::Mlp ? spec.hidden_sizes.size() : 0;
    const std::size_t blocks = 2 * n_hidden + 2 + (spec.selectivenet_heads ? 4 : 0);
    const auto& L = params.layout;
    if (L.size() != blocks || L.front().cols != spec.input_dim ||
        L[2 * n_hidden].rows != static_cast<std::size_t>(spec.primary_outputs()) ||
        params.values.size() != L.back().offset + L.back().size())
        throw std::invalid_argument("parameter vector does not match model spec");
}

void affine(const std::vector<double>& theta, const Block& w, const Block& b,
            std::span<const double> in, std::span<double> out) {
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double* wr = theta.data() + w.offset + r * w.cols;
        double acc = theta[b.offset + r];
        for (std::size_t c = 0; c < w.cols; ++c) acc += wr[c] * in[c];
        out[r] = acc;
    }
}

HeadOutputs run_forward(const ParamVector& params, const ModelSpec& spec,
                        std::span<const double> x, const ForwardMode& mode, Tape* tape) {
    if (x.size() != spec.input_dim) throw std::invalid_argument("forward: dimension mismatch");
    check_layout(params, spec);

    const auto& L = params.layout;
    const auto& th = params.values;
    std::vector<double> cur(x.begin(), x.end());
    std::size_t blk = 0;

    const auto* drop = std::get_if<DropoutPass>(&mode);
    const double o = spec.dropout_rate;
    const bool masking = drop != nullptr && o > 0.0;

    if (spec.architecture == Architecture::Mlp) {
        for (std::size_t l = 0; l < spec.hidden_sizes.size(); ++l, blk += 2) {
            std::vector<double> z(L[blk].rows);
            affine(th, L[blk], L[blk + 1], cur, z);
            std::vector<double> a(z.size()), mask(z.size(), 1.0);
            if (masking) {
                Rng rng{drop->seed, tag("dropout"), l};
                const double keep_scale = 1.0 / (1.0 - o);
                for (auto& m : mask) m = rng.bernoulli(o) ? 0.0 : keep_scale;
            }
            for (std::size_t i = 0; i < z.size(); ++i) a[i] = (z[i] > 0.0 ? z[i] : 0.0) * mask[i];
            if (tape) {
                tape->inputs.push_back(cur);
                tape->pre.push_back(z);
                tape->masks.push_back(mask);
            }
            cur = std::move(a);
        }
    }
    if (tape) tape->inputs.push_back(cur);

    HeadOutputs out;
    out.logits.resize(L[blk].rows);
    affine(th, L[blk], L[blk + 1], cur, out.logits);
    blk += 2;
    if (spec.selectivenet_heads) {
        double s = 0.0;
        affine(th, L[blk], L[blk + 1], cur, std::span<double>(&s, 1));
        out.selection = s;
        blk += 2;
        out.auxiliary.resize(L[blk].rows);
        affine(th, L[blk], L[blk + 1], cur, out.auxiliary);
    }
    for (double v : out.logits)
        if (!std::isfinite(v)) throw NumericError("forward: non-finite logit");
    return out;
}

// grad[W] += scale * d ⊗ in, grad[b] += scale * d, returns scale-free W^T d into d_in.
void affine_back(const std::vector<double>& theta, const Block& w, const Block& b,
                 std::span<const double> in, std::span<const double> d, std::span<double> grad,
                 double scale, std::vector<double>* d_in) {
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double dr = d[r];
        if (dr == 0.0) continue;
        double* gw = grad.data() + w.offset + r * w.cols;
        for (std::size_t c = 0; c < w.cols; ++c) gw[c] += scale * dr * in[c];
        grad[b.offset + r] += scale * dr;
        if (d_in) {
            const double* wr = theta.data() + w.offset + r * w.cols;
            for (std::size_t c = 0; c < w.cols; ++c) (*d_in)[c] += wr[c] * dr;
        }
    }
}

}  // namespace

HeadOutputs forward(const ParamVector& params, const ModelSpec& spec, std::span<const double> x,
                    ForwardMode mode) {
    return run_forward(params, spec, x, mode, nullptr);
}

void backward(const ParamVector& params, const ModelSpec& spec, std::span<const double> x,
              ForwardMode mode, const HeadOutputs& d_out, std::span<double> grad, double scale) {
    if (grad.size() != params.values.size())
        throw std::invalid_argument("backward: gradient buffer size mismatch");
    Tape tape;
    run_forward(params, spec, x, mode, &tape);

    const auto& L = params.layout;
    const auto& th = params.values;
    const std::size_t n_hidden =
        spec.architecture == Architecture::Mlp ? spec.hidden_sizes.size() : 0;
    std::size_t blk = 2 * n_hidden;
    const bool need_din = n_hidden > 0;

    const auto& rep = tape.inputs.back();
    std::vector<double> d_rep(rep.size(), 0.0);
    affine_back(th, L[blk], L[blk + 1], rep, d_out.logits, grad, scale, need_din ? &d_rep : nullptr);
    if (spec.selectivenet_heads) {
        const double ds = d_out.selection;
        affine_back(th, L[blk + 2], L[blk + 3], rep, std::span<const double>(&ds, 1), grad, scale,
                    need_din ? &d_rep : nullptr);
        affine_back(th, L[blk + 4], L[blk + 5], rep, d_out.auxiliary, grad, scale,
                    need_din ? &d_rep : nullptr);
    }

    for (std::size_t l = n_hidden; l-- > 0;) {
        const auto& z = tape.pre[l];
        const auto& mask = tape.masks[l];
        std::vector<double> dz(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) dz[i] = z[i] > 0.0 ? d_rep[i] * mask[i] : 0.0;
        std::vector<double> d_in(tape.inputs[l].size(), 0.0);
        affine_back(th, L[2 * l], L[2 * l + 1], tape.inputs[l], dz, grad, scale,
                    l > 0 ? &d_in : nullptr);
        d_rep = std::move(d_in);
    }
}

int predict(const ParamVector& params, const ModelSpec& spec, std::span<const double> x) {
    const auto out = forward(params, spec, x);
    return argmax(out.logits, spec.num_classes);
}

}  // namespace dpsc
