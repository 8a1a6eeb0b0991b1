#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace dpsc {

enum class Architecture { Linear, Mlp };

// Small classifier descriptor. The representation r(x) is x itself for the
// linear architecture and the last ReLU hidden layer for an MLP. Heads:
//   f: r -> C logits (C+1 with an abstention output)
//   g: r -> 1 selection logit      (SelectiveNet only)
//   h: r -> C auxiliary logits     (SelectiveNet only)
struct ModelSpec {
    Architecture architecture = Architecture::Linear;
    std::vector<std::size_t> hidden_sizes;
    std::size_t input_dim = 2;
    int num_classes = 2;
    bool abstention_head = false;
    bool selectivenet_heads = false;
    double dropout_rate = 0.0;

    void validate() const;
    int primary_outputs() const { return num_classes + (abstention_head ? 1 : 0); }
    std::size_t representation_dim() const;
};

// Matrix block inside the flat parameter vector (row-major; biases have cols = 1).
struct Block {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return rows * cols; }
    bool operator==(const Block&) const = default;
};

struct ParamVector {
    std::vector<double> values;
    std::vector<Block> layout;
    std::size_t size() const { return values.size(); }
};

std::vector<Block> param_layout(const ModelSpec& spec);
std::size_t param_count(const ModelSpec& spec);

// Weights ~ N(0, 2 / fan_in), biases zero.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

struct Deterministic {};
struct DropoutPass {
    std::uint64_t seed = 0;
};
using ForwardMode = std::variant<Deterministic, DropoutPass>;

struct HeadOutputs {
    std::vector<double> logits;
    double selection = 0.0;
    std::vector<double> auxiliary;
};

HeadOutputs forward(const ParamVector& params, const ModelSpec& spec, std::span<const double> x,
                    ForwardMode mode = Deterministic{});

// Reverse mode for one example: adds scale * (d_out . d outputs / d theta)
// into grad. d_out has the same shape as the forward outputs.
void backward(const ParamVector& params, const ModelSpec& spec, std::span<const double> x,
              ForwardMode mode, const HeadOutputs& d_out, std::span<double> grad,
              double scale = 1.0);

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);
double sigmoid(double z);

// Index of the largest of the first `count` entries; ties go to the lower index.
int argmax(std::span<const double> v, int count);

// Label prediction ignores the abstention logit.
int predict(const ParamVector& params, const ModelSpec& spec, std::span<const double> x);

}  // namespace dpsc
