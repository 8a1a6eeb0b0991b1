#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace dpsc {

// Row-major N x d feature matrix with dense class labels 0..C-1.
struct LabeledDataset {
    std::size_t dim = 0;
    int num_classes = 2;
    std::vector<double> features;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * dim, dim};
    }

    // Appends one example; no validation beyond dimension.
    void push_back(std::span<const double> x, int label);

    // Throws std::invalid_argument when an invariant does not hold.
    void validate() const;

    LabeledDataset subset(std::span<const std::size_t> indices) const;
};

struct MixtureComponent {
    std::vector<double> mean;
    // Either an isotropic standard deviation or a full d x d covariance
    // (row-major). The covariance, when set, takes precedence.
    double scale = 1.0;
    std::vector<double> covariance;
    std::size_t count = 0;
    int label = 0;
};

struct MixtureSpec {
    std::vector<MixtureComponent> components;
    int num_classes = 0;  // 0: one more than the largest label
};

// Majority of n_major points from N(0, I) in 2D labelled 1, plus one outlier
// from N(outlier_mean, I) labelled 0 stored as the last row.
LabeledDataset gen_gaussian_outlier(std::size_t n_major, std::span<const double> outlier_mean,
                                    std::uint64_t seed);

LabeledDataset gen_mixture(const MixtureSpec& spec, std::uint64_t seed);

// Keeps each member of class_id independently with probability p0.
LabeledDataset subsample_class(const LabeledDataset& data, int class_id, double p0,
                               std::uint64_t seed);

// Seeded shuffle, then the first floor(train_fraction * N) rows go to train.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data,
                                                double train_fraction, std::uint64_t seed);

// Per-feature z-scoring with statistics taken from `reference`.
LabeledDataset standardize(const LabeledDataset& data, const LabeledDataset& reference);

using LabelColumn = std::variant<std::monostate, std::size_t, std::string>;

struct CsvDataset {
    LabeledDataset data;
    // label_names[k] is the raw label text mapped to class index k.
    std::vector<std::string> label_names;
    std::vector<std::string> header;
};

// Reads a comma-separated file. The first row is a header when every one of
// its feature cells is non-numeric. The label column defaults to the last
// one. Raw labels are mapped to 0..C-1 in ascending order (numeric order when
// every label parses as a number, lexicographic otherwise).
CsvDataset load_csv(const std::filesystem::path& path, const LabelColumn& label_column = {});

// Writes features at round-trip precision with the label as the final column.
void write_csv(const std::filesystem::path& path, const LabeledDataset& data,
               bool with_header = true);

}  // namespace dpsc
