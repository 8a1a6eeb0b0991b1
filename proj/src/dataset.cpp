#include "dpsc/dataset.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dpsc/errors.hpp"
#include "dpsc/rng.hpp"

namespace dpsc {

void LabeledDataset::push_back(std::span<const double> x, int label) {
    if (x.size() != dim) throw std::invalid_argument("push_back: feature dimension mismatch");
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
}

void LabeledDataset::validate() const {
    if (dim == 0) throw std::invalid_argument("dataset: dimension must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("dataset: need at least two classes");
    if (labels.empty()) throw std::invalid_argument("dataset: no rows");
    if (features.size() != labels.size() * dim)
        throw std::invalid_argument("dataset: feature matrix does not match label count");
    for (int y : labels)
        if (y < 0 || y >= num_classes) throw std::invalid_argument("dataset: label out of range");
    for (double v : features)
        if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite feature");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.dim = dim;
    out.num_classes = num_classes;
    out.features.reserve(indices.size() * dim);
    out.labels.reserve(indices.size());
    for (auto i : indices) out.push_back(row(i), labels[i]);
    return out;
}

LabeledDataset gen_gaussian_outlier(std::size_t n_major, std::span<const double> outlier_mean,
                                    std::uint64_t seed) {
    if (n_major == 0) throw std::invalid_argument("gen_gaussian_outlier: n_major must be >= 1");
    if (outlier_mean.size() != 2)
        throw std::invalid_argument("gen_gaussian_outlier: outlier mean must be 2-dimensional");

    Rng rng{seed, tag("gaussian_outlier")};
    LabeledDataset out;
    out.dim = 2;
    out.num_classes = 2;
    out.features.reserve((n_major + 1) * 2);
    for (std::size_t i = 0; i < n_major; ++i) {
        const double x[2] = {rng.normal(), rng.normal()};
        out.push_back(x, 1);
    }
    const double star[2] = {outlier_mean[0] + rng.normal(), outlier_mean[1] + rng.normal()};
    out.push_back(star, 0);
    return out;
}

namespace {

// Returns A with A A^T = cov, tolerating singular PSD input.
Eigen::MatrixXd psd_factor(const std::vector<double>& cov, std::size_t d) {
    Eigen::MatrixXd m(d, d);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) m(r, c) = cov[r * d + c];
    const double tol = 1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff());
    if (!m.isApprox(m.transpose(), 1e-12) && (m - m.transpose()).cwiseAbs().maxCoeff() > tol)
        throw std::invalid_argument("mixture: covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    Eigen::VectorXd ev = eig.eigenvalues();
    if (ev.minCoeff() < -tol) throw std::invalid_argument("mixture: covariance is not PSD");
    ev = ev.cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * ev.asDiagonal();
}

}  // namespace

LabeledDataset gen_mixture(const MixtureSpec& spec, std::uint64_t seed) {
    if (spec.components.empty()) throw std::invalid_argument("mixture: no components");
    const std::size_t d = spec.components.front().mean.size();
    if (d == 0) throw std::invalid_argument("mixture: empty mean");
    int max_label = 0;
    for (const auto& c : spec.components) {
        if (c.mean.size() != d) throw std::invalid_argument("mixture: inconsistent mean dimension");
        if (c.label < 0) throw std::invalid_argument("mixture: negative label");
        if (c.scale < 0.0 || !std::isfinite(c.scale))
            throw std::invalid_argument("mixture: scale must be finite and >= 0");
        if (!c.covariance.empty() && c.covariance.size() != d * d)
            throw std::invalid_argument("mixture: covariance must be d x d");
        max_label = std::max(max_label, c.label);
    }
    const int num_classes = spec.num_classes > 0 ? spec.num_classes : std::max(2, max_label + 1);
    if (max_label >= num_classes) throw std::invalid_argument("mixture: label exceeds num_classes");

    LabeledDataset out;
    out.dim = d;
    out.num_classes = num_classes;
    std::vector<double> z(d), x(d);
    for (std::size_t k = 0; k < spec.components.size(); ++k) {
        const auto& comp = spec.components[k];
        Rng rng{seed, tag("mixture"), k};
        std::optional<Eigen::MatrixXd> factor;
        if (!comp.covariance.empty()) factor = psd_factor(comp.covariance, d);
        for (std::size_t n = 0; n < comp.count; ++n) {
            for (auto& v : z) v = rng.normal();
            for (std::size_t r = 0; r < d; ++r) {
                double acc = 0.0;
                if (factor) {
                    for (std::size_t c = 0; c < d; ++c) acc += (*factor)(r, c) * z[c];
                } else {
                    acc = comp.scale * z[r];
                }
                x[r] = comp.mean[r] + acc;
            }
            out.push_back(x, comp.label);
        }
    }
    return out;
}

LabeledDataset subsample_class(const LabeledDataset& data, int class_id, double p0,
                               std::uint64_t seed) {
    if (class_id < 0 || class_id >= data.num_classes)
        throw std::invalid_argument("subsample_class: class_id out of range");
    if (!(p0 >= 0.0 && p0 <= 1.0))
        throw std::invalid_argument("subsample_class: p0 must lie in [0, 1]");
    Rng rng{seed, tag("subsample"), static_cast<std::uint64_t>(class_id)};
    std::vector<std::size_t> keep;
    keep.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        // One draw per target-class row regardless of p0 keeps streams aligned.
        if (data.labels[i] != class_id || rng.bernoulli(p0)) keep.push_back(i);
    }
    return data.subset(keep);
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data,
                                                double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split: train_fraction must lie in (0, 1)");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng{seed, tag("split")};
    std::shuffle(order.begin(), order.end(), rng.engine());
    const auto n_train = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(data.size())));
    std::span<const std::size_t> all(order);
    return {data.subset(all.first(n_train)), data.subset(all.subspan(n_train))};
}

LabeledDataset standardize(const LabeledDataset& data, const LabeledDataset& reference) {
    if (data.dim != reference.dim) throw std::invalid_argument("standardize: dimension mismatch");
    const std::size_t d = data.dim;
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    const double n = static_cast<double>(reference.size());
    for (std::size_t i = 0; i < reference.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += reference.row(i)[j] / n;
    for (std::size_t i = 0; i < reference.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double e = reference.row(i)[j] - mean[j];
            sd[j] += e * e / n;
        }
    for (auto& s : sd) s = s > 0.0 ? std::sqrt(s) : 1.0;
    LabeledDataset out = data;
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
            out.features[i * d + j] = (out.features[i * d + j] - mean[j]) / sd[j];
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        auto b = cell.find_first_not_of(" \t\r");
        auto e = cell.find_last_not_of(" \t\r");
        cells.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace

CsvDataset load_csv(const std::filesystem::path& path, const LabelColumn& label_column) {
    std::ifstream in(path);
    if (!in) throw IoError("load_csv: cannot open " + path.string());

    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        rows.push_back(split_line(line));
    }
    if (rows.empty()) throw EmptyDataError("load_csv: " + path.string() + " is empty");

    const std::size_t width = rows.front().size();
    if (width < 2) throw ParseError("load_csv: need at least one feature column and a label");

    // Resolve label index; a name lookup needs the header, detected below.
    auto is_header = [&](std::size_t label_idx) {
        for (std::size_t c = 0; c < width; ++c)
            if (c != label_idx && parse_number(rows.front()[c])) return false;
        return true;
    };

    std::size_t label_idx = width - 1;
    bool header = false;
    if (const auto* name = std::get_if<std::string>(&label_column)) {
        const auto& first = rows.front();
        auto it = std::find(first.begin(), first.end(), *name);
        if (it == first.end()) throw std::invalid_argument("load_csv: no column named " + *name);
        label_idx = static_cast<std::size_t>(it - first.begin());
        header = true;
    } else {
        if (const auto* idx = std::get_if<std::size_t>(&label_column)) label_idx = *idx;
        if (label_idx >= width) throw std::invalid_argument("load_csv: label column out of range");
        header = is_header(label_idx);
    }

    CsvDataset out;
    if (header) {
        out.header = rows.front();
        rows.erase(rows.begin());
    }
    if (rows.empty()) throw EmptyDataError("load_csv: " + path.string() + " has no data rows");

    std::vector<std::string> raw_labels;
    raw_labels.reserve(rows.size());
    out.data.dim = width - 1;
    out.data.features.reserve(rows.size() * (width - 1));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        if (cells.size() != width)
            throw ParseError("load_csv: row " + std::to_string(r + 1) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(width));
        for (std::size_t c = 0; c < width; ++c) {
            if (c == label_idx) continue;
            auto v = parse_number(cells[c]);
            if (!v || !std::isfinite(*v))
                throw ParseError("load_csv: non-numeric feature '" + cells[c] + "' at row " +
                                 std::to_string(r + 1) + ", column " + std::to_string(c + 1));
            out.data.features.push_back(*v);
        }
        raw_labels.push_back(cells[label_idx]);
    }

    bool numeric = std::all_of(raw_labels.begin(), raw_labels.end(),
                               [](const std::string& s) { return parse_number(s).has_value(); });
    std::vector<std::string> uniq = raw_labels;
    if (numeric) {
        std::sort(uniq.begin(), uniq.end(), [](const std::string& a, const std::string& b) {
            return *parse_number(a) < *parse_number(b);
        });
        uniq.erase(std::unique(uniq.begin(), uniq.end(),
                               [](const std::string& a, const std::string& b) {
                                   return *parse_number(a) == *parse_number(b);
                               }),
                   uniq.end());
    } else {
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    }
    for (const auto& s : raw_labels) {
        std::size_t k = 0;
        if (numeric) {
            const double v = *parse_number(s);
            while (*parse_number(uniq[k]) != v) ++k;
        } else {
            k = static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), s) - uniq.begin());
        }
        out.data.labels.push_back(static_cast<int>(k));
    }
    out.data.num_classes = std::max<int>(2, static_cast<int>(uniq.size()));
    out.label_names = std::move(uniq);
    return out;
}

void write_csv(const std::filesystem::path& path, const LabeledDataset& data, bool with_header) {
    std::ofstream out(path);
    if (!out) throw IoError("write_csv: cannot open " + path.string());
    out.precision(17);
    if (with_header) {
        for (std::size_t j = 0; j < data.dim; ++j) out << 'x' << j << ',';
        out << "label\n";
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data.row(i)) out << v << ',';
        out << data.labels[i] << '\n';
    }
    if (!out) throw IoError("write_csv: write failed for " + path.string());
}

}  // namespace dpsc
