#include "pan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

namespace pan {

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    out.num_classes = num_classes;
    gather(*this, indices, out.features, out.labels);
    return out;
}

void Dataset::validate() const {
    if (labels.empty()) throw ConfigError("dataset is empty");
    if (features.rows() != labels.size()) throw ShapeError("dataset: feature rows != label count");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw ShapeError("dataset: label out of range");
}

void gather(const Dataset& ds, const std::vector<std::size_t>& rows, Matrix& features, std::vector<int>& labels) {
    features = Matrix(rows.size(), ds.dim());
    labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::ranges::copy(ds.features.row(rows[i]), features.row(i).begin());
        labels[i] = ds.labels[rows[i]];
    }
}

namespace {

Matrix blob_means(std::size_t dim, std::size_t num_classes, double separation, Rng& rng) {
    Matrix means(num_classes, dim);
    for (std::size_t c = 0; c < num_classes; ++c) {
        auto row = means.row(c);
        for (auto& v : row) v = rng.gaussian();
        const double norm = l2_norm(row);
        for (auto& v : row) v = norm > 0.0 ? separation * v / norm : 0.0;
    }
    return means;
}

Dataset sample_blobs(const Matrix& means, std::size_t n, Rng& rng) {
    const std::size_t num_classes = means.rows();
    Dataset ds;
    ds.num_classes = num_classes;
    ds.features = Matrix(n, means.cols());
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(i % num_classes);
    rng.shuffle(ds.labels);
    for (std::size_t i = 0; i < n; ++i) {
        auto mu = means.row(static_cast<std::size_t>(ds.labels[i]));
        auto x = ds.features.row(i);
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = mu[k] + rng.gaussian();
    }
    return ds;
}

}  // namespace

Dataset gen_synthetic(std::size_t n, std::size_t dim, std::size_t num_classes, double separation, std::uint64_t seed) {
    if (num_classes == 0 || dim == 0) throw ConfigError("gen_synthetic: need positive dim and class count");
    if (n < num_classes) throw ConfigError("gen_synthetic: need n >= number of classes");
    Rng mean_rng = Rng::derive(seed, {0});
    Rng sample_rng = Rng::derive(seed, {1});
    return sample_blobs(blob_means(dim, num_classes, separation, mean_rng), n, sample_rng);
}

std::pair<Dataset, Dataset> gen_synthetic_split(std::size_t n_train, std::size_t n_test, std::size_t dim,
                                                std::size_t num_classes, double separation, std::uint64_t seed) {
    if (num_classes == 0 || dim == 0) throw ConfigError("gen_synthetic: need positive dim and class count");
    if (n_train < num_classes || n_test < num_classes) throw ConfigError("gen_synthetic: need n >= number of classes");
    Rng mean_rng = Rng::derive(seed, {0});
    const Matrix means = blob_means(dim, num_classes, separation, mean_rng);
    Rng train_rng = Rng::derive(seed, {1});
    Rng test_rng = Rng::derive(seed, {2});
    return {sample_blobs(means, n_train, train_rng), sample_blobs(means, n_test, test_rng)};
}

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open IDX file: " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off, const std::string& path) {
    if (off + 4 > b.size())
        throw FormatError(path + ": truncated header at byte offset " + std::to_string(off));
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t num_classes) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);

    if (be32(img, 0, images_path) != 0x00000803u) throw FormatError(images_path + ": bad magic at byte offset 0");
    if (be32(lab, 0, labels_path) != 0x00000801u) throw FormatError(labels_path + ": bad magic at byte offset 0");
    const std::size_t n_img = be32(img, 4, images_path);
    const std::size_t rows = be32(img, 8, images_path);
    const std::size_t cols = be32(img, 12, images_path);
    const std::size_t n_lab = be32(lab, 4, labels_path);
    if (n_img != n_lab)
        throw FormatError("IDX count mismatch: " + std::to_string(n_img) + " images vs " + std::to_string(n_lab) + " labels");
    if (n_img == 0) throw FormatError(images_path + ": dataset is empty");
    const std::size_t dim = rows * cols;
    if (dim == 0) throw FormatError(images_path + ": zero-sized images");
    if (img.size() < 16 + n_img * dim)
        throw FormatError(images_path + ": truncated pixel data at byte offset " + std::to_string(img.size()));
    if (lab.size() < 8 + n_lab)
        throw FormatError(labels_path + ": truncated label data at byte offset " + std::to_string(lab.size()));

    Dataset ds;
    ds.features = Matrix(n_img, dim);
    ds.labels.resize(n_img);
    std::size_t max_label = 0;
    for (std::size_t i = 0; i < n_img; ++i) {
        auto x = ds.features.row(i);
        for (std::size_t k = 0; k < dim; ++k) x[k] = img[16 + i * dim + k] / 255.0;
        ds.labels[i] = lab[8 + i];
        max_label = std::max<std::size_t>(max_label, lab[8 + i]);
    }
    ds.num_classes = num_classes ? num_classes : max_label + 1;
    if (max_label >= ds.num_classes) throw FormatError(labels_path + ": label exceeds class count");
    return ds;
}

std::vector<ClientDataset> partition_dirichlet(const Dataset& ds, const PartitionSpec& spec) {
    if (spec.clients == 0) throw ConfigError("partition: need at least one client");
    if (!(spec.alpha > 0.0)) throw ConfigError("partition: alpha must be positive");
    if (spec.clients > ds.size())
        throw ConfigError("partition: " + std::to_string(spec.clients) + " clients but only " +
                          std::to_string(ds.size()) + " samples");

    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

    const std::size_t k = spec.clients;
    for (std::size_t attempt = 0; attempt < spec.max_attempts; ++attempt) {
        Rng rng = Rng::derive(spec.seed, {attempt});
        std::vector<ClientDataset> parts(k);
        for (std::size_t c = 0; c < k; ++c) parts[c].client = c;

        for (auto cls : by_class) {
            if (cls.empty()) continue;
            rng.shuffle(cls);
            std::vector<double> logs(k);
            for (auto& v : logs) v = rng.log_gamma_sample(spec.alpha);
            const double mx = *std::max_element(logs.begin(), logs.end());
            std::vector<double> p(k);
            double sum = 0.0;
            for (std::size_t j = 0; j < k; ++j) sum += p[j] = std::exp(logs[j] - mx);
            double cum = 0.0;
            std::size_t start = 0;
            for (std::size_t j = 0; j < k; ++j) {
                cum += p[j] / sum;
                std::size_t end = j + 1 == k ? cls.size()
                                             : std::min(cls.size(), static_cast<std::size_t>(std::floor(cum * cls.size())));
                end = std::max(end, start);
                parts[j].indices.insert(parts[j].indices.end(), cls.begin() + start, cls.begin() + end);
                start = end;
            }
        }
        const bool ok = std::ranges::all_of(parts, [](const ClientDataset& c) { return !c.indices.empty(); });
        if (ok) {
            for (auto& c : parts) std::ranges::sort(c.indices);
            return parts;
        }
    }
    throw ConfigError("partition: some client stayed empty after " + std::to_string(spec.max_attempts) + " draws");
}

std::vector<std::vector<std::size_t>> partition_counts(const Dataset& ds, const std::vector<ClientDataset>& parts) {
    std::vector<std::vector<std::size_t>> counts(parts.size(), std::vector<std::size_t>(ds.num_classes, 0));
    for (std::size_t k = 0; k < parts.size(); ++k)
        for (auto i : parts[k].indices) ++counts[k][static_cast<std::size_t>(ds.labels[i])];
    return counts;
}

double mean_label_tv_distance(const Dataset& ds, const std::vector<ClientDataset>& parts) {
    std::vector<double> global(ds.num_classes, 0.0);
    for (int y : ds.labels) global[static_cast<std::size_t>(y)] += 1.0 / static_cast<double>(ds.size());
    const auto counts = partition_counts(ds, parts);
    double total = 0.0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const double n = static_cast<double>(parts[k].size());
        double tv = 0.0;
        for (std::size_t c = 0; c < ds.num_classes; ++c) tv += std::abs(counts[k][c] / n - global[c]);
        total += 0.5 * tv;
    }
    return total / static_cast<double>(parts.size());
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t s = 0; s < n; s += batch_size)
        batches.emplace_back(order.begin() + s, order.begin() + std::min(n, s + batch_size));
    return batches;
}

}  // namespace pan
