#include "spade/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace spade {

Dataset::Dataset(std::string name_, std::size_t dim_) : name(std::move(name_)), dim(dim_) {
    feature_names.reserve(dim);
    for (std::size_t i = 0; i < dim; ++i) feature_names.push_back("f" + std::to_string(i));
}

void Dataset::push_back(Sample s) {
    if (dim == 0 && samples.empty()) {
        dim = s.features.size();
        if (feature_names.empty())
            for (std::size_t i = 0; i < dim; ++i) feature_names.push_back("f" + std::to_string(i));
    }
    if (s.features.size() != dim)
        throw std::invalid_argument("Dataset '" + name + "': sample dimension " +
                                    std::to_string(s.features.size()) + " != " + std::to_string(dim));
    samples.push_back(std::move(s));
}

Matrix Dataset::feature_matrix() const {
    Matrix x(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t j = 0; j < dim; ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = samples[i].features[j];
    return x;
}

std::vector<int> Dataset::labels() const {
    std::vector<int> y(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) y[i] = samples[i].label;
    return y;
}

std::vector<int> Dataset::anomaly_types() const {
    std::vector<int> t(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) t[i] = samples[i].anomaly_type.value_or(-1);
    return t;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset out(name, dim);
    out.feature_names = feature_names;
    out.samples.reserve(indices.size());
    for (std::size_t i : indices) out.samples.push_back(samples.at(i));
    return out;
}

std::set<int> Dataset::present_anomaly_types() const {
    std::set<int> types;
    for (const auto& s : samples)
        if (s.anomaly_type && *s.anomaly_type != 0) types.insert(*s.anomaly_type);
    return types;
}

// ---------------------------------------------------------------------------
// Scaler

Scaler Scaler::fit(const Matrix& x) {
    if (x.rows() == 0) throw std::invalid_argument("Scaler::fit: empty input");
    Scaler s;
    s.mean = x.colwise().mean();
    Matrix centered = x.rowwise() - s.mean.transpose();
    s.std_dev = (centered.array().square().colwise().mean()).sqrt();
    s.std_dev = s.std_dev.cwiseMax(1e-8);
    return s;
}

Matrix Scaler::transform(const Matrix& x) const {
    if (x.cols() != mean.size()) throw std::invalid_argument("Scaler::transform: dimension mismatch");
    return (x.rowwise() - mean.transpose()).array().rowwise() / std_dev.transpose().array();
}

Matrix Scaler::inverse_transform(const Matrix& x) const {
    if (x.cols() != mean.size()) throw std::invalid_argument("Scaler::inverse_transform: dimension mismatch");
    return (x.array().rowwise() * std_dev.transpose().array()).matrix().rowwise() + mean.transpose();
}

// ---------------------------------------------------------------------------
// CSV

std::string csv_encode_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\n\r") != std::string::npos) {
            out += '"';
            for (char c : f) {
                if (c == '"') out += '"';
                out += c;
            }
            out += '"';
        } else {
            out += f;
        }
    }
    return out;
}

std::vector<std::string> csv_decode_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

namespace {

double parse_double(const std::string& s, std::size_t row, const std::string& col) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = b + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    auto [p, ec] = std::from_chars(b, e, v);
    while (p < e && (*p == ' ' || *p == '\t')) ++p;
    if (ec != std::errc() || p != e)
        throw std::runtime_error("load_csv: row " + std::to_string(row) + ", column '" + col +
                                 "': cannot parse '" + s + "' as a number");
    return v;
}

int parse_int(const std::string& s, std::size_t row, const std::string& col) {
    double v = parse_double(s, row, col);
    double r = std::round(v);
    if (std::abs(v - r) > 1e-9)
        throw std::runtime_error("load_csv: row " + std::to_string(row) + ", column '" + col +
                                 "': expected an integer, got '" + s + "'");
    return static_cast<int>(r);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_csv: '" + path.string() + "' is empty");
    std::vector<std::string> header = csv_decode_row(line);

    std::map<std::string, std::size_t> col_index;
    for (std::size_t i = 0; i < header.size(); ++i) col_index[header[i]] = i;

    auto require = [&](const std::string& name) {
        auto it = col_index.find(name);
        if (it == col_index.end())
            throw std::runtime_error("load_csv: column '" + name + "' not found in '" + path.string() + "'");
        return it->second;
    };

    if (schema.class_column.empty()) throw std::invalid_argument("load_csv: schema needs a class column");
    std::size_t class_idx = require(schema.class_column);
    std::optional<std::size_t> ts_idx;
    if (!schema.timestamp_column.empty()) ts_idx = require(schema.timestamp_column);

    std::vector<std::string> feature_cols = schema.feature_columns;
    if (feature_cols.empty()) {
        for (const auto& h : header)
            if (h != schema.class_column && h != schema.timestamp_column) feature_cols.push_back(h);
    }
    if (feature_cols.empty()) throw std::invalid_argument("load_csv: no feature columns");
    std::vector<std::size_t> feat_idx;
    for (const auto& c : feature_cols) feat_idx.push_back(require(c));

    Dataset ds(path.stem().string(), feature_cols.size());
    ds.feature_names = feature_cols;

    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() && in.eof()) break;
        std::vector<std::string> fields = csv_decode_row(line);
        if (fields.size() != header.size())
            throw std::runtime_error("load_csv: row " + std::to_string(row) + " has " +
                                     std::to_string(fields.size()) + " columns, header has " +
                                     std::to_string(header.size()));
        Sample s;
        s.features.reserve(feat_idx.size());
        for (std::size_t j = 0; j < feat_idx.size(); ++j)
            s.features.push_back(parse_double(fields[feat_idx[j]], row, feature_cols[j]));
        s.anomaly_type = parse_int(fields[class_idx], row, schema.class_column);
        s.label = kLabelUnlabeled;  // raw class data; convert with to_anomaly_labels
        if (ts_idx) s.timestamp = parse_double(fields[*ts_idx], row, schema.timestamp_column);
        ds.push_back(std::move(s));
    }
    if (ds.empty()) throw std::runtime_error("load_csv: '" + path.string() + "' has no data rows");
    return ds;
}

Dataset to_anomaly_labels(const Dataset& ds, const std::set<int>& normal_classes) {
    if (normal_classes.empty()) throw std::invalid_argument("to_anomaly_labels: normal_classes is empty");
    std::set<int> present;
    for (const auto& s : ds.samples) {
        if (!s.anomaly_type) throw std::invalid_argument("to_anomaly_labels: sample without class value");
        present.insert(*s.anomaly_type);
    }
    for (int c : normal_classes)
        if (!present.count(c))
            throw std::invalid_argument("to_anomaly_labels: class " + std::to_string(c) + " not present");
    bool any_anomalous = false;
    for (int c : present)
        if (!normal_classes.count(c)) any_anomalous = true;
    if (!any_anomalous) throw std::invalid_argument("to_anomaly_labels: normal_classes covers every class");

    Dataset out(ds.name, ds.dim);
    out.feature_names = ds.feature_names;
    out.samples.reserve(ds.size());
    for (const auto& s : ds.samples) {
        Sample t = s;
        if (normal_classes.count(*s.anomaly_type)) {
            t.label = kLabelNormal;
            t.anomaly_type = 0;
        } else {
            t.label = kLabelAnomalous;
            t.anomaly_type = *s.anomaly_type;
        }
        out.samples.push_back(std::move(t));
    }
    return out;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double test_frac, std::uint64_t seed) {
    if (!(test_frac > 0.0 && test_frac < 1.0))
        throw std::invalid_argument("split_train_test: test_frac must be in (0,1)");
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < ds.size(); ++i) by_label[ds[i].label].push_back(i);

    Rng rng = make_rng(seed, /*stream=*/1);
    std::vector<std::size_t> train_idx, test_idx;
    for (auto& [label, idx] : by_label) {
        shuffle_indices(idx, rng);
        std::size_t n_test = static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(idx.size())));
        if (n_test == 0 || n_test == idx.size())
            throw std::invalid_argument("split_train_test: class " + std::to_string(label) +
                                        " too small to stratify (" + std::to_string(idx.size()) + " samples)");
        test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
        train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {ds.subset(train_idx), ds.subset(test_idx)};
}

std::vector<std::vector<std::size_t>> partition_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("partition_indices: K must be >= 1");
    if (k > n) throw std::invalid_argument("partition_indices: K=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
    Rng rng = make_rng(seed, /*stream=*/2);
    std::vector<std::size_t> order = shuffled_range(n, rng);
    std::vector<std::vector<std::size_t>> parts(k);
    std::size_t base = n / k, extra = n % k, pos = 0;
    for (std::size_t p = 0; p < k; ++p) {
        std::size_t len = base + (p < extra ? 1 : 0);
        parts[p].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                        order.begin() + static_cast<std::ptrdiff_t>(pos + len));
        std::sort(parts[p].begin(), parts[p].end());
        pos += len;
    }
    return parts;
}

std::vector<Dataset> partition_disjoint(const Dataset& unlabeled, std::size_t k, std::uint64_t seed) {
    auto parts = partition_indices(unlabeled.size(), k, seed);
    std::vector<Dataset> out;
    out.reserve(k);
    for (const auto& p : parts) out.push_back(unlabeled.subset(p));
    return out;
}

}  // namespace spade
