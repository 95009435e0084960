#pragma once

#include "spade/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace spade {

inline constexpr int kLabelNormal = 0;
inline constexpr int kLabelAnomalous = 1;
inline constexpr int kLabelUnlabeled = -1;

struct Sample {
    std::vector<double> features;
    int label = kLabelUnlabeled;
    std::optional<int> anomaly_type;   // 0 = normal class once converted
    std::optional<double> timestamp;
};

/// Ordered collection of samples with a consistent feature dimensionality.
struct Dataset {
    std::string name;
    std::size_t dim = 0;
    std::vector<std::string> feature_names;  // size dim; defaults f0..f{d-1}
    std::vector<Sample> samples;

    Dataset() = default;
    Dataset(std::string name_, std::size_t dim_);

    void push_back(Sample s);
    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    const Sample& operator[](std::size_t i) const { return samples[i]; }
    Sample& operator[](std::size_t i) { return samples[i]; }

    Matrix feature_matrix() const;
    std::vector<int> labels() const;
    /// anomaly_type per sample; missing types come back as -1.
    std::vector<int> anomaly_types() const;
    Dataset subset(const std::vector<std::size_t>& indices) const;
    std::set<int> present_anomaly_types() const;  // excludes 0 and missing
};

/// Per-feature z-score transform, std floored at 1e-8.
struct Scaler {
    Vector mean;
    Vector std_dev;

    static Scaler fit(const Matrix& x);
    Matrix transform(const Matrix& x) const;
    Matrix inverse_transform(const Matrix& x) const;
};

/// Column roles for raw CSV ingestion. Empty feature list means "every
/// column that is not the class or timestamp column".
struct CsvSchema {
    std::vector<std::string> feature_columns;
    std::string class_column;
    std::string timestamp_column;  // empty = none
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Converts a multi-class dataset (raw class in anomaly_type) to anomaly form:
/// classes in normal_classes become label 0 / type 0, everything else label 1
/// with the original class as anomaly type.
Dataset to_anomaly_labels(const Dataset& ds, const std::set<int>& normal_classes);

/// Stratified-by-label split; second element is the test set.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double test_frac, std::uint64_t seed);

std::vector<std::vector<std::size_t>> partition_indices(std::size_t n, std::size_t k, std::uint64_t seed);
std::vector<Dataset> partition_disjoint(const Dataset& unlabeled, std::size_t k, std::uint64_t seed);

// Minimal RFC-4180 row codec shared by every CSV reader/writer in the project.
std::string csv_encode_row(const std::vector<std::string>& fields);
std::vector<std::string> csv_decode_row(const std::string& line);

}  // namespace spade
