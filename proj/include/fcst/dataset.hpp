#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fcst::data {

struct IngestConfig {
    std::filesystem::path csv_path;
    std::string target_column = "LIT 301";
    std::optional<std::string> timestamp_column;
    char delimiter = ',';
};

/// Target column after cleaning. `values` holds only finite readings, in file
/// order; rows with a missing or unparsable target are counted in
/// `dropped_count`.
struct CleanSeries {
    std::vector<double> values;
    std::string source_fingerprint;  // SHA-256 of the raw file bytes, hex
    std::size_t dropped_count = 0;
};

struct WindowSpec {
    std::size_t window_len = 720;
    std::size_t horizon = 1;
};

/// input = series[origin, origin + W), target = series[origin + W, origin + W + H).
struct WindowSample {
    std::vector<double> input;
    std::vector<double> target;
    std::size_t origin_index = 0;
};

struct SplitFractions {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;
};

struct DatasetSplits {
    std::vector<WindowSample> train;
    std::vector<WindowSample> val;
    std::vector<WindowSample> test;
    SplitFractions fractions;

    std::size_t total() const noexcept { return train.size() + val.size() + test.size(); }
};

class Standardizer {
public:
    static constexpr double kDefaultClampEpsilon = 1e-8;

    Standardizer() = default;
    Standardizer(double mean, double std, double clamp_epsilon = kDefaultClampEpsilon);

    double mean() const noexcept { return mean_; }
    double std() const noexcept { return std_; }
    double clamp_epsilon() const noexcept { return clamp_epsilon_; }

    double transform(double x) const noexcept { return (x - mean_) / std_; }
    double inverse_transform(double z) const noexcept { return z * std_ + mean_; }
    std::vector<double> transform(std::span<const double> x) const;
    std::vector<double> inverse_transform(std::span<const double> z) const;

private:
    double mean_ = 0.0;
    double std_ = 1.0;
    double clamp_epsilon_ = kDefaultClampEpsilon;
};

struct SourceInfo {
    std::string sha256;
    std::string path;
    std::string target_column;
    std::size_t series_length = 0;
    std::size_t dropped_count = 0;
};

struct DatasetArtifact {
    WindowSpec spec;
    DatasetSplits splits;  // normalized values
    Standardizer standardizer;
    SourceInfo source;
};

CleanSeries ingest_csv(const IngestConfig& config);

/// Same as ingest_csv but over in-memory CSV text; the fingerprint is taken
/// over `text`.
CleanSeries ingest_csv_text(std::string_view text, const IngestConfig& config);

/// Stride-1 windows in origin order: exactly N - W - H + 1 samples.
std::vector<WindowSample> make_windows(std::span<const double> series, const WindowSpec& spec);

/// Chronological split: floor(train * n), floor(val * n), remainder to test.
DatasetSplits split_chronological(std::vector<WindowSample> samples, const SplitFractions& fractions = {});

/// Population mean/std over every series position covered by the training
/// windows (inputs and targets), each position counted once.
Standardizer fit_standardizer(std::span<const WindowSample> train,
                              double clamp_epsilon = Standardizer::kDefaultClampEpsilon);

/// Applies `s` to the inputs and targets of every sample in place.
void normalize_in_place(DatasetSplits& splits, const Standardizer& s);

/// ingest -> window -> split -> fit on train -> normalize.
DatasetArtifact build_artifact(const CleanSeries& series, const WindowSpec& spec, const SplitFractions& fractions,
                               const SourceInfo& source);

/// Directory layout: manifest.json, train.csv, val.csv, test.csv.
void save_artifact(const DatasetArtifact& artifact, const std::filesystem::path& dir);
DatasetArtifact load_artifact(const std::filesystem::path& dir);

std::string split_csv(std::span<const WindowSample> samples, const WindowSpec& spec);

}  // namespace fcst::data
