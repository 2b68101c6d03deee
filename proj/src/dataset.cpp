#include "fcst/dataset.hpp"

#include "fcst/error.hpp"
#include "fcst/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fcst::data {

namespace {

using nlohmann::json;

// Splits one CSV record. Handles double-quoted fields with "" escapes; does
// not support newlines inside quotes (sensor logs never contain them).
std::vector<std::string> split_record(std::string_view line, char delim) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::optional<double> parse_reading(std::string_view field) {
    const auto text = trim(field);
    auto v = parse_double(text);
    if (!v || !std::isfinite(*v)) {
        return std::nullopt;
    }
    return v;
}

std::size_t floor_share(double fraction, std::size_t n) {
    // The epsilon absorbs binary representation error (0.7 * 90 == 62.99999...).
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

void append_number(std::string& out, double v) { out += format_double(v); }

std::vector<WindowSample> parse_split_csv(const std::string& text, const WindowSpec& spec, const std::string& name) {
    std::vector<WindowSample> samples;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        fail(ErrorCode::BadArtifact, name + ": missing header");
    }
    const std::size_t expected = 1 + spec.window_len + spec.horizon;
    if (split_record(line, ',').size() != expected) {
        fail(ErrorCode::BadArtifact, name + ": header column count does not match window spec");
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        WindowSample s;
        s.input.reserve(spec.window_len);
        s.target.reserve(spec.horizon);
        std::size_t col = 0;
        std::size_t start = 0;
        while (start <= line.size()) {
            auto end = line.find(',', start);
            if (end == std::string::npos) {
                end = line.size();
            }
            const std::string_view field(line.data() + start, end - start);
            const auto v = parse_double(trim(field));
            if (!v) {
                fail(ErrorCode::BadArtifact, name + ":" + std::to_string(line_no) + ": bad number");
            }
            if (col == 0) {
                s.origin_index = static_cast<std::size_t>(*v);
            } else if (col <= spec.window_len) {
                s.input.push_back(*v);
            } else {
                s.target.push_back(*v);
            }
            ++col;
            start = end + 1;
        }
        if (col != expected) {
            fail(ErrorCode::BadArtifact, name + ":" + std::to_string(line_no) + ": wrong column count");
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace

Standardizer::Standardizer(double mean, double std, double clamp_epsilon)
    : mean_(mean), std_(std::max(std, clamp_epsilon)), clamp_epsilon_(clamp_epsilon) {}

std::vector<double> Standardizer::transform(std::span<const double> x) const {
    std::vector<double> out(x.size());
    std::transform(x.begin(), x.end(), out.begin(), [this](double v) { return transform(v); });
    return out;
}

std::vector<double> Standardizer::inverse_transform(std::span<const double> z) const {
    std::vector<double> out(z.size());
    std::transform(z.begin(), z.end(), out.begin(), [this](double v) { return inverse_transform(v); });
    return out;
}

CleanSeries ingest_csv(const IngestConfig& config) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(config.csv_path, ec)) {
        fail(ErrorCode::IoError, "cannot read " + config.csv_path.string());
    }
    try {
        return ingest_csv_text(read_file(config.csv_path), config);
    } catch (const Error& e) {
        throw Error(e.code(), config.csv_path.string() + ": " + e.detail());
    }
}

CleanSeries ingest_csv_text(std::string_view text, const IngestConfig& config) {
    CleanSeries out;
    out.source_fingerprint = sha256_hex(text);

    std::size_t pos = 0;
    auto next_line = [&](std::string_view& line) {
        if (pos >= text.size()) {
            return false;
        }
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        line = text.substr(pos, end - pos);
        pos = end + 1;
        return true;
    };

    std::string_view header_line;
    if (!next_line(header_line)) {
        fail(ErrorCode::IoError, "empty CSV: no header row");
    }
    if (header_line.starts_with("\xEF\xBB\xBF")) {
        header_line.remove_prefix(3);
    }
    const auto header = split_record(header_line, config.delimiter);
    auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (trim(header[i]) == trim(name)) {
                return i;
            }
        }
        return std::nullopt;
    };
    const auto target = find_col(config.target_column);
    if (!target) {
        fail(ErrorCode::MissingColumn, "column '" + config.target_column + "' not in CSV header");
    }
    if (config.timestamp_column && !find_col(*config.timestamp_column)) {
        fail(ErrorCode::MissingColumn, "column '" + *config.timestamp_column + "' not in CSV header");
    }

    std::string_view line;
    while (next_line(line)) {
        if (trim(line).empty()) {
            continue;
        }
        const auto fields = split_record(line, config.delimiter);
        std::optional<double> v;
        if (*target < fields.size()) {
            v = parse_reading(fields[*target]);
        }
        if (v) {
            out.values.push_back(*v);
        } else {
            ++out.dropped_count;
        }
    }
    if (out.values.empty()) {
        fail(ErrorCode::EmptySeries, "no usable values in column '" + config.target_column + "'");
    }
    return out;
}

std::vector<WindowSample> make_windows(std::span<const double> series, const WindowSpec& spec) {
    if (spec.window_len < 1 || spec.horizon < 1) {
        fail(ErrorCode::BadConfig, "window_len and horizon must be >= 1");
    }
    const std::size_t span = spec.window_len + spec.horizon;
    if (series.size() < span) {
        fail(ErrorCode::SeriesTooShort, "series of length " + std::to_string(series.size()) +
                                            " is shorter than W + H = " + std::to_string(span));
    }
    const std::size_t count = series.size() - span + 1;
    std::vector<WindowSample> samples;
    samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        WindowSample s;
        s.origin_index = i;
        s.input.assign(series.begin() + static_cast<std::ptrdiff_t>(i),
                       series.begin() + static_cast<std::ptrdiff_t>(i + spec.window_len));
        s.target.assign(series.begin() + static_cast<std::ptrdiff_t>(i + spec.window_len),
                        series.begin() + static_cast<std::ptrdiff_t>(i + span));
        samples.push_back(std::move(s));
    }
    return samples;
}

DatasetSplits split_chronological(std::vector<WindowSample> samples, const SplitFractions& fractions) {
    const double sum = fractions.train + fractions.val + fractions.test;
    if (fractions.train < 0 || fractions.val < 0 || fractions.test < 0 || std::abs(sum - 1.0) > 1e-9) {
        fail(ErrorCode::BadFractions, "split fractions must be non-negative and sum to 1");
    }
    const std::size_t n = samples.size();
    if (n < 3) {
        fail(ErrorCode::NotEnoughSamples, "need at least 3 samples to split, have " + std::to_string(n));
    }
    const std::size_t n_train = floor_share(fractions.train, n);
    const std::size_t n_val = std::min(floor_share(fractions.val, n), n - n_train);

    DatasetSplits splits;
    splits.fractions = fractions;
    auto begin = std::make_move_iterator(samples.begin());
    splits.train.assign(begin, begin + static_cast<std::ptrdiff_t>(n_train));
    splits.val.assign(begin + static_cast<std::ptrdiff_t>(n_train),
                      begin + static_cast<std::ptrdiff_t>(n_train + n_val));
    splits.test.assign(begin + static_cast<std::ptrdiff_t>(n_train + n_val), std::make_move_iterator(samples.end()));
    return splits;
}

Standardizer fit_standardizer(std::span<const WindowSample> train, double clamp_epsilon) {
    if (train.empty()) {
        fail(ErrorCode::EmptyTrain, "cannot fit standardizer on an empty training split");
    }
    std::size_t lo = train.front().origin_index;
    std::size_t hi = 0;
    for (const auto& s : train) {
        lo = std::min(lo, s.origin_index);
        hi = std::max(hi, s.origin_index + s.input.size() + s.target.size());
    }
    std::vector<double> values(hi - lo, 0.0);
    std::vector<char> seen(hi - lo, 0);
    for (const auto& s : train) {
        const std::size_t base = s.origin_index - lo;
        for (std::size_t k = 0; k < s.input.size(); ++k) {
            values[base + k] = s.input[k];
            seen[base + k] = 1;
        }
        for (std::size_t k = 0; k < s.target.size(); ++k) {
            values[base + s.input.size() + k] = s.target[k];
            seen[base + s.input.size() + k] = 1;
        }
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (seen[i]) {
            sum += values[i];
            ++n;
        }
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (seen[i]) {
            const double d = values[i] - mean;
            ss += d * d;
        }
    }
    return Standardizer(mean, std::sqrt(ss / static_cast<double>(n)), clamp_epsilon);
}

void normalize_in_place(DatasetSplits& splits, const Standardizer& s) {
    for (auto* part : {&splits.train, &splits.val, &splits.test}) {
        for (auto& sample : *part) {
            for (auto& v : sample.input) v = s.transform(v);
            for (auto& v : sample.target) v = s.transform(v);
        }
    }
}

DatasetArtifact build_artifact(const CleanSeries& series, const WindowSpec& spec, const SplitFractions& fractions,
                               const SourceInfo& source) {
    DatasetArtifact artifact;
    artifact.spec = spec;
    artifact.splits = split_chronological(make_windows(series.values, spec), fractions);
    artifact.standardizer = fit_standardizer(artifact.splits.train);
    normalize_in_place(artifact.splits, artifact.standardizer);
    artifact.source = source;
    artifact.source.sha256 = series.source_fingerprint;
    artifact.source.series_length = series.values.size();
    artifact.source.dropped_count = series.dropped_count;
    return artifact;
}

std::string split_csv(std::span<const WindowSample> samples, const WindowSpec& spec) {
    std::string out = "origin_index";
    for (std::size_t i = 0; i < spec.window_len; ++i) out += ",x_" + std::to_string(i);
    for (std::size_t i = 0; i < spec.horizon; ++i) out += ",y_" + std::to_string(i);
    out += '\n';
    out.reserve(out.size() + samples.size() * (spec.window_len + spec.horizon) * 20);
    for (const auto& s : samples) {
        out += std::to_string(s.origin_index);
        for (double v : s.input) {
            out += ',';
            append_number(out, v);
        }
        for (double v : s.target) {
            out += ',';
            append_number(out, v);
        }
        out += '\n';
    }
    return out;
}

void save_artifact(const DatasetArtifact& a, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json manifest = {
        {"format", "fcst-dataset"},
        {"version", 1},
        {"window_len", a.spec.window_len},
        {"horizon", a.spec.horizon},
        {"fractions", {a.splits.fractions.train, a.splits.fractions.val, a.splits.fractions.test}},
        {"standardizer",
         {{"mean", a.standardizer.mean()},
          {"std", a.standardizer.std()},
          {"clamp_epsilon", a.standardizer.clamp_epsilon()}}},
        {"source",
         {{"sha256", a.source.sha256},
          {"path", a.source.path},
          {"target_column", a.source.target_column},
          {"series_length", a.source.series_length},
          {"dropped_count", a.source.dropped_count}}},
        {"counts",
         {{"total", a.splits.total()},
          {"train", a.splits.train.size()},
          {"val", a.splits.val.size()},
          {"test", a.splits.test.size()}}},
    };
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    write_file(dir / "train.csv", split_csv(a.splits.train, a.spec));
    write_file(dir / "val.csv", split_csv(a.splits.val, a.spec));
    write_file(dir / "test.csv", split_csv(a.splits.test, a.spec));
}

DatasetArtifact load_artifact(const std::filesystem::path& dir) {
    DatasetArtifact a;
    json m;
    try {
        m = json::parse(read_file(dir / "manifest.json"));
        if (m.at("format") != "fcst-dataset" || m.at("version") != 1) {
            fail(ErrorCode::BadArtifact, "unsupported dataset manifest format");
        }
        a.spec.window_len = m.at("window_len").get<std::size_t>();
        a.spec.horizon = m.at("horizon").get<std::size_t>();
        const auto& f = m.at("fractions");
        a.splits.fractions = {f.at(0).get<double>(), f.at(1).get<double>(), f.at(2).get<double>()};
        const auto& st = m.at("standardizer");
        a.standardizer =
            Standardizer(st.at("mean").get<double>(), st.at("std").get<double>(), st.at("clamp_epsilon").get<double>());
        const auto& src = m.at("source");
        a.source.sha256 = src.at("sha256").get<std::string>();
        a.source.path = src.at("path").get<std::string>();
        a.source.target_column = src.at("target_column").get<std::string>();
        a.source.series_length = src.at("series_length").get<std::size_t>();
        a.source.dropped_count = src.at("dropped_count").get<std::size_t>();
    } catch (const json::exception& e) {
        fail(ErrorCode::BadArtifact, (dir / "manifest.json").string() + ": " + e.what());
    }
    a.splits.train = parse_split_csv(read_file(dir / "train.csv"), a.spec, "train.csv");
    a.splits.val = parse_split_csv(read_file(dir / "val.csv"), a.spec, "val.csv");
    a.splits.test = parse_split_csv(read_file(dir / "test.csv"), a.spec, "test.csv");
    const auto& counts = m.at("counts");
    if (counts.at("train").get<std::size_t>() != a.splits.train.size() ||
        counts.at("val").get<std::size_t>() != a.splits.val.size() ||
        counts.at("test").get<std::size_t>() != a.splits.test.size()) {
        fail(ErrorCode::BadArtifact, "split row counts disagree with manifest");
    }
    return a;
}

}  // namespace fcst::data
