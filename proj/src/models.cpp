#include "fcst/models.hpp"

#include "fcst/error.hpp"
#include "fcst/util.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace fcst::models {

namespace {

using nlohmann::json;
using nn::Tensor;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor batch_inputs(std::span<const data::WindowSample> samples, std::span<const std::size_t> idx, std::size_t W) {
    std::vector<double> x;
    x.reserve(idx.size() * W);
    for (auto i : idx) x.insert(x.end(), samples[i].input.begin(), samples[i].input.end());
    return Tensor::from_data({idx.size(), W}, std::move(x));
}

Tensor batch_targets(std::span<const data::WindowSample> samples, std::span<const std::size_t> idx, std::size_t H) {
    std::vector<double> y;
    y.reserve(idx.size() * H);
    for (auto i : idx) y.insert(y.end(), samples[i].target.begin(), samples[i].target.end());
    return Tensor::from_data({idx.size(), H}, std::move(y));
}

void check_samples(const SequenceModel& model, std::span<const data::WindowSample> samples) {
    for (const auto& s : samples) {
        if (s.input.size() != model.spec().window_len || s.target.size() != model.spec().horizon) {
            fail(ErrorCode::ShapeMismatch, "sample at origin " + std::to_string(s.origin_index) +
                                               " does not match the model's window spec");
        }
    }
}

constexpr std::size_t kInferenceBatch = 256;

}  // namespace

void validate(const TrainConfig& c) {
    if (c.epochs < 1) fail(ErrorCode::BadConfig, "epochs must be >= 1");
    if (c.batch_size < 1) fail(ErrorCode::BadConfig, "batch_size must be >= 1");
    if (!(c.learning_rate > 0.0)) fail(ErrorCode::BadConfig, "learning_rate must be > 0");
}

void validate(const LstmConfig& c) {
    if (c.layers < 1) fail(ErrorCode::BadConfig, "lstm.layers must be >= 1");
    if (c.hidden_units < 1) fail(ErrorCode::BadConfig, "lstm.hidden_units must be >= 1");
}

void validate(const TcnConfig& c) {
    if (c.layers < 1) fail(ErrorCode::BadConfig, "tcn.layers must be >= 1");
    if (c.channels < 1) fail(ErrorCode::BadConfig, "tcn.channels must be >= 1");
    if (c.kernel_size < 1) fail(ErrorCode::BadConfig, "tcn.kernel_size must be >= 1");
    if (c.dilations.size() != c.layers) {
        fail(ErrorCode::BadConfig, "tcn.dilations has " + std::to_string(c.dilations.size()) + " entries for " +
                                       std::to_string(c.layers) + " layers");
    }
    for (auto d : c.dilations) {
        if (d < 1) fail(ErrorCode::BadConfig, "tcn.dilations must be >= 1");
    }
    if (!(c.dropout >= 0.0 && c.dropout < 1.0)) fail(ErrorCode::BadConfig, "tcn.dropout must be in [0, 1)");
}

std::size_t receptive_field(const TcnConfig& c) noexcept {
    return 1 + (c.kernel_size - 1) * std::accumulate(c.dilations.begin(), c.dilations.end(), std::size_t{0});
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// ---- SequenceModel ----------------------------------------------------------

std::vector<Tensor> SequenceModel::parameters() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& [name, t] : params_) out.push_back(t);
    return out;
}

std::size_t SequenceModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

std::vector<double> SequenceModel::predict(std::span<const double> window) const {
    if (window.size() != spec_.window_len) {
        fail(ErrorCode::ShapeMismatch, "window has " + std::to_string(window.size()) + " values, model expects " +
                                           std::to_string(spec_.window_len));
    }
    nn::NoGradGuard no_grad;
    SeededRng unused(0);
    const Tensor x = Tensor::from_data({1, window.size()}, std::vector<double>(window.begin(), window.end()));
    const Tensor y = forward(x, false, unused);
    return std::vector<double>(y.data().begin(), y.data().end());
}

std::vector<std::vector<double>> SequenceModel::predict_batch(std::span<const std::vector<double>> windows) const {
    nn::NoGradGuard no_grad;
    SeededRng unused(0);
    const std::size_t W = spec_.window_len;
    const std::size_t H = spec_.horizon;
    std::vector<std::vector<double>> out;
    out.reserve(windows.size());
    for (std::size_t start = 0; start < windows.size(); start += kInferenceBatch) {
        const std::size_t end = std::min(windows.size(), start + kInferenceBatch);
        std::vector<double> x;
        x.reserve((end - start) * W);
        for (std::size_t i = start; i < end; ++i) {
            if (windows[i].size() != W) fail(ErrorCode::ShapeMismatch, "window " + std::to_string(i) + " has wrong length");
            x.insert(x.end(), windows[i].begin(), windows[i].end());
        }
        const Tensor y = forward(Tensor::from_data({end - start, W}, std::move(x)), false, unused);
        for (std::size_t r = 0; r < end - start; ++r) {
            out.emplace_back(y.data().begin() + static_cast<std::ptrdiff_t>(r * H),
                             y.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * H));
        }
    }
    return out;
}

// ---- LSTM -------------------------------------------------------------------

LstmModel::LstmModel(const LstmConfig& config, data::WindowSpec spec, std::uint64_t seed)
    : SequenceModel(spec), config_(config) {
    validate(config);
    SeededRng rng(derive_seed(seed, 0));
    std::size_t in = 1;
    for (std::size_t l = 0; l < config.layers; ++l) {
        layers_.push_back(nn::make_lstm_params(in, config.hidden_units, rng));
        const auto prefix = "lstm." + std::to_string(l) + ".";
        add_parameter(prefix + "w_input", layers_.back().w_input);
        add_parameter(prefix + "w_hidden", layers_.back().w_hidden);
        add_parameter(prefix + "bias", layers_.back().bias);
        in = config.hidden_units;
    }
    head_ = nn::make_dense(config.hidden_units, spec.horizon, rng);
    add_parameter("head.weight", head_.weight);
    add_parameter("head.bias", head_.bias);
}

Tensor LstmModel::forward(const Tensor& windows, bool /*training*/, SeededRng& /*rng*/) const {
    if (windows.rank() != 2 || windows.dim(1) != spec().window_len) {
        fail(ErrorCode::ShapeMismatch, "lstm: expected [B, " + std::to_string(spec().window_len) + "], got " +
                                           nn::shape_str(windows.shape()));
    }
    const std::size_t B = windows.dim(0);
    const std::size_t H = config_.hidden_units;
    std::vector<Tensor> seq;
    seq.reserve(spec().window_len);
    for (std::size_t t = 0; t < spec().window_len; ++t) seq.push_back(nn::slice_cols(windows, t, t + 1));
    const Tensor zeros = Tensor::zeros({B, H});
    for (const auto& layer : layers_) {
        seq = nn::lstm_layer(seq, layer, zeros, zeros);
    }
    return head_.forward(seq.back());
}

json LstmModel::config_json() const {
    return {{"layers", config_.layers}, {"hidden_units", config_.hidden_units}};
}

// ---- TCN --------------------------------------------------------------------

TcnModel::TcnModel(const TcnConfig& config, data::WindowSpec spec, std::uint64_t seed)
    : SequenceModel(spec), config_(config) {
    validate(config);
    SeededRng rng(derive_seed(seed, 0));
    const std::size_t C = config.channels;
    const std::size_t K = config.kernel_size;
    std::size_t in = 1;
    for (std::size_t l = 0; l < config.layers; ++l) {
        Block b;
        b.dilation = config.dilations[l];
        b.kernel = nn::glorot_uniform({C, in, K}, in * K, C * K, rng);
        b.bias = Tensor::zeros({C}, true);
        const auto prefix = "tcn." + std::to_string(l) + ".";
        add_parameter(prefix + "kernel", b.kernel);
        add_parameter(prefix + "bias", b.bias);
        if (config.residual && in != C) {
            b.proj_kernel = nn::glorot_uniform({C, in, 1}, in, C, rng);
            b.proj_bias = Tensor::zeros({C}, true);
            add_parameter(prefix + "proj_kernel", b.proj_kernel);
            add_parameter(prefix + "proj_bias", b.proj_bias);
        }
        blocks_.push_back(std::move(b));
        in = C;
    }
    head_ = nn::make_dense(C, spec.horizon, rng);
    add_parameter("head.weight", head_.weight);
    add_parameter("head.bias", head_.bias);
}

Tensor TcnModel::forward(const Tensor& windows, bool training, SeededRng& rng) const {
    if (windows.rank() != 2 || windows.dim(1) != spec().window_len) {
        fail(ErrorCode::ShapeMismatch, "tcn: expected [B, " + std::to_string(spec().window_len) + "], got " +
                                           nn::shape_str(windows.shape()));
    }
    const std::size_t B = windows.dim(0);
    const std::size_t T = spec().window_len;
    Tensor x = nn::reshape(windows, {B, 1, T});
    for (const auto& b : blocks_) {
        Tensor y = nn::add_channel_bias(nn::causal_conv1d(x, b.kernel, b.dilation), b.bias);
        y = nn::dropout(nn::relu(y), config_.dropout, rng, training);
        if (config_.residual) {
            const Tensor skip =
                b.proj_kernel.defined() ? nn::add_channel_bias(nn::causal_conv1d(x, b.proj_kernel, 1), b.proj_bias) : x;
            y = nn::add(y, skip);
        }
        x = y;
    }
    return head_.forward(nn::select_time(x, T - 1));
}

json TcnModel::config_json() const {
    return {{"layers", config_.layers},       {"channels", config_.channels}, {"dilations", config_.dilations},
            {"kernel_size", config_.kernel_size}, {"dropout", config_.dropout},  {"residual", config_.residual}};
}

std::unique_ptr<SequenceModel> build_model(ForecasterKind kind, const ModelConfigs& configs, data::WindowSpec spec,
                                           std::uint64_t seed) {
    if (spec.window_len < 1 || spec.horizon < 1) fail(ErrorCode::BadConfig, "window_len and horizon must be >= 1");
    switch (kind) {
        case ForecasterKind::lstm: return std::make_unique<LstmModel>(configs.lstm, spec, seed);
        case ForecasterKind::tcn: return std::make_unique<TcnModel>(configs.tcn, spec, seed);
        default: fail(ErrorCode::BadConfig, std::string(to_string(kind)) + " is not a trainable model");
    }
}

// ---- training ---------------------------------------------------------------

std::string TrainingLog::to_csv() const {
    std::string out = "epoch,train_loss,val_loss,seconds\n";
    for (const auto& e : epochs) {
        out += std::to_string(e.epoch) + ',' + format_double(e.train_loss) + ',' + format_double(e.val_loss) + ',' +
               format_double(e.seconds) + '\n';
    }
    return out;
}

double evaluate_loss(const SequenceModel& model, std::span<const data::WindowSample> samples) {
    if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
    check_samples(model, samples);
    nn::NoGradGuard no_grad;
    SeededRng unused(0);
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    double total = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += kInferenceBatch) {
        const std::span<const std::size_t> batch(idx.data() + start, std::min(kInferenceBatch, idx.size() - start));
        const Tensor pred = model.forward(batch_inputs(samples, batch, model.spec().window_len), false, unused);
        const Tensor loss = nn::mse_loss(pred, batch_targets(samples, batch, model.spec().horizon));
        total += loss.item() * static_cast<double>(batch.size());
    }
    return total / static_cast<double>(samples.size());
}

TrainOutcome train(SequenceModel& model, const data::DatasetSplits& splits, const TrainConfig& config,
                   const nn::AdamState* resume) {
    validate(config);
    if (splits.train.empty()) fail(ErrorCode::EmptyTrain, "training split is empty");
    check_samples(model, splits.train);

    TrainOutcome outcome;
    if (resume) outcome.optimizer = *resume;
    outcome.optimizer.learning_rate = config.learning_rate;

    SeededRng rng(derive_seed(config.seed, 1));
    auto params = model.parameters();
    std::vector<std::size_t> order(splits.train.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t W = model.spec().window_len;
    const std::size_t H = model.spec().horizon;

    const auto run_start = Clock::now();
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto epoch_start = Clock::now();
        if (config.shuffle_each_epoch) rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
            const std::span<const std::size_t> batch(order.data() + start,
                                                     std::min(config.batch_size, order.size() - start));
            for (auto& p : params) p.zero_grad();
            const Tensor pred = model.forward(batch_inputs(splits.train, batch, W), true, rng);
            const Tensor loss = nn::mse_loss(pred, batch_targets(splits.train, batch, H));
            if (!std::isfinite(loss.item())) {
                fail(ErrorCode::NumericError, "non-finite training loss at epoch " + std::to_string(epoch) +
                                                  ", batch " + std::to_string(batch_no) + " (loss = " +
                                                  format_double(loss.item()) + ")");
            }
            loss.backward();
            nn::adam_step(outcome.optimizer, params);
            loss_sum += loss.item() * static_cast<double>(batch.size());
        }
        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = loss_sum / static_cast<double>(order.size());
        entry.val_loss = evaluate_loss(model, splits.val);
        entry.seconds = seconds_since(epoch_start);
        outcome.log.epochs.push_back(entry);
    }
    outcome.log.total_seconds = seconds_since(run_start);
    return outcome;
}

// ---- checkpoints ------------------------------------------------------------

json checkpoint_json(const SequenceModel& model, const nn::AdamState& opt, std::uint64_t seed) {
    json params = json::object();
    json moments = json::object();
    const auto& named = model.named_parameters();
    for (std::size_t i = 0; i < named.size(); ++i) {
        const auto& [name, t] = named[i];
        params[name] = {{"shape", t.shape()}, {"values", std::vector<double>(t.data().begin(), t.data().end())}};
        if (i < opt.first_moment.size()) {
            moments[name] = {{"m", opt.first_moment[i]}, {"v", opt.second_moment[i]}};
        }
    }
    return {
        {"format", "fcst-checkpoint"},
        {"version", 1},
        {"rng", {{"algorithm", SeededRng::kAlgorithm}, {"seed", seed}}},
        {"model",
         {{"kind", to_string(model.kind())},
          {"window_len", model.spec().window_len},
          {"horizon", model.spec().horizon},
          {"config", model.config_json()}}},
        {"parameters", params},
        {"adam",
         {{"learning_rate", opt.learning_rate},
          {"beta1", opt.beta1},
          {"beta2", opt.beta2},
          {"epsilon", opt.epsilon},
          {"step_count", opt.step_count},
          {"moments", moments}}},
    };
}

LoadedCheckpoint checkpoint_from_json(const json& doc) {
    LoadedCheckpoint out;
    try {
        if (doc.at("format") != "fcst-checkpoint" || doc.at("version") != 1) {
            fail(ErrorCode::BadCheckpoint, "unsupported checkpoint format");
        }
        out.seed = doc.at("rng").at("seed").get<std::uint64_t>();
        const auto& m = doc.at("model");
        const auto kind = parse_forecaster_kind(m.at("kind").get<std::string>());
        if (!kind) fail(ErrorCode::BadCheckpoint, "unknown model kind");
        data::WindowSpec spec{m.at("window_len").get<std::size_t>(), m.at("horizon").get<std::size_t>()};
        ModelConfigs configs;
        const auto& c = m.at("config");
        if (*kind == ForecasterKind::lstm) {
            configs.lstm.layers = c.at("layers").get<std::size_t>();
            configs.lstm.hidden_units = c.at("hidden_units").get<std::size_t>();
        } else if (*kind == ForecasterKind::tcn) {
            configs.tcn.layers = c.at("layers").get<std::size_t>();
            configs.tcn.channels = c.at("channels").get<std::size_t>();
            configs.tcn.dilations = c.at("dilations").get<std::vector<std::size_t>>();
            configs.tcn.kernel_size = c.at("kernel_size").get<std::size_t>();
            configs.tcn.dropout = c.at("dropout").get<double>();
            configs.tcn.residual = c.at("residual").get<bool>();
        }
        out.model = build_model(*kind, configs, spec, out.seed);

        const auto& params = doc.at("parameters");
        const auto& adam = doc.at("adam");
        const auto& moments = adam.at("moments");
        out.optimizer.learning_rate = adam.at("learning_rate").get<double>();
        out.optimizer.beta1 = adam.at("beta1").get<double>();
        out.optimizer.beta2 = adam.at("beta2").get<double>();
        out.optimizer.epsilon = adam.at("epsilon").get<double>();
        out.optimizer.step_count = adam.at("step_count").get<std::uint64_t>();
        if (params.size() != out.model->named_parameters().size()) {
            fail(ErrorCode::BadCheckpoint, "parameter set does not match model architecture");
        }
        for (auto [name, t] : out.model->named_parameters()) {
            const auto& p = params.at(name);
            if (p.at("shape").get<nn::Shape>() != t.shape()) {
                fail(ErrorCode::BadCheckpoint, "shape mismatch for parameter " + name);
            }
            const auto values = p.at("values").get<std::vector<double>>();
            if (values.size() != t.numel()) fail(ErrorCode::BadCheckpoint, "value count mismatch for " + name);
            std::copy(values.begin(), values.end(), t.mutable_data().begin());
            if (!moments.empty()) {
                auto mv = moments.at(name).at("m").get<std::vector<double>>();
                auto vv = moments.at(name).at("v").get<std::vector<double>>();
                if (mv.size() != t.numel() || vv.size() != t.numel()) {
                    fail(ErrorCode::BadCheckpoint, "moment size mismatch for " + name);
                }
                out.optimizer.first_moment.push_back(std::move(mv));
                out.optimizer.second_moment.push_back(std::move(vv));
            }
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::BadCheckpoint, e.what());
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const SequenceModel& model, const nn::AdamState& optimizer,
                     std::uint64_t seed) {
    write_file(path, checkpoint_json(model, optimizer, seed).dump() + "\n");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        fail(ErrorCode::BadCheckpoint, path.string() + ": " + e.what());
    }
    return checkpoint_from_json(doc);
}

std::vector<double> ModelForecaster::predict(std::span<const double> window, std::size_t horizon) {
    if (horizon != model_->spec().horizon) {
        fail(ErrorCode::ShapeMismatch, "model was trained for horizon " + std::to_string(model_->spec().horizon));
    }
    return model_->predict(window);
}

}  // namespace fcst::models
