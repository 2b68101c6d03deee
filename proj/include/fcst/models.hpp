#pragma once

#include "fcst/dataset.hpp"
#include "fcst/forecaster.hpp"
#include "fcst/nn.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fcst::models {

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    bool shuffle_each_epoch = true;
};

struct LstmConfig {
    std::size_t layers = 2;
    std::size_t hidden_units = 64;
};

struct TcnConfig {
    std::size_t layers = 3;
    std::size_t channels = 64;
    std::vector<std::size_t> dilations{1, 2, 4};
    std::size_t kernel_size = 3;
    double dropout = 0.2;
    bool residual = true;
};

void validate(const TrainConfig& config);
void validate(const LstmConfig& config);
void validate(const TcnConfig& config);

/// 1 + (K - 1) * sum(dilations).
std::size_t receptive_field(const TcnConfig& config) noexcept;

/// Splits the run seed into independent streams (0: weight init, 1: batch
/// shuffling and dropout).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

/// A differentiable window -> horizon regressor over scalar inputs.
class SequenceModel {
public:
    explicit SequenceModel(data::WindowSpec spec) : spec_(spec) {}
    virtual ~SequenceModel() = default;
    SequenceModel(const SequenceModel&) = delete;
    SequenceModel& operator=(const SequenceModel&) = delete;

    virtual ForecasterKind kind() const = 0;
    /// windows: [B, W] -> predictions [B, H].
    virtual nn::Tensor forward(const nn::Tensor& windows, bool training, SeededRng& rng) const = 0;
    virtual nlohmann::json config_json() const = 0;

    const data::WindowSpec& spec() const noexcept { return spec_; }
    const std::vector<nn::NamedTensor>& named_parameters() const noexcept { return params_; }
    std::vector<nn::Tensor> parameters() const;
    std::size_t parameter_count() const;

    /// Single forward pass with dropout disabled and no graph recorded.
    std::vector<double> predict(std::span<const double> window) const;
    std::vector<std::vector<double>> predict_batch(std::span<const std::vector<double>> windows) const;

protected:
    void add_parameter(std::string name, nn::Tensor t) { params_.emplace_back(std::move(name), std::move(t)); }

private:
    data::WindowSpec spec_;
    std::vector<nn::NamedTensor> params_;
};

/// Stacked LSTM; the last hidden state of the top layer feeds a dense head.
class LstmModel final : public SequenceModel {
public:
    LstmModel(const LstmConfig& config, data::WindowSpec spec, std::uint64_t seed);

    ForecasterKind kind() const override { return ForecasterKind::lstm; }
    nn::Tensor forward(const nn::Tensor& windows, bool training, SeededRng& rng) const override;
    nlohmann::json config_json() const override;
    const LstmConfig& config() const noexcept { return config_; }

private:
    LstmConfig config_;
    std::vector<nn::LstmParams> layers_;
    nn::Dense head_;
};

/// Residual dilated-causal blocks (conv -> relu -> dropout, plus skip; a 1x1
/// projection where channel counts differ); the last timestep feeds a dense
/// head.
class TcnModel final : public SequenceModel {
public:
    TcnModel(const TcnConfig& config, data::WindowSpec spec, std::uint64_t seed);

    ForecasterKind kind() const override { return ForecasterKind::tcn; }
    nn::Tensor forward(const nn::Tensor& windows, bool training, SeededRng& rng) const override;
    nlohmann::json config_json() const override;
    const TcnConfig& config() const noexcept { return config_; }

private:
    struct Block {
        nn::Tensor kernel;  // [C_out, C_in, K]
        nn::Tensor bias;    // [C_out]
        nn::Tensor proj_kernel;  // [C_out, C_in, 1], only when C_in != C_out
        nn::Tensor proj_bias;
        std::size_t dilation = 1;
    };

    TcnConfig config_;
    std::vector<Block> blocks_;
    nn::Dense head_;
};

struct ModelConfigs {
    LstmConfig lstm;
    TcnConfig tcn;
};

/// Throws BadConfig for kinds other than lstm/tcn or invalid configs.
std::unique_ptr<SequenceModel> build_model(ForecasterKind kind, const ModelConfigs& configs, data::WindowSpec spec,
                                           std::uint64_t seed);

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;
};

struct TrainingLog {
    std::vector<EpochLog> epochs;
    double total_seconds = 0.0;

    /// "epoch,train_loss,val_loss,seconds" plus one row per epoch.
    std::string to_csv() const;
};

struct TrainOutcome {
    TrainingLog log;
    nn::AdamState optimizer;
};

/// Mini-batch Adam on MSE for exactly `config.epochs` epochs. Validation loss
/// is monitored, never used for selection. Pass `resume` to continue from a
/// saved optimizer state.
TrainOutcome train(SequenceModel& model, const data::DatasetSplits& splits, const TrainConfig& config,
                   const nn::AdamState* resume = nullptr);

/// Mean squared error of `model` over `samples` (inference mode).
double evaluate_loss(const SequenceModel& model, std::span<const data::WindowSample> samples);

// ---- checkpoints -----------------------------------------------------------

struct LoadedCheckpoint {
    std::unique_ptr<SequenceModel> model;
    nn::AdamState optimizer;
    std::uint64_t seed = 0;
};

nlohmann::json checkpoint_json(const SequenceModel& model, const nn::AdamState& optimizer, std::uint64_t seed);
LoadedCheckpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const SequenceModel& model, const nn::AdamState& optimizer,
                     std::uint64_t seed);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Adapts a trained model to the Forecaster interface.
class ModelForecaster final : public Forecaster {
public:
    explicit ModelForecaster(std::shared_ptr<const SequenceModel> model) : model_(std::move(model)) {}

    ForecasterKind kind() const override { return model_->kind(); }
    std::vector<double> predict(std::span<const double> window, std::size_t horizon) override;

private:
    std::shared_ptr<const SequenceModel> model_;
};

}  // namespace fcst::models
