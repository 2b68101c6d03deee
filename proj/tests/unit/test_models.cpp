#include "fcst/error.hpp"
#include "fcst/models.hpp"
#include "fcst/synthetic.hpp"
#include "fcst/util.hpp"
#include "support/grad_check.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

using namespace fcst;
using namespace fcst::models;
using fcst::testing::gradient_error;
using fcst::testing::random_tensor;
using nn::Tensor;

namespace {

data::DatasetArtifact sine_artifact(std::size_t length, std::size_t W, std::size_t H = 1) {
    synth::SyntheticSpec spec;
    spec.length = length;
    spec.period = 25;
    data::CleanSeries s;
    s.values = synth::synthetic_series(spec);
    return data::build_artifact(s, {W, H}, {}, {});
}

Tensor find_param(const SequenceModel& m, const std::string& name) {
    for (const auto& [n, t] : m.named_parameters()) {
        if (n == name) return t;
    }
    ADD_FAILURE() << "no parameter " << name;
    return {};
}

// Parameter totals written out from the layer shapes.
std::size_t lstm_count_oracle(std::size_t layers, std::size_t hidden, std::size_t horizon) {
    std::size_t total = 0;
    std::size_t in = 1;
    for (std::size_t l = 0; l < layers; ++l) {
        total += in * 4 * hidden + hidden * 4 * hidden + 4 * hidden;
        in = hidden;
    }
    return total + hidden * horizon + horizon;
}

std::size_t tcn_count_oracle(const TcnConfig& c, std::size_t horizon) {
    std::size_t total = 0;
    std::size_t in = 1;
    for (std::size_t l = 0; l < c.layers; ++l) {
        total += c.channels * in * c.kernel_size + c.channels;
        if (c.residual && in != c.channels) total += c.channels * in + c.channels;
        in = c.channels;
    }
    return total + c.channels * horizon + horizon;
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no fcst::Error thrown";
    return ErrorCode::UsageError;
}

std::filesystem::path temp_file(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "fcst_models";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Config, Validation) {
    TcnConfig tcn;
    tcn.dilations = {1, 2};
    EXPECT_EQ(code_of([&] { validate(tcn); }), ErrorCode::BadConfig);
    tcn = {};
    tcn.dropout = 1.0;
    EXPECT_EQ(code_of([&] { validate(tcn); }), ErrorCode::BadConfig);
    TrainConfig train;
    train.epochs = 0;
    EXPECT_EQ(code_of([&] { validate(train); }), ErrorCode::BadConfig);
    train = {};
    train.batch_size = 0;
    EXPECT_EQ(code_of([&] { validate(train); }), ErrorCode::BadConfig);
    LstmConfig lstm;
    lstm.hidden_units = 0;
    EXPECT_EQ(code_of([&] { validate(lstm); }), ErrorCode::BadConfig);
    EXPECT_EQ(code_of([] { build_model(ForecasterKind::persistence, {}, {10, 1}, 0); }), ErrorCode::BadConfig);
}

TEST(Lstm, ParameterCount) {
    for (std::size_t layers : {1u, 2u, 3u}) {
        for (std::size_t hidden : {1u, 4u, 64u}) {
            for (std::size_t H : {1u, 3u}) {
                const LstmModel m({layers, hidden}, {20, H}, 0);
                EXPECT_EQ(m.parameter_count(), lstm_count_oracle(layers, hidden, H));
            }
        }
    }
    // Default configuration, written out by hand.
    const LstmModel d({}, {720, 1}, 0);
    EXPECT_EQ(d.parameter_count(), (4 * 64 * (1 + 64) + 4 * 64) + (4 * 64 * (64 + 64) + 4 * 64) + 64 + 1);
}

TEST(Tcn, ParameterCount) {
    for (bool residual : {true, false}) {
        for (std::size_t channels : {1u, 4u, 64u}) {
            TcnConfig c;
            c.residual = residual;
            c.channels = channels;
            const TcnModel m(c, {40, 2}, 0);
            EXPECT_EQ(m.parameter_count(), tcn_count_oracle(c, 2));
        }
    }
}

TEST(Tcn, ReceptiveField) {
    EXPECT_EQ(receptive_field(TcnConfig{}), 15u);
    TcnConfig c;
    c.layers = 2;
    c.dilations = {1, 8};
    c.kernel_size = 2;
    EXPECT_EQ(receptive_field(c), 10u);
}

TEST(Tcn, OutputIgnoresInputsOutsideReceptiveField) {
    TcnConfig c;
    c.channels = 8;
    const std::size_t W = 40;
    const TcnModel m(c, {W, 1}, 5);
    SeededRng rng(6);
    std::vector<double> x(W);
    for (double& v : x) v = rng.uniform(-1, 1);
    const auto base = m.predict(x);
    const std::size_t rf = receptive_field(c);
    for (std::size_t t = 0; t + rf < W; ++t) {
        auto y = x;
        y[t] += 10.0;
        ASSERT_EQ(m.predict(y), base) << "position " << t;
    }
    for (std::size_t t = W - rf; t < W; ++t) {
        auto y = x;
        y[t] += 10.0;
        EXPECT_NE(m.predict(y), base) << "position " << t;
    }
}

TEST(Models, ZeroedHeadReturnsBias) {
    for (auto kind : {ForecasterKind::lstm, ForecasterKind::tcn}) {
        ModelConfigs cfg;
        cfg.lstm = {1, 4};
        cfg.tcn.channels = 4;
        auto m = build_model(kind, cfg, {20, 2}, 1);
        auto w = find_param(*m, "head.weight");
        auto b = find_param(*m, "head.bias");
        for (double& v : w.mutable_data()) v = 0.0;
        b.mutable_data()[0] = 0.75;
        b.mutable_data()[1] = -1.5;
        std::vector<double> x(20, 3.0);
        EXPECT_EQ(m->predict(x), (std::vector<double>{0.75, -1.5}));
    }
}

TEST(Models, SameSeedSameWeights) {
    const LstmModel a({2, 8}, {10, 1}, 42);
    const LstmModel b({2, 8}, {10, 1}, 42);
    const LstmModel c({2, 8}, {10, 1}, 43);
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    const auto pc = c.parameters();
    bool differs = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_TRUE(std::equal(pa[i].data().begin(), pa[i].data().end(), pb[i].data().begin()));
        differs |= !std::equal(pa[i].data().begin(), pa[i].data().end(), pc[i].data().begin());
    }
    EXPECT_TRUE(differs);
}

TEST(Models, LstmGradientCheck) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const LstmModel m({2, 3}, {5, 2}, seed);
        SeededRng rng(seed + 1);
        const auto x = random_tensor({3, 5}, rng);
        auto inputs = m.parameters();
        inputs.push_back(x);
        const auto f = [&m](const std::vector<Tensor>& in) {
            SeededRng unused(0);
            return m.forward(in.back(), true, unused);
        };
        EXPECT_LT(gradient_error(f, inputs, seed), 1e-6) << "seed " << seed;
    }
}

TEST(Models, TcnGradientCheck) {
    TcnConfig c;
    c.channels = 4;
    for (bool training : {false, true}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const TcnModel m(c, {32, 1}, seed);
            SeededRng rng(seed + 1);
            const auto x = random_tensor({2, 32}, rng);
            auto inputs = m.parameters();
            inputs.push_back(x);
            const auto f = [&m, training, seed](const std::vector<Tensor>& in) {
                SeededRng drop(seed);
                return m.forward(in.back(), training, drop);
            };
            EXPECT_LT(gradient_error(f, inputs, seed), 1e-6) << "seed " << seed << " training " << training;
        }
    }
}

TEST(Training, DeterministicForFixedSeed) {
    const auto art = sine_artifact(400, 16);
    TrainConfig tc;
    tc.epochs = 2;
    tc.seed = 9;
    ModelConfigs cfg;
    cfg.lstm = {1, 6};
    cfg.tcn.channels = 6;
    for (auto kind : {ForecasterKind::lstm, ForecasterKind::tcn}) {
        auto a = build_model(kind, cfg, art.spec, tc.seed);
        auto b = build_model(kind, cfg, art.spec, tc.seed);
        const auto la = train(*a, art.splits, tc);
        const auto lb = train(*b, art.splits, tc);
        ASSERT_EQ(la.log.epochs.size(), 2u);
        for (std::size_t e = 0; e < 2; ++e) {
            EXPECT_EQ(la.log.epochs[e].train_loss, lb.log.epochs[e].train_loss);
            EXPECT_EQ(la.log.epochs[e].val_loss, lb.log.epochs[e].val_loss);
        }
        for (const auto& s : art.splits.test) ASSERT_EQ(a->predict(s.input), b->predict(s.input));
    }
}

TEST(Training, ReducesLossOnSine) {
    const auto art = sine_artifact(600, 20);
    TrainConfig tc;
    tc.epochs = 5;
    tc.learning_rate = 5e-3;
    auto m = build_model(ForecasterKind::tcn, {{1, 4}, {3, 8, {1, 2, 4}, 3, 0.0, true}}, art.spec, 0);
    const double before = evaluate_loss(*m, art.splits.val);
    const auto out = train(*m, art.splits, tc);
    EXPECT_LT(out.log.epochs.back().val_loss, before);
    EXPECT_EQ(out.optimizer.step_count, 5 * ((art.splits.train.size() + 31) / 32));
    const auto csv = out.log.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_loss,val_loss,seconds");
}

TEST(Training, NonFiniteLossAborts) {
    auto art = sine_artifact(200, 10);
    art.splits.train[3].target[0] = std::numeric_limits<double>::quiet_NaN();
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 1000;
    auto m = build_model(ForecasterKind::lstm, {{1, 2}, {}}, art.spec, 0);
    try {
        train(*m, art.splits, tc);
        FAIL() << "expected NumericError";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NumericError);
        EXPECT_NE(std::string(e.what()).find("epoch 1, batch 0"), std::string::npos) << e.what();
    }
}

TEST(Training, RejectsMismatchedWindows) {
    const auto art = sine_artifact(200, 10);
    auto m = build_model(ForecasterKind::lstm, {{1, 2}, {}}, {12, 1}, 0);
    EXPECT_THROW(train(*m, art.splits, TrainConfig{}), Error);
}

TEST(Checkpoint, RoundTripPreservesPredictionsAndOptimizer) {
    const auto art = sine_artifact(300, 12);
    TrainConfig tc;
    tc.epochs = 1;
    ModelConfigs cfg;
    cfg.lstm = {2, 5};
    cfg.tcn.channels = 5;
    for (auto kind : {ForecasterKind::lstm, ForecasterKind::tcn}) {
        auto m = build_model(kind, cfg, art.spec, 3);
        const auto out = train(*m, art.splits, tc);
        const auto path = temp_file(std::string(to_string(kind)) + ".json");
        save_checkpoint(path, *m, out.optimizer, 3);
        const auto back = load_checkpoint(path);
        EXPECT_EQ(back.seed, 3u);
        EXPECT_EQ(back.model->kind(), kind);
        EXPECT_EQ(back.optimizer.step_count, out.optimizer.step_count);
        EXPECT_EQ(back.optimizer.first_moment, out.optimizer.first_moment);
        EXPECT_EQ(back.optimizer.second_moment, out.optimizer.second_moment);
        for (const auto& s : art.splits.test) ASSERT_EQ(back.model->predict(s.input), m->predict(s.input));

        // Resuming continues the step counter from the saved state.
        auto resumed = train(*back.model, art.splits, tc, &back.optimizer);
        EXPECT_EQ(resumed.optimizer.step_count, 2 * out.optimizer.step_count);
    }
}

TEST(Checkpoint, CorruptDocumentsRejected) {
    const LstmModel m({1, 2}, {5, 1}, 0);
    auto doc = checkpoint_json(m, {}, 0);
    doc["format"] = "other";
    EXPECT_EQ(code_of([&] { checkpoint_from_json(doc); }), ErrorCode::BadCheckpoint);
    doc = checkpoint_json(m, {}, 0);
    doc["parameters"].erase("head.bias");
    EXPECT_EQ(code_of([&] { checkpoint_from_json(doc); }), ErrorCode::BadCheckpoint);
    doc = checkpoint_json(m, {}, 0);
    doc["parameters"]["head.bias"]["values"] = {1.0, 2.0};
    EXPECT_EQ(code_of([&] { checkpoint_from_json(doc); }), ErrorCode::BadCheckpoint);
    const auto path = temp_file("garbage.json");
    write_file(path, "{not json");
    EXPECT_EQ(code_of([&] { load_checkpoint(path); }), ErrorCode::BadCheckpoint);
    std::filesystem::remove(path);
    EXPECT_EQ(code_of([&] { load_checkpoint(path); }), ErrorCode::IoError);
}

TEST(Forecaster, AdapterMatchesModel) {
    auto m = std::shared_ptr<const SequenceModel>(new LstmModel({1, 3}, {6, 2}, 1));
    ModelForecaster f(m);
    const std::vector<double> x{1, 2, 3, 4, 5, 6};
    EXPECT_EQ(f.predict(x, 2), m->predict(x));
    EXPECT_EQ(f.label(), "lstm");
    EXPECT_THROW(f.predict(x, 3), Error);
    EXPECT_EQ(persistence_forecast(x, 3), (std::vector<double>{6, 6, 6}));
}
