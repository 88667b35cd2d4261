#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "mmfusion/training.hpp"

using namespace mmf;

namespace {

Dataset tiny_dataset(std::size_t n = 12, std::uint64_t seed = 42) {
    DatasetSpec spec;
    spec.n_samples = n;
    spec.seed = seed;
    return generate(spec);
}

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.d_f = 6;
    cfg.embed_dim = 4;
    cfg.rnn_hidden = 4;
    cfg.conv_channels = 2;
    cfg.d_model = 4;
    cfg.classifier_hidden = 6;
    cfg.mlp_hidden = 4;
    return cfg;
}

} // namespace

TEST_CASE("cross_entropy examples") {
    CHECK(cross_entropy(Tensor::from_values({2}, {0.5, 0.5}), 0) ==
          doctest::Approx(std::log(2.0)));
    CHECK(cross_entropy(Tensor::from_values({3}, {0.1, 0.8, 0.1}), 1) ==
          doctest::Approx(-std::log(0.8)));
    CHECK_THROWS_AS(cross_entropy(Tensor::from_values({2}, {1.0, 0.0}), 5), LabelOutOfRange);
    CHECK_THROWS_AS(cross_entropy(Tensor::from_values({2}, {1.0, 0.0}), -1), LabelOutOfRange);
}

TEST_CASE("adam first step moves each weight by about -lr * sign(grad)") {
    std::vector<Tensor> params = {Tensor::from_values({3}, {1.0, -2.0, 0.5})};
    const std::vector<Tensor> before = params;
    const std::vector<Tensor> grads = {Tensor::from_values({3}, {0.3, -0.7, 2.0})};
    AdamState st = AdamState::init(params);
    adam_step(params, grads, st, 0.001);
    for (std::size_t i = 0; i < 3; ++i) {
        const double delta = params[0].data[i] - before[0].data[i];
        const double expect = -0.001 * (grads[0].data[i] > 0 ? 1.0 : -1.0);
        CHECK(delta == doctest::Approx(expect).epsilon(1e-4));
    }
    CHECK(st.step == 1);
}

TEST_CASE("adam stays finite through many steps with mixed grads") {
    Rng rng(5);
    std::vector<Tensor> params = {rng_normal(rng, {4, 4}, 0.0, 1.0)};
    AdamState st = AdamState::init(params);
    for (int i = 0; i < 500; ++i) {
        const std::vector<Tensor> grads = {rng_normal(rng, {4, 4}, 0.0, 10.0)};
        adam_step(params, grads, st, 0.01);
    }
    for (double v : params[0].data) CHECK(std::isfinite(v));
}

TEST_CASE("adam zero grad leaves params unchanged") {
    std::vector<Tensor> params = {Tensor::from_values({2}, {1.0, 2.0})};
    AdamState st = AdamState::init(params);
    adam_step(params, {Tensor({2}, 0.0)}, st, 0.1);
    CHECK(params[0].data == std::vector<double>{1.0, 2.0});
}

TEST_CASE("step decay halves the learning rate every 20 epochs") {
    TrainConfig cfg;
    CHECK(decay_lr(0, cfg) == doctest::Approx(0.001));
    CHECK(decay_lr(19, cfg) == doctest::Approx(0.001));
    CHECK(decay_lr(20, cfg) == doctest::Approx(0.0005));
    CHECK(decay_lr(39, cfg) == doctest::Approx(0.0005));
    CHECK(decay_lr(45, cfg) == doctest::Approx(0.00025));
}

TEST_CASE("early stopping follows the patience-3 trace") {
    // val losses 1.0, 0.9, 0.95, 0.96, 0.97 with patience 3 stop at the last
    // and remember best 0.9 from epoch 1
    EarlyStopState st;
    std::vector<Tensor> p0 = {Tensor::scalar(10.0)};
    std::vector<Tensor> p1 = {Tensor::scalar(11.0)};
    CHECK(early_stop_update(st, 1.0, 3, p0, 0) == StopDecision::Continue);
    CHECK(early_stop_update(st, 0.9, 3, p1, 1) == StopDecision::Continue);
    CHECK(early_stop_update(st, 0.95, 3, p0, 2) == StopDecision::Continue);
    CHECK(early_stop_update(st, 0.96, 3, p0, 3) == StopDecision::Continue);
    CHECK(early_stop_update(st, 0.97, 3, p0, 4) == StopDecision::Stop);
    CHECK(st.best_val_loss == doctest::Approx(0.9));
    CHECK(st.best_epoch == 1);
    REQUIRE(st.best_snapshot.size() == 1);
    CHECK(st.best_snapshot[0].data[0] == 11.0);
}

TEST_CASE("improvement below the 1e-6 margin does not reset patience") {
    EarlyStopState st;
    std::vector<Tensor> p = {Tensor::scalar(0.0)};
    early_stop_update(st, 1.0, 2, p, 0);
    CHECK(early_stop_update(st, 1.0 - 1e-9, 2, p, 1) == StopDecision::Continue);
    CHECK(early_stop_update(st, 1.0 - 1e-9, 2, p, 2) == StopDecision::Stop);
    CHECK(st.best_epoch == 0);
}

TEST_CASE("split sizes follow the 70/15/15 floors") {
    TrainConfig cfg;
    Rng rng(1);
    {
        std::vector<MultimodalSample> samples(100);
        const auto parts = split_dataset(samples, cfg, rng);
        CHECK(parts[0].size() == 70);
        CHECK(parts[1].size() == 15);
        CHECK(parts[2].size() == 15);
    }
    {
        std::vector<MultimodalSample> samples(10);
        const auto parts = split_dataset(samples, cfg, rng);
        CHECK(parts[0].size() == 7);
        CHECK(parts[1].size() == 1);
        CHECK(parts[2].size() == 2);
    }
}

TEST_CASE("split is a disjoint cover of the dataset") {
    DatasetSpec spec;
    spec.n_samples = 60;
    const Dataset ds = generate(spec);
    TrainConfig cfg;
    Rng rng(cfg.seed);
    const auto parts = split_dataset(ds.samples, cfg, rng);

    std::multiset<int> seen, want;
    std::size_t total = 0;
    for (const auto& part : parts)
        for (const auto& s : part) {
            seen.insert(int(s.tokens.size()) * 100 + s.label);
            ++total;
        }
    for (const auto& s : ds.samples) want.insert(int(s.tokens.size()) * 100 + s.label);
    CHECK(total == 60);
    CHECK(seen == want);
}

TEST_CASE("prepare_splits standardizes with train statistics") {
    DatasetSpec spec;
    spec.n_samples = 40;
    const Dataset ds = generate(spec);
    TrainConfig cfg;
    const PreparedData pd = prepare_splits(ds, cfg);
    CHECK(pd.train.size() == 28);
    CHECK(pd.val.size() == 6);
    CHECK(pd.test.size() == 6);

    // train images should be close to zero mean after standardization
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& s : pd.train)
        for (double v : s.image.data) {
            acc += v;
            ++n;
        }
    CHECK(std::abs(acc / double(n)) < 0.3);

    // deterministic given the same config seed
    const PreparedData pd2 = prepare_splits(ds, cfg);
    CHECK(pd2.train.size() == pd.train.size());
    CHECK(pd2.train[0].image == pd.train[0].image);
}

TEST_CASE("single-sample overfit drives the loss below 0.01") {
    const Dataset ds = tiny_dataset(10, 7);
    MultimodalModel model = MultimodalModel::init(tiny_model_config(), ds, 11);

    const std::vector<MultimodalSample> one = {ds.samples[0]};
    TrainConfig cfg;
    cfg.batch_size = 1;
    cfg.max_epochs = 200;
    cfg.patience = 200;
    cfg.lr = 0.01;
    cfg.augment_kinds = 0;
    const TrainReport rep = train(model, one, one, cfg);
    REQUIRE(!rep.epochs.empty());
    CHECK(rep.best_val_loss < 0.01);
    CHECK(cross_entropy(predict(model, one[0]), one[0].label) < 0.01);
}

TEST_CASE("max_epochs 0 yields empty curves and an untouched model") {
    const Dataset ds = tiny_dataset();
    MultimodalModel model = MultimodalModel::init(tiny_model_config(), ds, 3);
    const std::vector<Tensor> before = model.param_values;
    TrainConfig cfg;
    cfg.max_epochs = 0;
    cfg.batch_size = 4;
    const TrainReport rep = train(model, ds.samples, ds.samples, cfg);
    CHECK(rep.epochs.empty());
    CHECK(model.param_values == before);
}

TEST_CASE("training restores the snapshot with the minimum observed val loss") {
    const Dataset ds = tiny_dataset(30, 21);
    MultimodalModel model = MultimodalModel::init(tiny_model_config(), ds, 5);
    TrainConfig cfg;
    cfg.max_epochs = 12;
    cfg.patience = 4;
    cfg.batch_size = 8;
    std::vector<MultimodalSample> tr(ds.samples.begin(), ds.samples.begin() + 22);
    std::vector<MultimodalSample> va(ds.samples.begin() + 22, ds.samples.end());
    const TrainReport rep = train(model, tr, va, cfg);
    REQUIRE(!rep.epochs.empty());

    double min_seen = 1e308;
    for (const auto& e : rep.epochs) min_seen = std::min(min_seen, e.val_loss);
    CHECK(rep.best_val_loss == doctest::Approx(min_seen));

    // the restored parameters must reproduce that val loss exactly
    double loss = 0.0;
    for (const auto& s : va) loss += cross_entropy(predict(model, s), s.label);
    loss /= double(va.size());
    CHECK(loss == doctest::Approx(rep.best_val_loss).epsilon(1e-9));
}

TEST_CASE("training is deterministic under a fixed seed") {
    const Dataset ds = tiny_dataset(20, 9);
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.batch_size = 4;
    auto run = [&] {
        MultimodalModel model = MultimodalModel::init(tiny_model_config(), ds, 77);
        std::vector<MultimodalSample> tr(ds.samples.begin(), ds.samples.begin() + 16);
        std::vector<MultimodalSample> va(ds.samples.begin() + 16, ds.samples.end());
        const TrainReport rep = train(model, tr, va, cfg);
        return std::make_pair(rep, model.param_values);
    };
    const auto [ra, pa] = run();
    const auto [rb, pb] = run();
    REQUIRE(ra.epochs.size() == rb.epochs.size());
    for (std::size_t i = 0; i < ra.epochs.size(); ++i) {
        CHECK(ra.epochs[i].train_loss == rb.epochs[i].train_loss);
        CHECK(ra.epochs[i].val_loss == rb.epochs[i].val_loss);
        CHECK(ra.epochs[i].lr == rb.epochs[i].lr);
    }
    CHECK(pa == pb);
}

TEST_CASE("divergent learning rate raises NumericFailure") {
    const Dataset ds = tiny_dataset(16, 2);
    MultimodalModel model = MultimodalModel::init(tiny_model_config(), ds, 1);
    TrainConfig cfg;
    cfg.lr = 1e150;
    cfg.max_epochs = 50;
    cfg.batch_size = 4;
    CHECK_THROWS_AS(train(model, ds.samples, ds.samples, cfg), NumericFailure);
}

TEST_CASE("report CSV format") {
    TrainReport rep;
    rep.epochs = {{0.52, 0.61, 0.001}, {0.4012345, 0.5, 0.0005}};
    std::stringstream ss;
    write_report_csv(ss, rep);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "epoch,train_loss,val_loss,lr");
    std::getline(ss, line);
    CHECK(line.rfind("0,", 0) == 0);
    CHECK(line.find("0.001") != std::string::npos);
    std::getline(ss, line);
    CHECK(line.rfind("1,", 0) == 0);
}

TEST_CASE("MMF1 checkpoint round-trip is exact") {
    const Dataset ds = tiny_dataset();
    MultimodalModel model = MultimodalModel::init(tiny_model_config(), ds, 123);
    std::stringstream ss;
    save_checkpoint(ss, model);
    const std::string bytes = ss.str();

    MultimodalModel other = MultimodalModel::init(tiny_model_config(), ds, 456);
    CHECK_FALSE(other.param_values == model.param_values);
    load_checkpoint(ss, other);
    CHECK(other.param_values == model.param_values);

    std::stringstream ss2;
    save_checkpoint(ss2, other);
    CHECK(ss2.str() == bytes);
}

TEST_CASE("checkpoint corruption handling") {
    const Dataset ds = tiny_dataset();
    MultimodalModel model = MultimodalModel::init(tiny_model_config(), ds, 1);
    std::stringstream ss;
    save_checkpoint(ss, model);
    const std::string bytes = ss.str();

    {
        std::string bad = bytes;
        bad[0] = 'Z';
        std::stringstream is(bad);
        CHECK_THROWS_AS(load_checkpoint(is, model), BadMagic);
    }
    {
        std::string bad = bytes;
        bad[4] = 7;
        std::stringstream is(bad);
        CHECK_THROWS_AS(load_checkpoint(is, model), VersionMismatch);
    }
    {
        std::stringstream is(bytes.substr(0, bytes.size() - 9));
        CHECK_THROWS(load_checkpoint(is, model));
    }
    {
        // a checkpoint for a differently-shaped model must be rejected
        ModelConfig cfg = tiny_model_config();
        cfg.d_f = 7;
        MultimodalModel other = MultimodalModel::init(cfg, ds, 1);
        std::stringstream is(bytes);
        CHECK_THROWS(load_checkpoint(is, other));
    }
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.validate();
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), BadSpec);
    cfg = TrainConfig{};
    cfg.split_train = 0.9; // splits no longer sum to 1
    CHECK_THROWS_AS(cfg.validate(), BadSpec);
    cfg = TrainConfig{};
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), BadSpec);
}
