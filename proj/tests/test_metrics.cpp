#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mmfusion/metrics.hpp"
#include "mmfusion/rng.hpp"

using namespace mmf;

TEST_CASE("binary confusion example") {
    const std::vector<int> preds = {1, 1, 0, 0, 1, 0, 0, 0, 0, 1};
    const std::vector<int> truths = {1, 1, 1, 0, 0, 0, 0, 1, 0, 0};
    const ConfusionCounts c = confusion(preds, truths, 2);
    CHECK(c.total == 10);
    CHECK(c.tp[1] == 2);
    CHECK(c.fp[1] == 2);
    CHECK(c.fn[1] == 2);
    CHECK(c.tn[1] == 4);
    // class 0 counts mirror class 1 in the binary case
    CHECK(c.tp[0] == 4);
    CHECK(c.fp[0] == 2);
    CHECK(c.fn[0] == 2);
    CHECK(c.tn[0] == 2);
}

TEST_CASE("confusion input validation") {
    CHECK_THROWS_AS(confusion({0, 1}, {0}, 2), LengthMismatch);
    CHECK_THROWS_AS(confusion({0, 2}, {0, 1}, 2), LabelOutOfRange);
    CHECK_THROWS_AS(confusion({0, 1}, {0, -1}, 2), LabelOutOfRange);
}

TEST_CASE("metric formulas on a hand-counted confusion") {
    // class 1: tp=3 fp=1 fn=1 tn=5 -> precision .75, recall .75
    // class 0: tp=5 fp=1 fn=1 tn=3 -> precision 5/6, recall 5/6
    const std::vector<int> preds = {1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
    const std::vector<int> truths = {1, 1, 1, 0, 1, 0, 0, 0, 0, 0};
    const ConfusionCounts c = confusion(preds, truths, 2);
    CHECK(c.tp[1] == 3);
    CHECK(c.fp[1] == 1);
    CHECK(c.fn[1] == 1);
    CHECK(c.tn[1] == 5);
    const MetricsRow r = compute_metrics(c, "hand");
    CHECK(r.model_name == "hand");
    const double macro = 0.5 * (0.75 + 5.0 / 6.0);
    CHECK(r.precision == doctest::Approx(macro));
    CHECK(r.recall == doctest::Approx(macro));
    CHECK(r.accuracy == doctest::Approx(0.8));
    CHECK(r.f1 == doctest::Approx(macro)); // harmonic mean of equal values
}

TEST_CASE("f1 is the harmonic mean of macro precision and recall") {
    ConfusionCounts c;
    c.n_classes = 2;
    c.total = 20;
    // class 0: p = 3/4, r = 3/6; class 1: p = 3/4, r = 3/4
    // macro p = 0.75, macro r = 0.625
    c.tp = {3, 3};
    c.fp = {1, 1};
    c.fn = {3, 1};
    c.tn = {13, 15};
    const MetricsRow r = compute_metrics(c);
    CHECK(r.precision == doctest::Approx(0.75));
    CHECK(r.recall == doctest::Approx(0.625));
    const double want = 2.0 * 0.75 * 0.625 / (0.75 + 0.625);
    CHECK(r.f1 == doctest::Approx(want));
    CHECK(r.f1 <= std::max(r.precision, r.recall));
    CHECK(r.f1 >= std::min(r.precision, r.recall));
}

TEST_CASE("zero-denominator classes score zero, not NaN") {
    // predictions never pick class 1
    const ConfusionCounts c = confusion({0, 0, 0}, {0, 1, 1}, 2);
    const MetricsRow r = compute_metrics(c);
    CHECK(std::isfinite(r.precision));
    CHECK(std::isfinite(r.recall));
    CHECK(std::isfinite(r.f1));
    // class 1 precision denominator is zero -> counts as 0 in the macro mean
    CHECK(r.precision == doctest::Approx(0.5 * (1.0 / 3.0 + 0.0)));
}

TEST_CASE("perfect and constant predictors") {
    const std::vector<int> truths = {0, 1, 2, 0, 1, 2};
    const MetricsRow perfect = compute_metrics(confusion(truths, truths, 3));
    CHECK(perfect.precision == doctest::Approx(1.0));
    CHECK(perfect.recall == doctest::Approx(1.0));
    CHECK(perfect.accuracy == doctest::Approx(1.0));
    CHECK(perfect.f1 == doctest::Approx(1.0));

    const MetricsRow constant = compute_metrics(confusion({0, 0, 0, 0, 0, 0}, truths, 3));
    CHECK(constant.accuracy == doctest::Approx(1.0 / 3.0));
    CHECK(constant.recall == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("brute-force recount on 100 random label pairs") {
    Rng rng(13);
    const std::size_t k = 4, n = 100;
    std::vector<int> preds(n), truths(n);
    for (std::size_t i = 0; i < n; ++i) {
        preds[i] = int(rng.next_below(k));
        truths[i] = int(rng.next_below(k));
    }
    const ConfusionCounts c = confusion(preds, truths, k);
    for (std::size_t cls = 0; cls < k; ++cls) {
        std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool p = preds[i] == int(cls), t = truths[i] == int(cls);
            if (p && t) ++tp;
            else if (p) ++fp;
            else if (t) ++fn;
            else ++tn;
        }
        CHECK(c.tp[cls] == tp);
        CHECK(c.fp[cls] == fp);
        CHECK(c.fn[cls] == fn);
        CHECK(c.tn[cls] == tn);
        CHECK(tp + fp + fn + tn == n);
    }
}

TEST_CASE("metrics CSV format") {
    std::vector<MetricsRow> rows = {{"FULL", 0.9, 0.91234, 0.925, 0.95},
                                    {"NO_CNN", 0.5, 0.5, 0.5, 0.5}};
    std::stringstream ss;
    write_metrics_csv(ss, rows);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "model,precision,accuracy,f1,recall");
    std::getline(ss, line);
    CHECK(line == "FULL,0.9000,0.9123,0.9250,0.9500");
    std::getline(ss, line);
    CHECK(line == "NO_CNN,0.5000,0.5000,0.5000,0.5000");
}

TEST_CASE("model_init_seed is a stable function of the training seed") {
    TrainConfig a, b;
    CHECK(model_init_seed(a) == model_init_seed(b));
    b.seed = 43;
    CHECK(model_init_seed(a) != model_init_seed(b));
}

TEST_CASE("evaluate_model agrees with a manual recount") {
    DatasetSpec spec;
    spec.n_samples = 24;
    const Dataset ds = generate(spec);
    ModelConfig cfg;
    cfg.d_f = 6;
    cfg.embed_dim = 4;
    cfg.rnn_hidden = 4;
    cfg.conv_channels = 2;
    cfg.d_model = 4;
    cfg.classifier_hidden = 6;
    cfg.mlp_hidden = 4;
    const MultimodalModel model = MultimodalModel::init(cfg, ds, 9);

    const MetricsRow row = evaluate_model(model, ds.samples, "m");
    std::vector<int> preds, truths;
    for (const auto& s : ds.samples) {
        preds.push_back(predict_label(model, s));
        truths.push_back(s.label);
    }
    const MetricsRow manual = compute_metrics(confusion(preds, truths, 3), "m");
    CHECK(row.accuracy == doctest::Approx(manual.accuracy));
    CHECK(row.precision == doctest::Approx(manual.precision));
    CHECK(row.recall == doctest::Approx(manual.recall));
    CHECK(row.f1 == doctest::Approx(manual.f1));
}

TEST_CASE("ablation rows come back in fixed order and reproducibly") {
    DatasetSpec spec;
    spec.n_samples = 60;
    const Dataset ds = generate(spec);
    ModelConfig mc;
    mc.d_f = 6;
    mc.embed_dim = 4;
    mc.rnn_hidden = 4;
    mc.conv_channels = 2;
    mc.d_model = 4;
    mc.classifier_hidden = 6;
    mc.mlp_hidden = 4;
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.batch_size = 8;
    tc.patience = 2;

    const std::vector<MetricsRow> a = run_ablation(ds, mc, tc);
    REQUIRE(a.size() == 4);
    CHECK(a[0].model_name == "FULL");
    CHECK(a[1].model_name == "NO_CNN");
    CHECK(a[2].model_name == "NO_RNN");
    CHECK(a[3].model_name == "NO_VIT");

    const std::vector<MetricsRow> b = run_ablation(ds, mc, tc);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(a[i].accuracy == b[i].accuracy);
        CHECK(a[i].f1 == b[i].f1);
    }
}

TEST_CASE("baseline comparison row names") {
    DatasetSpec spec;
    spec.n_samples = 40;
    const Dataset ds = generate(spec);
    ModelConfig mc;
    mc.d_f = 6;
    mc.embed_dim = 4;
    mc.rnn_hidden = 4;
    mc.conv_channels = 2;
    mc.d_model = 4;
    mc.classifier_hidden = 6;
    mc.mlp_hidden = 4;
    TrainConfig tc;
    tc.max_epochs = 1;
    tc.batch_size = 8;
    const std::vector<MetricsRow> rows = compare_baselines(ds, mc, tc);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].model_name == "CNN");
    CHECK(rows[1].model_name == "RNN");
    CHECK(rows[2].model_name == "Transformer");
    CHECK(rows[3].model_name == "Our");
}
