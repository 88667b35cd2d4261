#include "mmfusion/metrics.hpp"

#include <cstdio>
#include <ostream>

namespace mmf {

ConfusionCounts confusion(const std::vector<int>& predictions, const std::vector<int>& truths,
                          std::size_t n_classes) {
    if (predictions.size() != truths.size())
        throw LengthMismatch("confusion: prediction/truth lengths differ");
    for (const auto* v : {&predictions, &truths})
        for (int x : *v)
            if (x < 0 || static_cast<std::size_t>(x) >= n_classes)
                throw LabelOutOfRange("confusion: label out of range");

    ConfusionCounts c;
    c.n_classes = n_classes;
    c.total = predictions.size();
    c.tp.assign(n_classes, 0);
    c.fp.assign(n_classes, 0);
    c.fn.assign(n_classes, 0);
    c.tn.assign(n_classes, 0);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto pred = static_cast<std::size_t>(predictions[i]);
        const auto truth = static_cast<std::size_t>(truths[i]);
        for (std::size_t cls = 0; cls < n_classes; ++cls) {
            const bool p = pred == cls, t = truth == cls;
            if (p && t)
                ++c.tp[cls];
            else if (p && !t)
                ++c.fp[cls];
            else if (!p && t)
                ++c.fn[cls];
            else
                ++c.tn[cls];
        }
    }
    return c;
}

MetricsRow compute_metrics(const ConfusionCounts& counts, std::string model_name) {
    MetricsRow row;
    row.model_name = std::move(model_name);
    double prec_sum = 0.0, rec_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t c = 0; c < counts.n_classes; ++c) {
        const double tp = double(counts.tp[c]);
        const double pd = tp + double(counts.fp[c]);
        const double rd = tp + double(counts.fn[c]);
        prec_sum += pd > 0 ? tp / pd : 0.0;
        rec_sum += rd > 0 ? tp / rd : 0.0;
        correct += counts.tp[c];
    }
    row.precision = prec_sum / double(counts.n_classes);
    row.recall = rec_sum / double(counts.n_classes);
    row.accuracy = counts.total > 0 ? double(correct) / double(counts.total) : 0.0;
    const double denom = row.precision + row.recall;
    row.f1 = denom > 0 ? 2.0 * row.precision * row.recall / denom : 0.0;
    return row;
}

MetricsRow evaluate_model(const MultimodalModel& model,
                          const std::vector<MultimodalSample>& test_set,
                          std::string model_name) {
    std::vector<int> preds, truths;
    preds.reserve(test_set.size());
    truths.reserve(test_set.size());
    for (const auto& s : test_set) {
        preds.push_back(predict_label(model, s));
        truths.push_back(s.label);
    }
    return compute_metrics(confusion(preds, truths, model.n_classes), std::move(model_name));
}

std::uint64_t model_init_seed(const TrainConfig& config) {
    return splitmix64(config.seed ^ 0x696e6974ULL);
}

static MetricsRow train_and_score(const Dataset& ds, const PreparedData& prep,
                                  const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                  const std::string& name) {
    MultimodalModel model = MultimodalModel::init(model_cfg, ds, model_init_seed(train_cfg));
    train(model, prep.train, prep.val, train_cfg);
    return evaluate_model(model, prep.test, name);
}

std::vector<MetricsRow> run_ablation(const Dataset& ds, const ModelConfig& base_model,
                                     const TrainConfig& base_train) {
    const PreparedData prep = prepare_splits(ds, base_train);
    struct Variant {
        const char* name;
        int drop; // branch index to deactivate, -1 for none
    };
    const Variant variants[] = {{"FULL", -1}, {"NO_CNN", 0}, {"NO_RNN", 1}, {"NO_VIT", 2}};
    std::vector<MetricsRow> rows;
    for (const auto& v : variants) {
        ModelConfig cfg = base_model;
        cfg.active = {true, true, true, true};
        if (v.drop >= 0) cfg.active[static_cast<std::size_t>(v.drop)] = false;
        rows.push_back(train_and_score(ds, prep, cfg, base_train, v.name));
    }
    return rows;
}

std::vector<MetricsRow> compare_baselines(const Dataset& ds, const ModelConfig& base_model,
                                          const TrainConfig& base_train) {
    const PreparedData prep = prepare_splits(ds, base_train);
    std::vector<MetricsRow> rows;
    const struct {
        const char* name;
        std::size_t branch;
    } singles[] = {{"CNN", 0}, {"RNN", 1}, {"Transformer", 2}};
    for (const auto& s : singles) {
        ModelConfig cfg = base_model;
        cfg.active = {false, false, false, false};
        cfg.active[s.branch] = true;
        cfg.fusion = FusionMode::Late; // single branch: fusion degenerates
        rows.push_back(train_and_score(ds, prep, cfg, base_train, s.name));
    }
    ModelConfig fused = base_model;
    fused.active = {true, true, true, true};
    rows.push_back(train_and_score(ds, prep, fused, base_train, "Our"));
    return rows;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
    os << "model,precision,accuracy,f1,recall\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f,%.4f,%.4f\n", r.model_name.c_str(),
                      r.precision, r.accuracy, r.f1, r.recall);
        os << buf;
    }
}

} // namespace mmf
