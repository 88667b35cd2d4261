#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mmfusion/training.hpp"

namespace mmf {

struct ConfusionCounts {
    std::size_t n_classes = 0;
    std::size_t total = 0;
    std::vector<std::size_t> tp, fp, fn, tn; // one-vs-rest per class
};

ConfusionCounts confusion(const std::vector<int>& predictions, const std::vector<int>& truths,
                          std::size_t n_classes);

struct MetricsRow {
    std::string model_name;
    double precision = 0, accuracy = 0, f1 = 0, recall = 0;
};

// Macro-averaged precision/recall; zero-denominator classes count as 0;
// f1 is the harmonic mean of the macro precision and recall.
MetricsRow compute_metrics(const ConfusionCounts& counts, std::string model_name = "");

MetricsRow evaluate_model(const MultimodalModel& model,
                          const std::vector<MultimodalSample>& test_set,
                          std::string model_name);

// Trains FULL / NO_CNN / NO_RNN / NO_VIT from identical seeds on shared
// splits; rows are emitted in that fixed order.
std::vector<MetricsRow> run_ablation(const Dataset& ds, const ModelConfig& base_model,
                                     const TrainConfig& base_train);

// Trains the three unimodal baselines and the fused model; rows ordered
// CNN, RNN, Transformer, Our.
std::vector<MetricsRow> compare_baselines(const Dataset& ds, const ModelConfig& base_model,
                                          const TrainConfig& base_train);

// Exact header `model,precision,accuracy,f1,recall`, 4 decimal places.
void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows);

// Deterministic model-init seed derived from the training seed.
std::uint64_t model_init_seed(const TrainConfig& config);

} // namespace mmf
