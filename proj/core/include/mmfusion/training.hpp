#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mmfusion/data.hpp"
#include "mmfusion/fusion.hpp"

namespace mmf {

struct TrainConfig {
    double lr = 0.001;
    std::size_t batch_size = 32;
    double split_train = 0.70, split_val = 0.15, split_test = 0.15;
    std::size_t patience = 10;
    double lr_decay_factor = 0.5;
    std::size_t lr_decay_every = 20;
    std::size_t max_epochs = 200;
    std::uint64_t seed = 42;
    unsigned augment_kinds = static_cast<unsigned>(AugmentKind::Scale);

    void validate() const; // throws BadSpec
};

double cross_entropy(const Tensor& probs, int label);

struct AdamState {
    std::size_t step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<Tensor> m, v;

    static AdamState init(const std::vector<Tensor>& params);
};

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr);

double decay_lr(std::size_t epoch, const TrainConfig& config);

enum class StopDecision { Continue, Stop };

struct EarlyStopState {
    double best_val_loss = 1e308;
    std::size_t epochs_since_improve = 0;
    std::size_t best_epoch = 0;
    std::vector<Tensor> best_snapshot;
};

// Improvement means strictly lower than best by at least 1e-6; snapshots the
// given parameters on improvement. Stop fires when the counter reaches
// patience.
StopDecision early_stop_update(EarlyStopState& state, double val_loss, std::size_t patience,
                               const std::vector<Tensor>& params, std::size_t epoch);

// Fisher-Yates shuffle then contiguous cuts at floor(0.70 n) / floor(0.85 n).
std::array<std::vector<MultimodalSample>, 3> split_dataset(
    const std::vector<MultimodalSample>& samples, const TrainConfig& config, Rng& rng);

struct EpochStats {
    double train_loss = 0, val_loss = 0, lr = 0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;
    double best_val_loss = 1e308;
};

// Batch training loop; mutates the model in place and restores the best
// snapshot before returning. Throws NumericFailure on non-finite loss.
TrainReport train(MultimodalModel& model, const std::vector<MultimodalSample>& train_set,
                  const std::vector<MultimodalSample>& val_set, const TrainConfig& config);

void write_report_csv(std::ostream& os, const TrainReport& report);

// Split the dataset, then standardize images and structured vectors with
// statistics computed from the train split only.
struct PreparedData {
    std::vector<MultimodalSample> train, val, test;
};
PreparedData prepare_splits(const Dataset& ds, const TrainConfig& config);

// MMF1 checkpoint: magic, u32 version = 1, u32 parameter count, then per
// parameter u16 name length, name, MMT1 tensor.
void save_checkpoint(std::ostream& os, const MultimodalModel& model);
void load_checkpoint(std::istream& is, MultimodalModel& model);
void save_checkpoint(const std::string& path, const MultimodalModel& model);
void load_checkpoint(const std::string& path, MultimodalModel& model);

} // namespace mmf
