#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmfusion/rng.hpp"
#include "mmfusion/tensor.hpp"

namespace mmf {

struct MultimodalSample {
    Tensor image;            // [H, W]
    std::vector<int> tokens; // variable length <= l_max, values in [1, vocab)
    Tensor structured;       // [d_s]
    int label = 0;

    bool operator==(const MultimodalSample&) const = default;
};

// Synthetic generator controls. Signal strengths are the per-modality
// probability that a sample's modality carries the class prototype rather
// than class-agnostic noise; the informativeness indicators share one
// uniform draw so they are anti-correlated across modalities.
struct DatasetSpec {
    std::size_t n_classes = 3;
    std::size_t n_samples = 1000;
    std::size_t image_size = 6; // H == W, must be divisible by 3 downstream
    std::size_t l_max = 8;
    std::size_t vocab_size = 16;
    std::size_t d_s = 4;
    double s_img = 0.75, s_seq = 0.75, s_struct = 0.75;
    double noise = 0.3;
    std::uint64_t seed = 42;

    void validate() const; // throws BadSpec
};

struct Dataset {
    std::size_t n_classes = 0, height = 0, width = 0, l_max = 0, vocab_size = 0, d_s = 0;
    std::vector<MultimodalSample> samples;

    bool operator==(const Dataset&) const = default;
};

Dataset generate(const DatasetSpec& spec);

// Exact posterior classification under the generative model. Per-modality
// accuracies use only that modality; joint integrates over the shared
// informativeness draw.
struct BayesReport {
    double acc_image = 0, acc_tokens = 0, acc_struct = 0, acc_joint = 0;
};
BayesReport bayes_report(const DatasetSpec& spec, std::size_t n_mc,
                         std::uint64_t eval_seed = 0x6d6d64732e657661ULL);

// Per-column standardization of a [n, d] matrix. When stats is absent they
// are computed from the given matrix (train split); reuse them on val/test.
struct StandardizeStats {
    Tensor mean; // [d]
    Tensor stddev; // [d], floored at 1e-8
};
std::pair<Tensor, StandardizeStats> standardize(const Tensor& matrix,
                                                const std::optional<StandardizeStats>& stats);

enum class AugmentKind : unsigned { Rotate90 = 1, FlipH = 2, FlipV = 4, Scale = 8 };

// Each enabled augmentation is applied independently with probability 0.5,
// in the fixed order rotate90, flip_h, flip_v, scale. Scale multiplies
// intensities by U[0.8, 1.2].
Tensor augment(const Tensor& image, Rng& rng, unsigned kinds);

std::vector<int> pad_or_truncate(const std::vector<int>& tokens, std::size_t length,
                                 int pad_token = 0);

// MMDS v1 container.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);
void save_dataset(std::ostream& os, const Dataset& ds);
Dataset load_dataset(std::istream& is);

// Class prototypes, exposed for the oracle and tests.
Tensor image_prototype(const DatasetSpec& spec, std::size_t cls);
Tensor struct_prototype(const DatasetSpec& spec, std::size_t cls);
std::pair<int, int> token_bigram(const DatasetSpec& spec, std::size_t cls);
// Probability that an informative sequence actually embeds its class bigram.
double token_signal_quality(const DatasetSpec& spec);

} // namespace mmf
