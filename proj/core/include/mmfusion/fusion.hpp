#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mmfusion/data.hpp"
#include "mmfusion/encoders.hpp"

namespace mmf {

enum class FusionMode { Early, Intermediate, Late, Attention, WeightedSum };

FusionMode fusion_mode_from_string(const std::string& s); // throws ConfigTypeError
std::string to_string(FusionMode mode);

// Fixed branch order; concatenations and serialization follow it.
enum class Branch : std::size_t { CNN = 0, RNN = 1, VIT = 2, FCN = 3 };
constexpr std::size_t kBranchCount = 4;
std::string to_string(Branch b);

struct ModelConfig {
    std::array<bool, kBranchCount> active = {true, true, true, true};
    FusionMode fusion = FusionMode::Attention;
    std::size_t d_f = 16;
    std::size_t embed_dim = 8;
    std::size_t rnn_hidden = 16;
    std::size_t conv_channels = 4;
    std::size_t d_model = 16;
    std::size_t encoder_depth = 1;
    std::size_t classifier_hidden = 16;
    std::size_t mlp_hidden = 16; // encoder-block MLP width
};

// The assembled model: parameters are a flat named list in a fixed order so
// Adam state, checkpoints, and gradients line up by index.
struct MultimodalModel {
    ModelConfig config;
    std::size_t n_classes = 0, height = 0, width = 0, l_max = 0, vocab_size = 0, d_s = 0;

    std::vector<std::string> param_names;
    std::vector<Tensor> param_values;

    std::size_t param_index(const std::string& name) const; // throws UnknownKey
    std::size_t param_count() const { return param_values.size(); }
    bool branch_active(Branch b) const { return config.active[static_cast<std::size_t>(b)]; }

    static MultimodalModel init(const ModelConfig& config, const Dataset& ds,
                                std::uint64_t seed);
};

// Puts every parameter on the tape; node ids parallel param_values.
std::vector<NodeId> param_leaves(Tape& tape, const MultimodalModel& model);

// Full forward pass for one sample; returns the probability-vector node.
NodeId model_forward(Tape& tape, const MultimodalModel& model,
                     const std::vector<NodeId>& params, const MultimodalSample& sample);

// Convenience: fresh leaves, forward, return probabilities as a tensor.
Tensor predict(const MultimodalModel& model, const MultimodalSample& sample);
int predict_label(const MultimodalModel& model, const MultimodalSample& sample);

// --- standalone fusion operations (plain tensors, used directly by tests) ---

// Concatenation in fixed branch order; the caller passes features already in
// that order (absent branches skipped).
Tensor late_fuse(const std::vector<Tensor>& features);
Tensor attention_fuse(const std::vector<Tensor>& features, const AttentionHead& head);
Tensor weighted_sum_fuse(const std::vector<Tensor>& features, const Tensor& logits);

// Tape-level counterparts.
NodeId attention_fuse_op(Tape& t, NodeId w_q, NodeId w_k, NodeId w_v,
                         const std::vector<NodeId>& features);
NodeId weighted_sum_fuse_op(Tape& t, NodeId logits, const std::vector<NodeId>& features);

} // namespace mmf
