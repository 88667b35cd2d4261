#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "mmfusion/autograd.hpp"
#include "mmfusion/rng.hpp"
#include "mmfusion/tensor.hpp"

namespace mmf {

// Convolution geometry: W_out = (W_in - F + 2P)/S + 1 and likewise H_out.
struct ConvSpec {
    std::size_t w_in = 0, h_in = 0, d_in = 1;
    std::size_t kernel = 1;  // F
    std::size_t stride = 1;  // S
    std::size_t padding = 0; // P
    std::size_t d_out = 1;
};

// Throws NonIntegerOutput / NonPositiveOutput instead of truncating.
std::pair<std::size_t, std::size_t> conv_output_shape(const ConvSpec& spec);

enum class Activation { Identity, Relu, Tanh, Sigmoid };

struct DenseLayer {
    Tensor weights; // [m_out, m_in]
    Tensor bias;    // [m_out]
    Activation activation = Activation::Identity;

    static DenseLayer init(std::size_t m_out, std::size_t m_in, Activation act, Rng& rng);
};

struct RnnCell {
    Tensor w_x; // [d_h, d_in]
    Tensor w_h; // [d_h, d_h]
    Tensor bias; // [d_h]

    static RnnCell init(std::size_t d_h, std::size_t d_in, Rng& rng);
};

struct EmbeddingTable {
    Tensor table; // [vocab_size, dim]

    std::size_t vocab_size() const { return table.shape[0]; }
    std::size_t dim() const { return table.shape[1]; }
    static EmbeddingTable init(std::size_t vocab_size, std::size_t dim, Rng& rng);
};

// Fixed 3x3 grid: 9 patches, row-major serialization, learned positions.
struct PatchEmbedder {
    static constexpr std::size_t kGrid = 3;
    Tensor projection; // [d_model, patch_pixels]
    Tensor positional; // [9, d_model]

    std::size_t d_model() const { return projection.shape[0]; }
    std::size_t patch_pixels() const { return projection.shape[1]; }
    static PatchEmbedder init(std::size_t d_model, std::size_t patch_pixels, Rng& rng);
};

struct AttentionHead {
    Tensor w_q; // [d_q, d_model]
    Tensor w_k; // [d_q, d_model]
    Tensor w_v; // [d_v, d_model]

    std::size_t d_q() const { return w_q.shape[0]; }
    static AttentionHead init(std::size_t d_q, std::size_t d_v, std::size_t d_model, Rng& rng);
};

// --- Tape-level building blocks (parameters passed as tape nodes) ---

NodeId activation_op(Tape& t, NodeId x, Activation act);

// y = phi(W x + b); x rank-1 [m_in] -> [m_out]
NodeId dense_op(Tape& t, NodeId weights, NodeId bias, NodeId x, Activation act);

// One Elman step: tanh(W_x x_t + W_h h_prev + b)
NodeId rnn_step_op(Tape& t, NodeId w_x, NodeId w_h, NodeId bias, NodeId x_t, NodeId h_prev);

// Full recurrence over sequence [T, d_in] from h_0 = 0. Returns (final, mid)
// hidden-state nodes where mid is the state after step ceil(T/2).
std::pair<NodeId, NodeId> rnn_forward_op(Tape& t, NodeId w_x, NodeId w_h, NodeId bias,
                                         NodeId sequence);

// image [H,W] -> [9, d_model]: flatten patches, project, add positions.
NodeId patchify_op(Tape& t, NodeId image, NodeId projection, NodeId positional);

// Scaled dot-product attention: Q = W_q X with tokens as the columns of
// X [d_model, T]; output [T, d_v], one row per token.
NodeId attention_op(Tape& t, NodeId w_q, NodeId w_k, NodeId w_v, NodeId x_cols);

struct EncoderBlockParams {
    AttentionHead head;    // d_q = d_v = d_model
    DenseLayer mlp_in;     // [hidden, d_model], relu
    DenseLayer mlp_out;    // [d_model, hidden]

    static EncoderBlockParams init(std::size_t d_model, std::size_t hidden, Rng& rng);
};

struct EncoderBlockNodes {
    NodeId w_q, w_k, w_v, mlp_in_w, mlp_in_b, mlp_out_w, mlp_out_b;
};

// x [9, d_model] -> [9, d_model]; attention + residual, per-token MLP + residual.
NodeId transformer_encoder_block_op(Tape& t, NodeId x_rows, const EncoderBlockNodes& p);

// --- Plain (forward-only) convenience wrappers used by tests/tools ---

Tensor conv2d_forward(const Tensor& input, const ConvSpec& spec, const Tensor& kernels,
                      const Tensor& bias);
Tensor max_pool(const Tensor& input, std::size_t window, std::size_t stride);
Tensor dense_forward(const DenseLayer& layer, const Tensor& x);
Tensor rnn_forward(const RnnCell& cell, const Tensor& sequence);
Tensor embed_sequence(const EmbeddingTable& table, const std::vector<int>& tokens);
Tensor patchify(const Tensor& image, const PatchEmbedder& embedder);
Tensor attention(const AttentionHead& head, const Tensor& x_cols);

} // namespace mmf
