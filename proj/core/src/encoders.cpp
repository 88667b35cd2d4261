#include "mmfusion/encoders.hpp"

#include <cmath>

namespace mmf {

std::pair<std::size_t, std::size_t> conv_output_shape(const ConvSpec& spec) {
    if (spec.kernel < 1 || spec.stride < 1) throw BadShape("conv spec: F >= 1 and S >= 1");
    auto one = [&](std::size_t in) -> std::size_t {
        const long long num = static_cast<long long>(in) - static_cast<long long>(spec.kernel) +
                              2 * static_cast<long long>(spec.padding);
        if (num % static_cast<long long>(spec.stride) != 0)
            throw NonIntegerOutput("conv spec: (in - F + 2P) not divisible by S");
        const long long out = num / static_cast<long long>(spec.stride) + 1;
        if (out < 1) throw NonPositiveOutput("conv spec: output extent < 1");
        return static_cast<std::size_t>(out);
    };
    return {one(spec.w_in), one(spec.h_in)};
}

static Tensor fan_in_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    return rng_normal(rng, std::move(shape), 0.0, 1.0 / std::sqrt(double(fan_in)));
}

DenseLayer DenseLayer::init(std::size_t m_out, std::size_t m_in, Activation act, Rng& rng) {
    DenseLayer l;
    l.weights = fan_in_init({m_out, m_in}, m_in, rng);
    l.bias = Tensor({m_out}, 0.0);
    l.activation = act;
    return l;
}

RnnCell RnnCell::init(std::size_t d_h, std::size_t d_in, Rng& rng) {
    RnnCell c;
    c.w_x = fan_in_init({d_h, d_in}, d_in, rng);
    c.w_h = fan_in_init({d_h, d_h}, d_h, rng);
    c.bias = Tensor({d_h}, 0.0);
    return c;
}

EmbeddingTable EmbeddingTable::init(std::size_t vocab_size, std::size_t dim, Rng& rng) {
    EmbeddingTable e;
    e.table = rng_normal(rng, {vocab_size, dim}, 0.0, 1.0 / std::sqrt(double(dim)));
    return e;
}

PatchEmbedder PatchEmbedder::init(std::size_t d_model, std::size_t patch_pixels, Rng& rng) {
    PatchEmbedder p;
    p.projection = fan_in_init({d_model, patch_pixels}, patch_pixels, rng);
    p.positional = rng_normal(rng, {kGrid * kGrid, d_model}, 0.0, 1.0);
    return p;
}

AttentionHead AttentionHead::init(std::size_t d_q, std::size_t d_v, std::size_t d_model,
                                  Rng& rng) {
    AttentionHead h;
    h.w_q = fan_in_init({d_q, d_model}, d_model, rng);
    h.w_k = fan_in_init({d_q, d_model}, d_model, rng);
    h.w_v = fan_in_init({d_v, d_model}, d_model, rng);
    return h;
}

EncoderBlockParams EncoderBlockParams::init(std::size_t d_model, std::size_t hidden, Rng& rng) {
    EncoderBlockParams p;
    p.head = AttentionHead::init(d_model, d_model, d_model, rng);
    p.mlp_in = DenseLayer::init(hidden, d_model, Activation::Relu, rng);
    p.mlp_out = DenseLayer::init(d_model, hidden, Activation::Identity, rng);
    return p;
}

NodeId activation_op(Tape& t, NodeId x, Activation act) {
    switch (act) {
        case Activation::Identity: return x;
        case Activation::Relu: return ops::relu(t, x);
        case Activation::Tanh: return ops::tanh(t, x);
        case Activation::Sigmoid: return ops::sigmoid(t, x);
    }
    return x;
}

NodeId dense_op(Tape& t, NodeId weights, NodeId bias, NodeId x, Activation act) {
    const std::size_t m_in = t.value(x).size();
    const std::size_t m_out = t.value(weights).shape[0];
    if (t.value(weights).shape[1] != m_in) throw ShapeMismatch("dense: input length mismatch");
    NodeId col = ops::reshape(t, x, {m_in, 1});
    NodeId u = ops::reshape(t, ops::matmul(t, weights, col), {m_out});
    return activation_op(t, ops::add(t, u, bias), act);
}

NodeId rnn_step_op(Tape& t, NodeId w_x, NodeId w_h, NodeId bias, NodeId x_t, NodeId h_prev) {
    const std::size_t d_h = t.value(w_h).shape[0];
    NodeId xi = ops::reshape(t, ops::matmul(t, w_x, ops::reshape(t, x_t, {t.value(x_t).size(), 1})),
                             {d_h});
    NodeId hh = ops::reshape(t, ops::matmul(t, w_h, ops::reshape(t, h_prev, {d_h, 1})), {d_h});
    return ops::tanh(t, ops::add(t, ops::add(t, xi, hh), bias));
}

std::pair<NodeId, NodeId> rnn_forward_op(Tape& t, NodeId w_x, NodeId w_h, NodeId bias,
                                         NodeId sequence) {
    const Tensor& seq = t.value(sequence);
    if (seq.rank() != 2) throw ShapeMismatch("rnn: sequence must be [T, d_in]");
    const std::size_t steps = seq.shape[0];
    if (steps < 1) throw EmptySequence("rnn: empty sequence");
    const std::size_t d_h = t.value(w_h).shape[0];
    NodeId h = t.leaf(Tensor({d_h}, 0.0));
    const std::size_t mid_step = (steps + 1) / 2; // ceil(T/2)
    NodeId mid = h;
    for (std::size_t i = 0; i < steps; ++i) {
        NodeId x_t = ops::row(t, sequence, i);
        h = rnn_step_op(t, w_x, w_h, bias, x_t, h);
        if (i + 1 == mid_step) mid = h;
    }
    return {h, mid};
}

NodeId patchify_op(Tape& t, NodeId image, NodeId projection, NodeId positional) {
    NodeId patches = ops::patchify_pixels(t, image, PatchEmbedder::kGrid); // [9, pp]
    NodeId projected = ops::matmul(t, patches, ops::transpose(t, projection)); // [9, d_model]
    return ops::add(t, projected, positional);
}

NodeId attention_op(Tape& t, NodeId w_q, NodeId w_k, NodeId w_v, NodeId x_cols) {
    const std::size_t d_q = t.value(w_q).shape[0];
    NodeId q = ops::matmul(t, w_q, x_cols); // [d_q, T]
    NodeId k = ops::matmul(t, w_k, x_cols);
    NodeId v = ops::matmul(t, w_v, x_cols); // [d_v, T]
    NodeId scores = ops::scale(t, ops::matmul(t, ops::transpose(t, q), k),
                               1.0 / std::sqrt(double(d_q))); // [T, T]
    NodeId weights = ops::softmax_rows(t, scores);
    return ops::matmul(t, weights, ops::transpose(t, v)); // [T, d_v]
}

NodeId transformer_encoder_block_op(Tape& t, NodeId x_rows, const EncoderBlockNodes& p) {
    const Tensor& x = t.value(x_rows);
    if (x.rank() != 2) throw ShapeMismatch("encoder block: [tokens, d_model] required");
    const std::size_t tokens = x.shape[0], d_model = x.shape[1];

    NodeId attn = attention_op(t, p.w_q, p.w_k, p.w_v, ops::transpose(t, x_rows));
    NodeId h = ops::add(t, x_rows, attn); // residual

    // per-token two-layer MLP with residual
    std::vector<NodeId> out_rows;
    out_rows.reserve(tokens);
    for (std::size_t i = 0; i < tokens; ++i) {
        NodeId tok = ops::row(t, h, i);
        NodeId inner = dense_op(t, p.mlp_in_w, p.mlp_in_b, tok, Activation::Relu);
        NodeId outer = dense_op(t, p.mlp_out_w, p.mlp_out_b, inner, Activation::Identity);
        out_rows.push_back(ops::add(t, tok, outer));
    }
    return ops::reshape(t, ops::concat(t, out_rows), {tokens, d_model});
}

// --- forward-only wrappers (single-use tapes) ---

Tensor conv2d_forward(const Tensor& input, const ConvSpec& spec, const Tensor& kernels,
                      const Tensor& bias) {
    if (input.rank() != 3 || input.shape[0] != spec.d_in || input.shape[1] != spec.h_in ||
        input.shape[2] != spec.w_in)
        throw ShapeMismatch("conv2d_forward: input shape inconsistent with spec");
    if (kernels.rank() != 4 || kernels.shape[0] != spec.d_out ||
        kernels.shape[1] != spec.d_in || kernels.shape[2] != spec.kernel ||
        kernels.shape[3] != spec.kernel)
        throw ShapeMismatch("conv2d_forward: kernel shape inconsistent with spec");
    conv_output_shape(spec); // validates geometry
    Tape t;
    NodeId out = ops::conv2d(t, t.leaf(input), t.leaf(kernels), t.leaf(bias), spec.stride,
                             spec.padding);
    return t.value(out);
}

Tensor max_pool(const Tensor& input, std::size_t window, std::size_t stride) {
    Tape t;
    return t.value(ops::max_pool(t, t.leaf(input), window, stride));
}

Tensor dense_forward(const DenseLayer& layer, const Tensor& x) {
    Tape t;
    return t.value(dense_op(t, t.leaf(layer.weights), t.leaf(layer.bias), t.leaf(x),
                            layer.activation));
}

Tensor rnn_forward(const RnnCell& cell, const Tensor& sequence) {
    Tape t;
    auto [h, mid] = rnn_forward_op(t, t.leaf(cell.w_x), t.leaf(cell.w_h), t.leaf(cell.bias),
                                   t.leaf(sequence));
    (void)mid;
    return t.value(h);
}

Tensor embed_sequence(const EmbeddingTable& table, const std::vector<int>& tokens) {
    Tape t;
    return t.value(ops::embedding(t, t.leaf(table.table), tokens));
}

Tensor patchify(const Tensor& image, const PatchEmbedder& embedder) {
    Tape t;
    return t.value(patchify_op(t, t.leaf(image), t.leaf(embedder.projection),
                               t.leaf(embedder.positional)));
}

Tensor attention(const AttentionHead& head, const Tensor& x_cols) {
    Tape t;
    return t.value(attention_op(t, t.leaf(head.w_q), t.leaf(head.w_k), t.leaf(head.w_v),
                                t.leaf(x_cols)));
}

} // namespace mmf
