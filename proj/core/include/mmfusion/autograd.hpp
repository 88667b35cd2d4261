#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mmfusion/tensor.hpp"

namespace mmf {

using NodeId = std::size_t;

// Accumulates d(loss)/d(parent) into parent_adjoints given d(loss)/d(out).
using BackwardFn = std::function<void(const Tensor& out_grad, const Tensor& out_value,
                                      const std::vector<const Tensor*>& parent_values,
                                      const std::vector<Tensor*>& parent_adjoints)>;

// Reverse-mode tape. Nodes are appended during the forward pass; ids are
// dense 0..n-1 and every parent id is smaller than its child's, so the
// backward sweep is a single reverse pass.
class Tape {
public:
    NodeId leaf(Tensor value);
    NodeId record(std::string op_kind, std::vector<NodeId> parents, Tensor value,
                  BackwardFn backward = nullptr);

    // Seeds d(loss)/d(loss) = 1 and accumulates into every node's grad.
    // Repeated calls accumulate (grads are not zeroed implicitly).
    void backward(NodeId loss_id);

    void zero_grad();

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
    const std::string& op_kind(NodeId id) const { return nodes_[id].op_kind; }
    const std::vector<NodeId>& parents(NodeId id) const { return nodes_[id].parents; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::string op_kind;
        std::vector<NodeId> parents;
        Tensor value;
        Tensor grad;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
};

namespace ops {

NodeId add(Tape& t, NodeId a, NodeId b);
NodeId sub(Tape& t, NodeId a, NodeId b);
NodeId mul(Tape& t, NodeId a, NodeId b);
NodeId div(Tape& t, NodeId a, NodeId b);
NodeId add_scalar(Tape& t, NodeId a, double c);
NodeId scale(Tape& t, NodeId a, double c);
NodeId scale_by(Tape& t, NodeId a, NodeId s); // s is a [1] node

NodeId matmul(Tape& t, NodeId a, NodeId b);
NodeId transpose(Tape& t, NodeId a);
NodeId reshape(Tape& t, NodeId a, std::vector<std::size_t> shape);
NodeId row(Tape& t, NodeId a, std::size_t i);
NodeId concat(Tape& t, const std::vector<NodeId>& parts); // rank-1 inputs
NodeId mean_rows(Tape& t, NodeId a);                      // [R,C] -> [C]

NodeId relu(Tape& t, NodeId a);
NodeId tanh(Tape& t, NodeId a);
NodeId sigmoid(Tape& t, NodeId a);
NodeId softmax_rows(Tape& t, NodeId a);
NodeId softmax_vec(Tape& t, NodeId a); // rank-1 convenience

NodeId sum(Tape& t, NodeId a); // -> scalar [1]

// input [C,H,W], kernels [O,C,F,F], bias [O]; zero padding P, stride S.
NodeId conv2d(Tape& t, NodeId input, NodeId kernels, NodeId bias, std::size_t stride,
              std::size_t padding);
// input [C,H,W]; tie broken toward the first maximal element row-major.
NodeId max_pool(Tape& t, NodeId input, std::size_t window, std::size_t stride);

NodeId embedding(Tape& t, NodeId table, const std::vector<int>& tokens);

// [H,W] image -> [grid*grid, patch_pixels], patches row-major over the grid,
// each patch flattened row-major.
NodeId patchify_pixels(Tape& t, NodeId image, std::size_t grid);

// -ln(max(probs[label], 1e-12)) on a rank-1 probability vector.
NodeId cross_entropy(Tape& t, NodeId probs, int label);

} // namespace ops

// Central-difference gradient of a tensor-to-scalar function.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                              double h = 1e-5);

} // namespace mmf
