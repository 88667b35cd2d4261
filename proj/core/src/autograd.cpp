#include "mmfusion/autograd.hpp"

#include <cmath>
#include <utility>

namespace mmf {

NodeId Tape::leaf(Tensor value) { return record("leaf", {}, std::move(value)); }

NodeId Tape::record(std::string op_kind, std::vector<NodeId> parents, Tensor value,
                    BackwardFn backward) {
    for (NodeId p : parents)
        if (p >= nodes_.size())
            throw UnknownParent("record: parent id " + std::to_string(p) + " not on tape");
    Node n;
    n.op_kind = std::move(op_kind);
    n.parents = std::move(parents);
    n.grad = Tensor(value.shape, 0.0);
    n.value = std::move(value);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

void Tape::backward(NodeId loss_id) {
    if (loss_id >= nodes_.size()) throw UnknownParent("backward: loss id not on tape");
    const Tensor& loss = nodes_[loss_id].value;
    if (loss.size() != 1 || loss.rank() != 1)
        throw NonScalarLoss("backward: loss must have shape [1]");

    // Adjoints are kept separate from node grads so repeated backward calls
    // accumulate rather than compound.
    std::vector<Tensor> adjoint(loss_id + 1);
    for (NodeId i = 0; i <= loss_id; ++i) adjoint[i] = Tensor(nodes_[i].value.shape, 0.0);
    adjoint[loss_id].data[0] = 1.0;

    for (NodeId i = loss_id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward || n.parents.empty()) continue;
        std::vector<const Tensor*> pvals(n.parents.size());
        std::vector<Tensor*> padjs(n.parents.size());
        for (std::size_t j = 0; j < n.parents.size(); ++j) {
            pvals[j] = &nodes_[n.parents[j]].value;
            padjs[j] = &adjoint[n.parents[j]];
        }
        n.backward(adjoint[i], n.value, pvals, padjs);
    }
    for (NodeId i = 0; i <= loss_id; ++i)
        for (std::size_t j = 0; j < adjoint[i].size(); ++j)
            nodes_[i].grad.data[j] += adjoint[i].data[j];
}

void Tape::zero_grad() {
    for (auto& n : nodes_)
        for (auto& g : n.grad.data) g = 0.0;
}

namespace ops {

static void accumulate(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

NodeId add(Tape& t, NodeId a, NodeId b) {
    Tensor v = elementwise(t.value(a), t.value(b), EwKind::Add);
    return t.record("add", {a, b}, std::move(v),
                    [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
                       const std::vector<Tensor*>& pa) {
                        accumulate(*pa[0], og);
                        accumulate(*pa[1], og);
                    });
}

NodeId sub(Tape& t, NodeId a, NodeId b) {
    Tensor v = elementwise(t.value(a), t.value(b), EwKind::Sub);
    return t.record("sub", {a, b}, std::move(v),
                    [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
                       const std::vector<Tensor*>& pa) {
                        accumulate(*pa[0], og);
                        for (std::size_t i = 0; i < og.size(); ++i) pa[1]->data[i] -= og.data[i];
                    });
}

NodeId mul(Tape& t, NodeId a, NodeId b) {
    Tensor v = elementwise(t.value(a), t.value(b), EwKind::Mul);
    return t.record("mul", {a, b}, std::move(v),
                    [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
                       const std::vector<Tensor*>& pa) {
                        for (std::size_t i = 0; i < og.size(); ++i) {
                            pa[0]->data[i] += og.data[i] * pv[1]->data[i];
                            pa[1]->data[i] += og.data[i] * pv[0]->data[i];
                        }
                    });
}

NodeId div(Tape& t, NodeId a, NodeId b) {
    Tensor v = elementwise(t.value(a), t.value(b), EwKind::Div);
    return t.record("div", {a, b}, std::move(v),
                    [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
                       const std::vector<Tensor*>& pa) {
                        for (std::size_t i = 0; i < og.size(); ++i) {
                            const double bi = pv[1]->data[i];
                            pa[0]->data[i] += og.data[i] / bi;
                            pa[1]->data[i] -= og.data[i] * pv[0]->data[i] / (bi * bi);
                        }
                    });
}

NodeId add_scalar(Tape& t, NodeId a, double c) {
    Tensor v = elementwise(t.value(a), c, EwKind::Add);
    return t.record("add_scalar", {a}, std::move(v),
                    [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
                       const std::vector<Tensor*>& pa) { accumulate(*pa[0], og); });
}

NodeId scale(Tape& t, NodeId a, double c) {
    Tensor v = elementwise(t.value(a), c, EwKind::Mul);
    return t.record("scale", {a}, std::move(v),
                    [c](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
                        const std::vector<Tensor*>& pa) {
                        for (std::size_t i = 0; i < og.size(); ++i)
                            pa[0]->data[i] += c * og.data[i];
                    });
}

NodeId scale_by(Tape& t, NodeId a, NodeId s) {
    if (t.value(s).size() != 1) throw ShapeMismatch("scale_by: scalar node required");
    Tensor v = elementwise(t.value(a), t.value(s).data[0], EwKind::Mul);
    return t.record("scale_by", {a, s}, std::move(v),
                    [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
                       const std::vector<Tensor*>& pa) {
                        const double sv = pv[1]->data[0];
                        for (std::size_t i = 0; i < og.size(); ++i) {
                            pa[0]->data[i] += og.data[i] * sv;
                            pa[1]->data[0] += og.data[i] * pv[0]->data[i];
                        }
                    });
}

NodeId matmul(Tape& t, NodeId a, NodeId b) {
    Tensor v = mmf::matmul(t.value(a), t.value(b));
    return t.record("matmul", {a, b}, std::move(v),
                    [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
                       const std::vector<Tensor*>& pa) {
                        accumulate(*pa[0], mmf::matmul(og, mmf::transpose(*pv[1])));
                        accumulate(*pa[1], mmf::matmul(mmf::transpose(*pv[0]), og));
                    });
}

NodeId transpose(Tape& t, NodeId a) {
    return t.record("transpose", {a}, mmf::transpose(t.value(a)),
                    [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
                       const std::vector<Tensor*>& pa) {
                        accumulate(*pa[0], mmf::transpose(og));
                    });
}

NodeId reshape(Tape& t, NodeId a, std::vector<std::size_t> shape) {
    const Tensor& av = t.value(a);
    if (shape_size(shape) != av.size()) throw ShapeMismatch("reshape: element count differs");
    Tensor v = Tensor::from_values(std::move(shape), av.data);
    return t.record("reshape", {a}, std::move(v),
                    [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
                       const std::vector<Tensor*>& pa) {
                        for (std::size_t i = 0; i < og.size(); ++i)
                            pa[0]->data[i] += og.data[i];
                    });
}

NodeId row(Tape& t, NodeId a, std::size_t i) {
    const Tensor& av = t.value(a);
    if (av.rank() != 2) throw ShapeMismatch("row: rank-2 tensor required");
    if (i >= av.shape[0]) throw ShapeMismatch("row: index out of range");
    const std::size_t cols = av.shape[1];
    Tensor v({cols}, 0.0);
    for (std::size_t j = 0; j < cols; ++j) v.data[j] = av.at(i, j);
    return t.record("row", {a}, std::move(v),
                    [i, cols](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
                              const std::vector<Tensor*>& pa) {
                        for (std::size_t j = 0; j < cols; ++j)
                            pa[0]->data[i * cols + j] += og.data[j];
                    });
}

NodeId concat(Tape& t, const std::vector<NodeId>& parts) {
    if (parts.empty()) throw DimMismatch("concat: no inputs");
    std::vector<double> vals;
    std::vector<std::size_t> offsets;
    for (NodeId p : parts) {
        const Tensor& pv = t.value(p);
        if (pv.rank() != 1) throw DimMismatch("concat: rank-1 inputs required");
        offsets.push_back(vals.size());
        vals.insert(vals.end(), pv.data.begin(), pv.data.end());
    }
    const std::size_t total = vals.size();
    Tensor v = Tensor::from_values({total}, std::move(vals));
    return t.record("concat", parts, std::move(v),
                    [offsets](const Tensor& og, const Tensor&,
                              const std::vector<const Tensor*>& pv,
                              const std::vector<Tensor*>& pa) {
                        for (std::size_t k = 0; k < pv.size(); ++k)
                            for (std::size_t j = 0; j < pv[k]->size(); ++j)
                                pa[k]->data[j] += og.data[offsets[k] + j];
                    });
}

NodeId mean_rows(Tape& t, NodeId a) {
    const Tensor& av = t.value(a);
    if (av.rank() != 2) throw ShapeMismatch("mean_rows: rank-2 tensor required");
    const std::size_t rows = av.shape[0], cols = av.shape[1];
    Tensor v({cols}, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) v.data[j] += av.at(i, j) / double(rows);
    return t.record("mean_rows", {a}, std::move(v),
                    [rows, cols](const Tensor& og, const Tensor&,
                                 const std::vector<const Tensor*>&,
                                 const std::vector<Tensor*>& pa) {
                        for (std::size_t i = 0; i < rows; ++i)
                            for (std::size_t j = 0; j < cols; ++j)
                                pa[0]->data[i * cols + j] += og.data[j] / double(rows);
                    });
}

NodeId relu(Tape& t, NodeId a) {
    Tensor v = t.value(a);
    for (auto& x : v.data) x = x > 0.0 ? x : 0.0;
    return t.record("relu", {a}, std::move(v),
                    [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
                       const std::vector<Tensor*>& pa) {
                        for (std::size_t i = 0; i < og.size(); ++i)
                            if (pv[0]->data[i] > 0.0) pa[0]->data[i] += og.data[i];
                    });
}

NodeId tanh(Tape& t, NodeId a) {
    Tensor v = t.value(a);
    for (auto& x : v.data) x = std::tanh(x);
    return t.record("tanh", {a}, std::move(v),
                    [](const Tensor& og, const Tensor& ov, const std::vector<const Tensor*>&,
                       const std::vector<Tensor*>& pa) {
                        for (std::size_t i = 0; i < og.size(); ++i)
                            pa[0]->data[i] += og.data[i] * (1.0 - ov.data[i] * ov.data[i]);
                    });
}

NodeId sigmoid(Tape& t, NodeId a) {
    Tensor v = t.value(a);
    for (auto& x : v.data) x = 1.0 / (1.0 + std::exp(-x));
    return t.record("sigmoid", {a}, std::move(v),
                    [](const Tensor& og, const Tensor& ov, const std::vector<const Tensor*>&,
                       const std::vector<Tensor*>& pa) {
                        for (std::size_t i = 0; i < og.size(); ++i)
                            pa[0]->data[i] += og.data[i] * ov.data[i] * (1.0 - ov.data[i]);
                    });
}

NodeId softmax_rows(Tape& t, NodeId a) {
    Tensor v = mmf::softmax_rows(t.value(a));
    const std::size_t cols = v.shape[1];
    return t.record("softmax_rows", {a}, std::move(v),
                    [cols](const Tensor& og, const Tensor& ov, const std::vector<const Tensor*>&,
                           const std::vector<Tensor*>& pa) {
                        const std::size_t rows = ov.shape[0];
                        for (std::size_t i = 0; i < rows; ++i) {
                            double dot = 0.0;
                            for (std::size_t j = 0; j < cols; ++j)
                                dot += og.data[i * cols + j] * ov.data[i * cols + j];
                            for (std::size_t j = 0; j < cols; ++j)
                                pa[0]->data[i * cols + j] +=
                                    ov.data[i * cols + j] * (og.data[i * cols + j] - dot);
                        }
                    });
}

NodeId softmax_vec(Tape& t, NodeId a) {
    const std::size_t n = t.value(a).size();
    return reshape(t, softmax_rows(t, reshape(t, a, {1, n})), {n});
}

NodeId sum(Tape& t, NodeId a) {
    Tensor v = Tensor::scalar(mmf::sum(t.value(a)));
    return t.record("sum", {a}, std::move(v),
                    [](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
                       const std::vector<Tensor*>& pa) {
                        for (auto& g : pa[0]->data) g += og.data[0];
                    });
}

static std::size_t conv_extent(std::size_t in, std::size_t f, std::size_t s, std::size_t p) {
    const long long num = static_cast<long long>(in) - static_cast<long long>(f) +
                          2 * static_cast<long long>(p);
    if (num % static_cast<long long>(s) != 0)
        throw NonIntegerOutput("conv: (in - F + 2P) not divisible by S");
    const long long out = num / static_cast<long long>(s) + 1;
    if (out < 1) throw NonPositiveOutput("conv: non-positive output extent");
    return static_cast<std::size_t>(out);
}

NodeId conv2d(Tape& t, NodeId input, NodeId kernels, NodeId bias, std::size_t stride,
              std::size_t padding) {
    const Tensor& in = t.value(input);
    const Tensor& k = t.value(kernels);
    const Tensor& b = t.value(bias);
    if (in.rank() != 3 || k.rank() != 4 || b.rank() != 1)
        throw ShapeMismatch("conv2d: input [C,H,W], kernels [O,C,F,F], bias [O]");
    const std::size_t C = in.shape[0], H = in.shape[1], W = in.shape[2];
    const std::size_t O = k.shape[0], F = k.shape[2];
    if (k.shape[1] != C || k.shape[3] != F || b.shape[0] != O)
        throw ShapeMismatch("conv2d: kernel/bias shapes inconsistent with input");
    const std::size_t Ho = conv_extent(H, F, stride, padding);
    const std::size_t Wo = conv_extent(W, F, stride, padding);

    auto in_at = [&](const Tensor& src, std::size_t c, long long y, long long x) -> double {
        if (y < 0 || x < 0 || y >= static_cast<long long>(H) || x >= static_cast<long long>(W))
            return 0.0;
        return src.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    };

    Tensor out({O, Ho, Wo}, 0.0);
    for (std::size_t o = 0; o < O; ++o)
        for (std::size_t y = 0; y < Ho; ++y)
            for (std::size_t x = 0; x < Wo; ++x) {
                double acc = b.data[o];
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t i = 0; i < F; ++i)
                        for (std::size_t j = 0; j < F; ++j)
                            acc += in_at(in, c,
                                         static_cast<long long>(y * stride + i) -
                                             static_cast<long long>(padding),
                                         static_cast<long long>(x * stride + j) -
                                             static_cast<long long>(padding)) *
                                   k.data[((o * C + c) * F + i) * F + j];
                out.at(o, y, x) = acc;
            }

    return t.record(
        "conv2d", {input, kernels, bias}, std::move(out),
        [C, H, W, O, F, Ho, Wo, stride, padding](const Tensor& og, const Tensor&,
                                                 const std::vector<const Tensor*>& pv,
                                                 const std::vector<Tensor*>& pa) {
            const Tensor& in = *pv[0];
            const Tensor& k = *pv[1];
            Tensor& din = *pa[0];
            Tensor& dk = *pa[1];
            Tensor& db = *pa[2];
            for (std::size_t o = 0; o < O; ++o)
                for (std::size_t y = 0; y < Ho; ++y)
                    for (std::size_t x = 0; x < Wo; ++x) {
                        const double g = og.at(o, y, x);
                        db.data[o] += g;
                        for (std::size_t c = 0; c < C; ++c)
                            for (std::size_t i = 0; i < F; ++i)
                                for (std::size_t j = 0; j < F; ++j) {
                                    const long long yy =
                                        static_cast<long long>(y * stride + i) -
                                        static_cast<long long>(padding);
                                    const long long xx =
                                        static_cast<long long>(x * stride + j) -
                                        static_cast<long long>(padding);
                                    if (yy < 0 || xx < 0 || yy >= static_cast<long long>(H) ||
                                        xx >= static_cast<long long>(W))
                                        continue;
                                    const std::size_t ii = (c * H + yy) * W + xx;
                                    const std::size_t ki = ((o * C + c) * F + i) * F + j;
                                    dk.data[ki] += g * in.data[ii];
                                    din.data[ii] += g * k.data[ki];
                                }
                    }
        });
}

NodeId max_pool(Tape& t, NodeId input, std::size_t window, std::size_t stride) {
    const Tensor& in = t.value(input);
    if (in.rank() != 3) throw ShapeMismatch("max_pool: input [C,H,W] required");
    const std::size_t C = in.shape[0], H = in.shape[1], W = in.shape[2];
    const std::size_t Ho = conv_extent(H, window, stride, 0);
    const std::size_t Wo = conv_extent(W, window, stride, 0);

    Tensor out({C, Ho, Wo}, 0.0);
    std::vector<std::size_t> argmax(C * Ho * Wo);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < Ho; ++y)
            for (std::size_t x = 0; x < Wo; ++x) {
                double best = -1e300;
                std::size_t best_idx = 0;
                for (std::size_t i = 0; i < window; ++i)
                    for (std::size_t j = 0; j < window; ++j) {
                        const std::size_t idx =
                            (c * H + y * stride + i) * W + x * stride + j;
                        if (in.data[idx] > best) { // first maximum wins ties
                            best = in.data[idx];
                            best_idx = idx;
                        }
                    }
                out.at(c, y, x) = best;
                argmax[(c * Ho + y) * Wo + x] = best_idx;
            }

    return t.record("max_pool", {input}, std::move(out),
                    [argmax](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
                             const std::vector<Tensor*>& pa) {
                        for (std::size_t i = 0; i < og.size(); ++i)
                            pa[0]->data[argmax[i]] += og.data[i];
                    });
}

NodeId embedding(Tape& t, NodeId table, const std::vector<int>& tokens) {
    const Tensor& tab = t.value(table);
    if (tab.rank() != 2) throw ShapeMismatch("embedding: table must be rank-2");
    const std::size_t vocab = tab.shape[0], dim = tab.shape[1];
    if (tokens.empty()) throw EmptySequence("embedding: empty token sequence");
    for (int tok : tokens)
        if (tok < 0 || static_cast<std::size_t>(tok) >= vocab)
            throw TokenOutOfRange("embedding: token " + std::to_string(tok) + " out of range");
    Tensor out({tokens.size(), dim}, 0.0);
    for (std::size_t i = 0; i < tokens.size(); ++i)
        for (std::size_t j = 0; j < dim; ++j)
            out.at(i, j) = tab.at(static_cast<std::size_t>(tokens[i]), j);
    return t.record("embedding", {table}, std::move(out),
                    [tokens, dim](const Tensor& og, const Tensor&,
                                  const std::vector<const Tensor*>&,
                                  const std::vector<Tensor*>& pa) {
                        for (std::size_t i = 0; i < tokens.size(); ++i)
                            for (std::size_t j = 0; j < dim; ++j)
                                pa[0]->data[static_cast<std::size_t>(tokens[i]) * dim + j] +=
                                    og.data[i * dim + j];
                    });
}

NodeId patchify_pixels(Tape& t, NodeId image, std::size_t grid) {
    const Tensor& img = t.value(image);
    if (img.rank() != 2) throw ShapeMismatch("patchify: rank-2 image required");
    const std::size_t H = img.shape[0], W = img.shape[1];
    if (H % grid != 0 || W % grid != 0)
        throw IndivisibleImage("patchify: image extents must be divisible by the grid");
    const std::size_t ph = H / grid, pw = W / grid;
    const std::size_t pp = ph * pw;

    // Flat source index for (patch, offset-within-patch).
    std::vector<std::size_t> src(grid * grid * pp);
    for (std::size_t gy = 0; gy < grid; ++gy)
        for (std::size_t gx = 0; gx < grid; ++gx)
            for (std::size_t i = 0; i < ph; ++i)
                for (std::size_t j = 0; j < pw; ++j)
                    src[(gy * grid + gx) * pp + i * pw + j] = (gy * ph + i) * W + gx * pw + j;

    Tensor out({grid * grid, pp}, 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = img.data[src[i]];
    return t.record("patchify", {image}, std::move(out),
                    [src](const Tensor& og, const Tensor&, const std::vector<const Tensor*>&,
                          const std::vector<Tensor*>& pa) {
                        for (std::size_t i = 0; i < og.size(); ++i)
                            pa[0]->data[src[i]] += og.data[i];
                    });
}

NodeId cross_entropy(Tape& t, NodeId probs, int label) {
    const Tensor& p = t.value(probs);
    if (p.rank() != 1) throw ShapeMismatch("cross_entropy: rank-1 probabilities required");
    if (label < 0 || static_cast<std::size_t>(label) >= p.size())
        throw LabelOutOfRange("cross_entropy: label out of range");
    // No clamping: a zero probability yields an infinite loss, which the
    // training loop reports as a numeric failure instead of hiding it.
    const double pl = p.data[static_cast<std::size_t>(label)];
    Tensor v = Tensor::scalar(-std::log(pl));
    return t.record("cross_entropy", {probs}, std::move(v),
                    [label](const Tensor& og, const Tensor&, const std::vector<const Tensor*>& pv,
                            const std::vector<Tensor*>& pa) {
                        const double pl = pv[0]->data[static_cast<std::size_t>(label)];
                        if (pl > 0.0)
                            pa[0]->data[static_cast<std::size_t>(label)] -= og.data[0] / pl;
                    });
}

} // namespace ops

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                              double h) {
    Tensor g(x.shape, 0.0);
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + h;
        const double fp = f(probe);
        probe.data[i] = orig - h;
        const double fm = f(probe);
        probe.data[i] = orig;
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

} // namespace mmf
