#include "mmfusion/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "mmfusion/rng.hpp"

namespace mmf {

namespace {

using Builder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;
using InputMaker = std::function<std::vector<Tensor>(Rng&)>;

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

GradCheckResult run_one(const std::string& name, const GradCheckOptions& opt,
                        const InputMaker& make_inputs, const Builder& build) {
    GradCheckResult result;
    result.op = name;
    double max_err = 0.0;

    for (std::size_t seed = 0; seed < opt.n_seeds; ++seed) {
        Rng rng(splitmix64(0xBADC0FFEULL + seed * 977 + std::hash<std::string>{}(name)));
        const std::vector<Tensor> inputs = make_inputs(rng);

        Tape tape;
        std::vector<NodeId> ids;
        for (const auto& in : inputs) ids.push_back(tape.leaf(in));
        const NodeId out = build(tape, ids);
        const Tensor probe = rng_normal(rng, tape.value(out).shape, 0.0, 1.0);
        const NodeId scalar = ops::sum(tape, ops::mul(tape, out, tape.leaf(probe)));
        tape.backward(scalar);

        for (std::size_t j = 0; j < inputs.size(); ++j) {
            auto f = [&](const Tensor& x) {
                Tape t2;
                std::vector<NodeId> ids2;
                for (std::size_t k = 0; k < inputs.size(); ++k)
                    ids2.push_back(t2.leaf(k == j ? x : inputs[k]));
                return dot(t2.value(build(t2, ids2)), probe);
            };
            const Tensor fd = finite_difference_grad(f, inputs[j], opt.fd_step);
            const Tensor& g = tape.grad(ids[j]);
            for (std::size_t i = 0; i < fd.size(); ++i) {
                const double diff = std::abs(g.data[i] - fd.data[i]);
                if (diff <= opt.absolute_floor) continue;
                const double scale = std::max(std::abs(g.data[i]), std::abs(fd.data[i]));
                max_err = std::max(max_err, diff / std::max(scale, opt.absolute_floor));
            }
        }
    }
    result.max_rel_error = max_err;
    result.pass = max_err <= opt.tolerance;
    return result;
}

std::vector<Tensor> normals(Rng& rng, const std::vector<std::vector<std::size_t>>& shapes) {
    std::vector<Tensor> out;
    for (const auto& s : shapes) out.push_back(rng_normal(rng, s, 0.0, 1.0));
    return out;
}

Dataset tiny_dims() {
    Dataset ds;
    ds.n_classes = 2;
    ds.height = ds.width = 6;
    ds.l_max = 3;
    ds.vocab_size = 8;
    ds.d_s = 2;
    return ds;
}

ModelConfig tiny_model_config(FusionMode mode) {
    ModelConfig cfg;
    cfg.fusion = mode;
    cfg.d_f = 3;
    cfg.embed_dim = 2;
    cfg.rnn_hidden = 3;
    cfg.conv_channels = 2;
    cfg.d_model = 4;
    cfg.encoder_depth = 1;
    cfg.classifier_hidden = 3;
    cfg.mlp_hidden = 3;
    return cfg;
}

MultimodalSample tiny_sample(Rng& rng) {
    MultimodalSample s;
    s.image = rng_normal(rng, {6, 6}, 0.0, 1.0);
    s.tokens = {static_cast<int>(rng.next_below(8)), static_cast<int>(rng.next_below(8)),
                static_cast<int>(rng.next_below(8))};
    s.structured = rng_normal(rng, {2}, 0.0, 1.0);
    s.label = static_cast<int>(rng.next_below(2));
    return s;
}

GradCheckResult check_model_mode(const std::string& name, FusionMode mode,
                                 const GradCheckOptions& opt) {
    const Dataset dims = tiny_dims();
    const ModelConfig cfg = tiny_model_config(mode);
    return run_one(
        name, opt,
        [&](Rng& rng) {
            // inputs: one fresh model's parameters; sample drawn per seed and
            // carried through the builder by a side channel below
            MultimodalModel model = MultimodalModel::init(cfg, dims, rng.next_u64());
            return model.param_values;
        },
        // The builder re-derives the model skeleton deterministically from the
        // same config; parameter values flow from the tape leaves.
        [cfg, dims](Tape& t, const std::vector<NodeId>& ids) {
            MultimodalModel skeleton = MultimodalModel::init(cfg, dims, 1);
            Rng srng(splitmix64(0x5A5A5A5AULL));
            MultimodalSample sample = tiny_sample(srng);
            NodeId probs = model_forward(t, skeleton, ids, sample);
            return ops::cross_entropy(t, probs, sample.label);
        });
}

} // namespace

std::vector<GradCheckResult> run_gradient_checks(const GradCheckOptions& opt) {
    std::vector<GradCheckResult> results;

    results.push_back(run_one(
        "matmul", opt, [](Rng& r) { return normals(r, {{3, 4}, {4, 2}}); },
        [](Tape& t, const std::vector<NodeId>& in) { return ops::matmul(t, in[0], in[1]); }));

    results.push_back(run_one(
        "elementwise", opt, [](Rng& r) { return normals(r, {{3, 3}, {3, 3}}); },
        [](Tape& t, const std::vector<NodeId>& in) {
            NodeId prod = ops::mul(t, in[0], in[1]);
            NodeId shifted = ops::add_scalar(t, in[1], 5.0); // keep divisor away from 0
            return ops::add(t, ops::sub(t, prod, in[0]), ops::div(t, in[0], shifted));
        }));

    results.push_back(run_one(
        "softmax", opt, [](Rng& r) { return normals(r, {{3, 4}}); },
        [](Tape& t, const std::vector<NodeId>& in) { return ops::softmax_rows(t, in[0]); }));

    results.push_back(run_one(
        "conv2d", opt, [](Rng& r) { return normals(r, {{2, 4, 4}, {2, 2, 3, 3}, {2}}); },
        [](Tape& t, const std::vector<NodeId>& in) {
            return ops::conv2d(t, in[0], in[1], in[2], 1, 1);
        }));

    results.push_back(run_one(
        "max_pool", opt, [](Rng& r) { return normals(r, {{1, 4, 4}}); },
        [](Tape& t, const std::vector<NodeId>& in) { return ops::max_pool(t, in[0], 2, 2); }));

    results.push_back(run_one(
        "dense", opt, [](Rng& r) { return normals(r, {{3, 4}, {3}, {4}}); },
        [](Tape& t, const std::vector<NodeId>& in) {
            return dense_op(t, in[0], in[1], in[2], Activation::Tanh);
        }));

    results.push_back(run_one(
        "rnn_step", opt, [](Rng& r) { return normals(r, {{3, 2}, {3, 3}, {3}, {2}, {3}}); },
        [](Tape& t, const std::vector<NodeId>& in) {
            return rnn_step_op(t, in[0], in[1], in[2], in[3], in[4]);
        }));

    results.push_back(run_one(
        "embedding", opt, [](Rng& r) { return normals(r, {{5, 3}}); },
        [](Tape& t, const std::vector<NodeId>& in) {
            return ops::embedding(t, in[0], {0, 2, 4, 2});
        }));

    results.push_back(run_one(
        "patchify", opt, [](Rng& r) { return normals(r, {{6, 6}, {3, 4}, {9, 3}}); },
        [](Tape& t, const std::vector<NodeId>& in) {
            return patchify_op(t, in[0], in[1], in[2]);
        }));

    results.push_back(run_one(
        "attention", opt, [](Rng& r) { return normals(r, {{2, 3}, {2, 3}, {3, 3}, {3, 4}}); },
        [](Tape& t, const std::vector<NodeId>& in) {
            return attention_op(t, in[0], in[1], in[2], in[3]);
        }));

    results.push_back(run_one(
        "encoder_block", opt,
        [](Rng& r) {
            return normals(r, {{4, 3}, {3, 3}, {3, 3}, {3, 3}, {3, 3}, {3}, {3, 3}, {3}});
        },
        [](Tape& t, const std::vector<NodeId>& in) {
            EncoderBlockNodes blk{in[1], in[2], in[3], in[4], in[5], in[6], in[7]};
            return transformer_encoder_block_op(t, in[0], blk);
        }));

    results.push_back(run_one(
        "fuse_late", opt, [](Rng& r) { return normals(r, {{3}, {3}, {3}}); },
        [](Tape& t, const std::vector<NodeId>& in) { return ops::concat(t, in); }));

    results.push_back(run_one(
        "fuse_attention", opt,
        [](Rng& r) { return normals(r, {{3, 3}, {3, 3}, {3, 3}, {3}, {3}, {3}}); },
        [](Tape& t, const std::vector<NodeId>& in) {
            return attention_fuse_op(t, in[0], in[1], in[2], {in[3], in[4], in[5]});
        }));

    results.push_back(run_one(
        "fuse_weighted_sum", opt, [](Rng& r) { return normals(r, {{3}, {3}, {3}, {3}}); },
        [](Tape& t, const std::vector<NodeId>& in) {
            return weighted_sum_fuse_op(t, in[0], {in[1], in[2], in[3]});
        }));

    results.push_back(run_one(
        "cross_entropy", opt, [](Rng& r) { return normals(r, {{4}}); },
        [](Tape& t, const std::vector<NodeId>& in) {
            return ops::cross_entropy(t, ops::softmax_vec(t, in[0]), 1);
        }));

    results.push_back(check_model_mode("fuse_early_model", FusionMode::Early, opt));
    results.push_back(check_model_mode("fuse_intermediate_model", FusionMode::Intermediate, opt));
    results.push_back(check_model_mode("fuse_late_model", FusionMode::Late, opt));
    results.push_back(check_model_mode("fuse_attention_model", FusionMode::Attention, opt));
    results.push_back(
        check_model_mode("fuse_weighted_sum_model", FusionMode::WeightedSum, opt));

    if (opt.include_broken_fixture) {
        results.push_back(run_one(
            "broken_fixture", opt, [](Rng& r) { return normals(r, {{3}}); },
            [](Tape& t, const std::vector<NodeId>& in) {
                Tensor v = elementwise(t.value(in[0]), 2.0, EwKind::Mul);
                return t.record("broken", {in[0]}, std::move(v),
                                [](const Tensor& og, const Tensor&,
                                   const std::vector<const Tensor*>&,
                                   const std::vector<Tensor*>& pa) {
                                    // deliberately wrong factor
                                    for (std::size_t i = 0; i < og.size(); ++i)
                                        pa[0]->data[i] += 3.0 * og.data[i];
                                });
            }));
    }
    return results;
}

} // namespace mmf
