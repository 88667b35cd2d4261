#include "mmfusion/fusion.hpp"

#include <cmath>

#include "mmfusion/errors.hpp"

namespace mmf {

FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "early") return FusionMode::Early;
    if (s == "intermediate") return FusionMode::Intermediate;
    if (s == "late") return FusionMode::Late;
    if (s == "attention") return FusionMode::Attention;
    if (s == "weighted_sum") return FusionMode::WeightedSum;
    throw ConfigTypeError("unknown fusion mode: " + s);
}

std::string to_string(FusionMode mode) {
    switch (mode) {
        case FusionMode::Early: return "early";
        case FusionMode::Intermediate: return "intermediate";
        case FusionMode::Late: return "late";
        case FusionMode::Attention: return "attention";
        case FusionMode::WeightedSum: return "weighted_sum";
    }
    return "?";
}

std::string to_string(Branch b) {
    switch (b) {
        case Branch::CNN: return "CNN";
        case Branch::RNN: return "RNN";
        case Branch::VIT: return "VIT";
        case Branch::FCN: return "FCN";
    }
    return "?";
}

std::size_t MultimodalModel::param_index(const std::string& name) const {
    for (std::size_t i = 0; i < param_names.size(); ++i)
        if (param_names[i] == name) return i;
    throw UnknownKey("unknown parameter: " + name);
}

static std::size_t active_count(const ModelConfig& c) {
    std::size_t n = 0;
    for (bool a : c.active) n += a ? 1 : 0;
    return n;
}

MultimodalModel MultimodalModel::init(const ModelConfig& config, const Dataset& ds,
                                      std::uint64_t seed) {
    if (active_count(config) == 0) throw NoActiveBranch("model needs at least one branch");
    if (ds.height % 3 != 0 || ds.width % 3 != 0)
        throw IndivisibleImage("image extents must be divisible by 3 for the ViT branch");
    if (ds.height % 2 != 0 || ds.width % 2 != 0)
        throw BadSpec("image extents must be even for the CNN pooling stage");

    MultimodalModel m;
    m.config = config;
    m.n_classes = ds.n_classes;
    m.height = ds.height;
    m.width = ds.width;
    m.l_max = ds.l_max;
    m.vocab_size = ds.vocab_size;
    m.d_s = ds.d_s;

    Rng rng(seed);
    auto add = [&](const std::string& name, Tensor value) {
        m.param_names.push_back(name);
        m.param_values.push_back(std::move(value));
    };
    auto fan_in = [&](std::vector<std::size_t> shape, std::size_t fi) {
        return rng_normal(rng, std::move(shape), 0.0, 1.0 / std::sqrt(double(fi)));
    };

    const std::size_t d_f = config.d_f;
    const std::size_t cnn_flat = config.conv_channels * (ds.height / 2) * (ds.width / 2);

    if (config.active[0]) { // CNN
        add("cnn.conv.kernels", fan_in({config.conv_channels, 1, 3, 3}, 9));
        add("cnn.conv.bias", Tensor({config.conv_channels}, 0.0));
        add("cnn.proj.w", fan_in({d_f, cnn_flat}, cnn_flat));
        add("cnn.proj.b", Tensor({d_f}, 0.0));
    }
    if (config.active[1]) { // RNN
        add("rnn.embed.table",
            rng_normal(rng, {ds.vocab_size, config.embed_dim}, 0.0,
                       1.0 / std::sqrt(double(config.embed_dim))));
        add("rnn.w_x", fan_in({config.rnn_hidden, config.embed_dim}, config.embed_dim));
        add("rnn.w_h", fan_in({config.rnn_hidden, config.rnn_hidden}, config.rnn_hidden));
        add("rnn.bias", Tensor({config.rnn_hidden}, 0.0));
        add("rnn.proj.w", fan_in({d_f, config.rnn_hidden}, config.rnn_hidden));
        add("rnn.proj.b", Tensor({d_f}, 0.0));
    }
    if (config.active[2]) { // VIT
        const std::size_t pp = (ds.height / 3) * (ds.width / 3);
        add("vit.patch.proj", fan_in({config.d_model, pp}, pp));
        add("vit.patch.pos", rng_normal(rng, {9, config.d_model}, 0.0, 1.0));
        for (std::size_t i = 0; i < config.encoder_depth; ++i) {
            const std::string pre = "vit.blk" + std::to_string(i) + ".";
            add(pre + "attn.wq", fan_in({config.d_model, config.d_model}, config.d_model));
            add(pre + "attn.wk", fan_in({config.d_model, config.d_model}, config.d_model));
            add(pre + "attn.wv", fan_in({config.d_model, config.d_model}, config.d_model));
            add(pre + "mlp1.w", fan_in({config.mlp_hidden, config.d_model}, config.d_model));
            add(pre + "mlp1.b", Tensor({config.mlp_hidden}, 0.0));
            add(pre + "mlp2.w", fan_in({config.d_model, config.mlp_hidden}, config.mlp_hidden));
            add(pre + "mlp2.b", Tensor({config.d_model}, 0.0));
        }
        add("vit.proj.w", fan_in({d_f, config.d_model}, config.d_model));
        add("vit.proj.b", Tensor({d_f}, 0.0));
    }
    if (config.active[3]) { // FCN
        add("fcn.hidden.w", fan_in({d_f, ds.d_s}, ds.d_s));
        add("fcn.hidden.b", Tensor({d_f}, 0.0));
        add("fcn.out.w", fan_in({d_f, d_f}, d_f));
        add("fcn.out.b", Tensor({d_f}, 0.0));
    }

    const std::size_t k = active_count(config);
    std::size_t cls_in = d_f;
    switch (config.fusion) {
        case FusionMode::Early: {
            std::size_t raw = 0;
            if (config.active[0] || config.active[2]) raw += ds.height * ds.width;
            if (config.active[1]) raw += config.embed_dim;
            if (config.active[3]) raw += ds.d_s;
            add("early.enc.w", fan_in({d_f, raw}, raw));
            add("early.enc.b", Tensor({d_f}, 0.0));
            break;
        }
        case FusionMode::Intermediate: {
            std::size_t mid = 0;
            if (config.active[0]) mid += cnn_flat;
            if (config.active[1]) mid += config.rnn_hidden;
            if (config.active[2]) mid += config.d_model;
            if (config.active[3]) mid += d_f;
            const std::size_t trunk_in = mid + k * d_f;
            add("trunk.w", fan_in({d_f, trunk_in}, trunk_in));
            add("trunk.b", Tensor({d_f}, 0.0));
            break;
        }
        case FusionMode::Late: cls_in = k * d_f; break;
        case FusionMode::Attention:
            add("fuse.wq", fan_in({d_f, d_f}, d_f));
            add("fuse.wk", fan_in({d_f, d_f}, d_f));
            add("fuse.wv", fan_in({d_f, d_f}, d_f));
            break;
        case FusionMode::WeightedSum: add("fuse.logits", Tensor({k}, 0.0)); break;
    }

    add("cls.hidden.w", fan_in({config.classifier_hidden, cls_in}, cls_in));
    add("cls.hidden.b", Tensor({config.classifier_hidden}, 0.0));
    add("cls.out.w", fan_in({ds.n_classes, config.classifier_hidden}, config.classifier_hidden));
    add("cls.out.b", Tensor({ds.n_classes}, 0.0));
    return m;
}

std::vector<NodeId> param_leaves(Tape& tape, const MultimodalModel& model) {
    std::vector<NodeId> ids;
    ids.reserve(model.param_count());
    for (const auto& v : model.param_values) ids.push_back(tape.leaf(v));
    return ids;
}

namespace {

struct BranchFeatures {
    NodeId mid = 0, final = 0;
};

void check_sample(const MultimodalModel& m, const MultimodalSample& s) {
    if (s.image.rank() != 2 || s.image.shape[0] != m.height || s.image.shape[1] != m.width)
        throw ModalityMissing("sample image does not match model geometry");
    if (s.structured.size() != m.d_s)
        throw ModalityMissing("sample structured vector does not match model");
}

} // namespace

NodeId attention_fuse_op(Tape& t, NodeId w_q, NodeId w_k, NodeId w_v,
                         const std::vector<NodeId>& features) {
    if (features.empty()) throw DimMismatch("attention_fuse: no features");
    const std::size_t d_f = t.value(features[0]).size();
    for (NodeId f : features)
        if (t.value(f).size() != d_f) throw DimMismatch("attention_fuse: feature dims differ");
    NodeId rows = ops::reshape(t, ops::concat(t, features), {features.size(), d_f});
    NodeId out = attention_op(t, w_q, w_k, w_v, ops::transpose(t, rows)); // [k, d_v]
    return ops::mean_rows(t, out);
}

NodeId weighted_sum_fuse_op(Tape& t, NodeId logits, const std::vector<NodeId>& features) {
    if (features.empty()) throw DimMismatch("weighted_sum_fuse: no features");
    if (t.value(logits).size() != features.size())
        throw DimMismatch("weighted_sum_fuse: logit count != feature count");
    const std::size_t d_f = t.value(features[0]).size();
    for (NodeId f : features)
        if (t.value(f).size() != d_f)
            throw DimMismatch("weighted_sum_fuse: feature dims differ");
    NodeId w = ops::reshape(t, ops::softmax_vec(t, logits), {features.size(), 1});
    NodeId acc = ops::scale_by(t, features[0], ops::row(t, w, 0));
    for (std::size_t i = 1; i < features.size(); ++i)
        acc = ops::add(t, acc, ops::scale_by(t, features[i], ops::row(t, w, i)));
    return acc;
}

NodeId model_forward(Tape& t, const MultimodalModel& model, const std::vector<NodeId>& params,
                     const MultimodalSample& sample) {
    check_sample(model, sample);
    const ModelConfig& cfg = model.config;
    auto p = [&](const std::string& name) { return params[model.param_index(name)]; };

    const std::vector<int> tokens = pad_or_truncate(sample.tokens, model.l_max, 0);

    std::vector<BranchFeatures> feats; // active branches in fixed order
    NodeId image_leaf = 0;
    bool have_image_leaf = false;
    auto image_node = [&]() {
        if (!have_image_leaf) {
            image_leaf = t.leaf(sample.image);
            have_image_leaf = true;
        }
        return image_leaf;
    };

    if (cfg.fusion != FusionMode::Early) {
        if (model.branch_active(Branch::CNN)) {
            NodeId img = ops::reshape(t, image_node(), {1, model.height, model.width});
            NodeId conv = ops::conv2d(t, img, p("cnn.conv.kernels"), p("cnn.conv.bias"), 1, 1);
            NodeId pooled = ops::max_pool(t, ops::relu(t, conv), 2, 2);
            NodeId flat = ops::reshape(t, pooled, {t.value(pooled).size()});
            BranchFeatures f;
            f.mid = flat;
            f.final = dense_op(t, p("cnn.proj.w"), p("cnn.proj.b"), flat, Activation::Relu);
            feats.push_back(f);
        }
        if (model.branch_active(Branch::RNN)) {
            NodeId emb = ops::embedding(t, p("rnn.embed.table"), tokens);
            auto [h_final, h_mid] =
                rnn_forward_op(t, p("rnn.w_x"), p("rnn.w_h"), p("rnn.bias"), emb);
            BranchFeatures f;
            f.mid = h_mid;
            f.final = dense_op(t, p("rnn.proj.w"), p("rnn.proj.b"), h_final, Activation::Relu);
            feats.push_back(f);
        }
        if (model.branch_active(Branch::VIT)) {
            NodeId x = patchify_op(t, image_node(), p("vit.patch.proj"), p("vit.patch.pos"));
            NodeId mid = ops::mean_rows(t, x);
            for (std::size_t i = 0; i < cfg.encoder_depth; ++i) {
                const std::string pre = "vit.blk" + std::to_string(i) + ".";
                EncoderBlockNodes blk{p(pre + "attn.wq"), p(pre + "attn.wk"),
                                      p(pre + "attn.wv"), p(pre + "mlp1.w"), p(pre + "mlp1.b"),
                                      p(pre + "mlp2.w"), p(pre + "mlp2.b")};
                x = transformer_encoder_block_op(t, x, blk);
            }
            NodeId pooled = ops::mean_rows(t, x);
            BranchFeatures f;
            f.mid = mid;
            f.final = dense_op(t, p("vit.proj.w"), p("vit.proj.b"), pooled, Activation::Relu);
            feats.push_back(f);
        }
        if (model.branch_active(Branch::FCN)) {
            NodeId sv = t.leaf(sample.structured);
            NodeId hidden = dense_op(t, p("fcn.hidden.w"), p("fcn.hidden.b"), sv,
                                     Activation::Relu);
            BranchFeatures f;
            f.mid = hidden;
            f.final = dense_op(t, p("fcn.out.w"), p("fcn.out.b"), hidden, Activation::Relu);
            feats.push_back(f);
        }
        if (feats.empty()) throw NoActiveBranch("model_forward: no active branch");
    }

    NodeId fused = 0;
    switch (cfg.fusion) {
        case FusionMode::Early: {
            std::vector<NodeId> raw;
            if (model.branch_active(Branch::CNN) || model.branch_active(Branch::VIT))
                raw.push_back(ops::reshape(t, image_node(), {model.height * model.width}));
            if (model.branch_active(Branch::RNN)) {
                NodeId emb = ops::embedding(t, p("rnn.embed.table"), tokens);
                raw.push_back(ops::mean_rows(t, emb));
            }
            if (model.branch_active(Branch::FCN)) raw.push_back(t.leaf(sample.structured));
            if (raw.empty()) throw NoActiveBranch("early fusion: no active branch");
            NodeId cat = raw.size() == 1 ? raw[0] : ops::concat(t, raw);
            fused = dense_op(t, p("early.enc.w"), p("early.enc.b"), cat, Activation::Relu);
            break;
        }
        case FusionMode::Late: {
            std::vector<NodeId> finals;
            for (const auto& f : feats) finals.push_back(f.final);
            fused = finals.size() == 1 ? finals[0] : ops::concat(t, finals);
            break;
        }
        case FusionMode::Intermediate: {
            std::vector<NodeId> parts;
            for (const auto& f : feats) parts.push_back(f.mid);
            for (const auto& f : feats) parts.push_back(f.final);
            NodeId cat = parts.size() == 1 ? parts[0] : ops::concat(t, parts);
            fused = dense_op(t, p("trunk.w"), p("trunk.b"), cat, Activation::Relu);
            break;
        }
        case FusionMode::Attention: {
            std::vector<NodeId> finals;
            for (const auto& f : feats) finals.push_back(f.final);
            fused = attention_fuse_op(t, p("fuse.wq"), p("fuse.wk"), p("fuse.wv"), finals);
            break;
        }
        case FusionMode::WeightedSum: {
            std::vector<NodeId> finals;
            for (const auto& f : feats) finals.push_back(f.final);
            fused = weighted_sum_fuse_op(t, p("fuse.logits"), finals);
            break;
        }
    }

    NodeId hidden = dense_op(t, p("cls.hidden.w"), p("cls.hidden.b"), fused, Activation::Relu);
    NodeId logits = dense_op(t, p("cls.out.w"), p("cls.out.b"), hidden, Activation::Identity);
    return ops::softmax_vec(t, logits);
}

Tensor predict(const MultimodalModel& model, const MultimodalSample& sample) {
    Tape t;
    const auto params = param_leaves(t, model);
    return t.value(model_forward(t, model, params, sample));
}

int predict_label(const MultimodalModel& model, const MultimodalSample& sample) {
    const Tensor probs = predict(model, sample);
    int best = 0;
    for (std::size_t c = 1; c < probs.size(); ++c)
        if (probs.data[c] > probs.data[static_cast<std::size_t>(best)])
            best = static_cast<int>(c);
    return best;
}

Tensor late_fuse(const std::vector<Tensor>& features) {
    if (features.empty()) throw DimMismatch("late_fuse: no features");
    const std::size_t d_f = features[0].size();
    std::vector<double> vals;
    for (const auto& f : features) {
        if (f.rank() != 1 || f.size() != d_f) throw DimMismatch("late_fuse: feature dims differ");
        vals.insert(vals.end(), f.data.begin(), f.data.end());
    }
    const std::size_t total = vals.size();
    return Tensor::from_values({total}, std::move(vals));
}

Tensor attention_fuse(const std::vector<Tensor>& features, const AttentionHead& head) {
    Tape t;
    std::vector<NodeId> ids;
    for (const auto& f : features) ids.push_back(t.leaf(f));
    return t.value(attention_fuse_op(t, t.leaf(head.w_q), t.leaf(head.w_k), t.leaf(head.w_v),
                                     ids));
}

Tensor weighted_sum_fuse(const std::vector<Tensor>& features, const Tensor& logits) {
    Tape t;
    std::vector<NodeId> ids;
    for (const auto& f : features) ids.push_back(t.leaf(f));
    return t.value(weighted_sum_fuse_op(t, t.leaf(logits), ids));
}

} // namespace mmf
