#include "mmfusion/training.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

namespace mmf {

void TrainConfig::validate() const {
    if (lr <= 0.0) throw BadSpec("lr must be > 0");
    if (batch_size < 1) throw BadSpec("batch_size must be >= 1");
    if (lr_decay_factor <= 0.0 || lr_decay_factor > 1.0)
        throw BadSpec("lr_decay_factor must lie in (0, 1]");
    if (lr_decay_every < 1) throw BadSpec("lr_decay_every must be >= 1");
    const double total = split_train + split_val + split_test;
    if (std::abs(total - 1.0) > 1e-9 || split_train <= 0 || split_val <= 0 || split_test <= 0)
        throw BadSpec("split fractions must be positive and sum to 1");
}

double cross_entropy(const Tensor& probs, int label) {
    if (probs.rank() != 1) throw ShapeMismatch("cross_entropy: rank-1 vector required");
    if (label < 0 || static_cast<std::size_t>(label) >= probs.size())
        throw LabelOutOfRange("cross_entropy: label out of range");
    // Unclamped on purpose: p = 0 gives an infinite loss so divergence is
    // detected rather than masked.
    const double p = probs.data[static_cast<std::size_t>(label)];
    return -std::log(p);
}

AdamState AdamState::init(const std::vector<Tensor>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
        s.m.emplace_back(p.shape, 0.0);
        s.v.emplace_back(p.shape, 0.0);
    }
    return s;
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeMismatch("adam_step: parameter/gradient/state count mismatch");
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].same_shape(grads[i]))
            throw ShapeMismatch("adam_step: gradient shape mismatch");
        Tensor& p = params[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = grads[i].data[j];
            m.data[j] = state.beta1 * m.data[j] + (1.0 - state.beta1) * g;
            v.data[j] = state.beta2 * v.data[j] + (1.0 - state.beta2) * g * g;
            const double m_hat = m.data[j] / bc1;
            const double v_hat = v.data[j] / bc2;
            p.data[j] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

double decay_lr(std::size_t epoch, const TrainConfig& config) {
    return config.lr * std::pow(config.lr_decay_factor, double(epoch / config.lr_decay_every));
}

StopDecision early_stop_update(EarlyStopState& state, double val_loss, std::size_t patience,
                               const std::vector<Tensor>& params, std::size_t epoch) {
    if (!std::isfinite(val_loss)) throw NumericFailure("early stop: non-finite validation loss");
    if (val_loss <= state.best_val_loss - 1e-6) {
        state.best_val_loss = val_loss;
        state.epochs_since_improve = 0;
        state.best_epoch = epoch;
        state.best_snapshot = params;
        return StopDecision::Continue;
    }
    ++state.epochs_since_improve;
    return state.epochs_since_improve >= patience ? StopDecision::Stop : StopDecision::Continue;
}

std::array<std::vector<MultimodalSample>, 3> split_dataset(
    const std::vector<MultimodalSample>& samples, const TrainConfig& config, Rng& rng) {
    config.validate();
    const std::size_t n = samples.size();
    if (n < 3) throw TooFewSamples("split_dataset: need at least 3 samples");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = rng.next_below(i + 1);
        std::swap(order[i], order[j]);
    }
    const auto cut1 = static_cast<std::size_t>(std::floor(config.split_train * double(n)));
    const auto cut2 = static_cast<std::size_t>(
        std::floor((config.split_train + config.split_val) * double(n)));
    std::array<std::vector<MultimodalSample>, 3> out;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t part = i < cut1 ? 0 : (i < cut2 ? 1 : 2);
        out[part].push_back(samples[order[i]]);
    }
    return out;
}

static double eval_mean_loss(const MultimodalModel& model,
                             const std::vector<MultimodalSample>& set) {
    if (set.empty()) return 0.0;
    double total = 0.0;
    for (const auto& s : set) total += cross_entropy(predict(model, s), s.label);
    return total / double(set.size());
}

TrainReport train(MultimodalModel& model, const std::vector<MultimodalSample>& train_set,
                  const std::vector<MultimodalSample>& val_set, const TrainConfig& config) {
    config.validate();
    if (train_set.empty()) throw TooFewSamples("train: empty training set");
    if (config.batch_size > train_set.size())
        throw BadSpec("train: batch_size exceeds training-set size");

    TrainReport report;
    AdamState adam = AdamState::init(model.param_values);
    EarlyStopState stopper;
    Rng shuffle_rng(splitmix64(config.seed ^ 0x73687566666c65ULL));
    Rng augment_rng(splitmix64(config.seed ^ 0x6175676d656e74ULL));

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        const double lr = decay_lr(epoch, config);

        for (std::size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.next_below(i + 1)]);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, order.size());
            Tape tape;
            const std::vector<NodeId> params = param_leaves(tape, model);
            NodeId batch_sum = 0;
            bool first = true;
            for (std::size_t i = start; i < end; ++i) {
                MultimodalSample s = train_set[order[i]];
                if (config.augment_kinds != 0)
                    s.image = augment(s.image, augment_rng, config.augment_kinds);
                NodeId probs = model_forward(tape, model, params, s);
                NodeId loss = ops::cross_entropy(tape, probs, s.label);
                batch_sum = first ? loss : ops::add(tape, batch_sum, loss);
                first = false;
            }
            NodeId batch_loss = ops::scale(tape, batch_sum, 1.0 / double(end - start));
            const double loss_value = tape.value(batch_loss).data[0];
            if (!std::isfinite(loss_value))
                throw NumericFailure("train: non-finite batch loss at epoch " +
                                     std::to_string(epoch));
            epoch_loss += loss_value * double(end - start);
            tape.backward(batch_loss);
            std::vector<Tensor> grads;
            grads.reserve(params.size());
            for (NodeId id : params) grads.push_back(tape.grad(id));
            adam_step(model.param_values, grads, adam, lr);
        }
        epoch_loss /= double(order.size());

        const double val_loss =
            val_set.empty() ? epoch_loss : eval_mean_loss(model, val_set);
        report.epochs.push_back({epoch_loss, val_loss, lr});

        if (early_stop_update(stopper, val_loss, config.patience, model.param_values, epoch) ==
            StopDecision::Stop)
            break;
    }

    if (!stopper.best_snapshot.empty()) {
        model.param_values = stopper.best_snapshot;
        report.best_epoch = stopper.best_epoch;
        report.best_val_loss = stopper.best_val_loss;
    }
    return report;
}

void write_report_csv(std::ostream& os, const TrainReport& report) {
    os << "epoch,train_loss,val_loss,lr\n";
    char buf[128];
    for (std::size_t i = 0; i < report.epochs.size(); ++i) {
        const auto& e = report.epochs[i];
        std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g\n", i, e.train_loss, e.val_loss,
                      e.lr);
        os << buf;
    }
}

static Tensor stack_flat(const std::vector<MultimodalSample>& set,
                         const Tensor MultimodalSample::*field) {
    const std::size_t n = set.size();
    const std::size_t d = (set[0].*field).size();
    Tensor m({n, d}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m.at(i, j) = (set[i].*field).data[j];
    return m;
}

static void apply_standardized(std::vector<MultimodalSample>& set,
                               Tensor MultimodalSample::*field,
                               const StandardizeStats& stats) {
    for (auto& s : set) {
        Tensor& t = s.*field;
        for (std::size_t j = 0; j < t.size(); ++j)
            t.data[j] = (t.data[j] - stats.mean.data[j]) / stats.stddev.data[j];
    }
}

PreparedData prepare_splits(const Dataset& ds, const TrainConfig& config) {
    Rng split_rng(splitmix64(config.seed ^ 0x73706c6974ULL));
    auto parts = split_dataset(ds.samples, config, split_rng);
    PreparedData out{std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
    if (out.train.empty()) return out;

    const auto [img_std, img_stats] =
        standardize(stack_flat(out.train, &MultimodalSample::image), std::nullopt);
    (void)img_std;
    const auto [st_std, st_stats] =
        standardize(stack_flat(out.train, &MultimodalSample::structured), std::nullopt);
    (void)st_std;
    for (auto* set : {&out.train, &out.val, &out.test}) {
        apply_standardized(*set, &MultimodalSample::image, img_stats);
        apply_standardized(*set, &MultimodalSample::structured, st_stats);
    }
    return out;
}

void save_checkpoint(std::ostream& os, const MultimodalModel& model) {
    io::write_magic(os, "MMF1");
    io::write_u32(os, 1);
    io::write_u32(os, static_cast<std::uint32_t>(model.param_count()));
    for (std::size_t i = 0; i < model.param_count(); ++i) {
        const std::string& name = model.param_names[i];
        io::write_u16(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        save_tensor(os, model.param_values[i]);
    }
    if (!os) throw IoError("checkpoint write failed");
}

void load_checkpoint(std::istream& is, MultimodalModel& model) {
    io::expect_magic(is, "MMF1");
    const std::uint32_t version = io::read_u32(is);
    if (version != 1) throw VersionMismatch("checkpoint version " + std::to_string(version));
    const std::uint32_t count = io::read_u32(is);
    if (count != model.param_count())
        throw ShapeMismatch("checkpoint parameter count does not match model");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t len = io::read_u16(is);
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw IoError("checkpoint: truncated name");
        Tensor value = load_tensor(is);
        const std::size_t idx = model.param_index(name);
        if (!model.param_values[idx].same_shape(value))
            throw ShapeMismatch("checkpoint: shape mismatch for " + name);
        model.param_values[idx] = std::move(value);
    }
}

void save_checkpoint(const std::string& path, const MultimodalModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    save_checkpoint(os, model);
}

void load_checkpoint(const std::string& path, MultimodalModel& model) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for read: " + path);
    load_checkpoint(is, model);
}

} // namespace mmf
