#include "mmfusion/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "mmfusion/errors.hpp"

namespace mmf {

namespace {

enum class KeyType { Int, U64, Real, Fraction, FusionMode, Augment };

struct SchemaEntry {
    const char* key;
    KeyType type;
    const char* default_value;
};

// clang-format off
const SchemaEntry kSchema[] = {
    {"data.n_samples",        KeyType::Int,        "1000"},
    {"data.n_classes",        KeyType::Int,        "3"},
    {"data.image_size",       KeyType::Int,        "6"},
    {"data.l_max",            KeyType::Int,        "8"},
    {"data.vocab_size",       KeyType::Int,        "16"},
    {"data.d_s",              KeyType::Int,        "4"},
    {"data.s_img",            KeyType::Fraction,   "0.75"},
    {"data.s_seq",            KeyType::Fraction,   "0.75"},
    {"data.s_struct",         KeyType::Fraction,   "0.75"},
    {"data.noise",            KeyType::Real,       "0.3"},
    {"data.seed",             KeyType::U64,        "42"},
    {"model.embed_dim",       KeyType::Int,        "8"},
    {"model.rnn_hidden",      KeyType::Int,        "16"},
    {"model.conv_channels",   KeyType::Int,        "4"},
    {"model.d_model",         KeyType::Int,        "16"},
    {"model.encoder_depth",   KeyType::Int,        "1"},
    {"model.classifier_hidden", KeyType::Int,      "16"},
    {"model.mlp_hidden",      KeyType::Int,        "16"},
    {"fusion.mode",           KeyType::FusionMode, "attention"},
    {"fusion.d_f",            KeyType::Int,        "16"},
    {"train.lr",              KeyType::Real,       "0.001"},
    {"train.batch_size",      KeyType::Int,        "32"},
    {"train.split_train",     KeyType::Fraction,   "0.70"},
    {"train.split_val",       KeyType::Fraction,   "0.15"},
    {"train.split_test",      KeyType::Fraction,   "0.15"},
    {"train.patience",        KeyType::Int,        "10"},
    {"train.lr_decay_factor", KeyType::Fraction,   "0.5"},
    {"train.lr_decay_every",  KeyType::Int,        "20"},
    {"train.max_epochs",      KeyType::Int,        "200"},
    {"train.seed",            KeyType::U64,        "42"},
    {"train.augment",         KeyType::Augment,    "scale"},
};
// clang-format on

const SchemaEntry* find_entry(const std::string& key) {
    for (const auto& e : kSchema)
        if (key == e.key) return &e;
    return nullptr;
}

std::string trim(const std::string& s) {
    auto b = s.begin(), e = s.end();
    while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
    while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
    return {b, e};
}

bool parse_double(const std::string& s, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(s, &pos);
        return pos == s.size();
    } catch (...) {
        return false;
    }
}

bool parse_int(const std::string& s, std::int64_t& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

bool parse_u64(const std::string& s, std::uint64_t& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

} // namespace

unsigned parse_augment_kinds(const std::string& spec) {
    if (spec == "none" || spec.empty()) return 0;
    unsigned kinds = 0;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (part == "rotate90")
            kinds |= static_cast<unsigned>(AugmentKind::Rotate90);
        else if (part == "flip_h")
            kinds |= static_cast<unsigned>(AugmentKind::FlipH);
        else if (part == "flip_v")
            kinds |= static_cast<unsigned>(AugmentKind::FlipV);
        else if (part == "scale")
            kinds |= static_cast<unsigned>(AugmentKind::Scale);
        else
            throw ConfigTypeError("train.augment: unknown kind '" + part + "'");
    }
    return kinds;
}

void Config::set(const std::string& key, const std::string& value) {
    const SchemaEntry* entry = find_entry(key);
    if (!entry) throw UnknownKey("unknown config key: " + key);
    switch (entry->type) {
        case KeyType::Int: {
            std::int64_t v;
            if (!parse_int(value, v) || v < 0)
                throw ConfigTypeError(key + ": expected a non-negative integer, got '" + value +
                                      "'");
            break;
        }
        case KeyType::U64: {
            std::uint64_t v;
            if (!parse_u64(value, v))
                throw ConfigTypeError(key + ": expected an unsigned integer, got '" + value +
                                      "'");
            break;
        }
        case KeyType::Real: {
            double v;
            if (!parse_double(value, v))
                throw ConfigTypeError(key + ": expected a number, got '" + value + "'");
            break;
        }
        case KeyType::Fraction: {
            double v;
            if (!parse_double(value, v) || v < 0.0 || v > 1.0)
                throw ConfigTypeError(key + ": expected a number in [0,1], got '" + value + "'");
            break;
        }
        case KeyType::FusionMode: fusion_mode_from_string(value); break;
        case KeyType::Augment: parse_augment_kinds(value); break;
    }
    values_[key] = value;
}

Config Config::defaults() {
    Config c;
    for (const auto& e : kSchema) c.values_[e.key] = e.default_value;
    return c;
}

Config Config::load(const std::optional<std::string>& path,
                    const std::vector<std::string>& overrides) {
    Config c = defaults();
    if (path) {
        std::ifstream is(*path);
        if (!is) throw IoError("cannot open config file: " + *path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const std::string stripped = trim(line);
            if (stripped.empty() || stripped[0] == '#') continue;
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw ConfigTypeError(*path + ":" + std::to_string(lineno) +
                                      ": expected key = value");
            c.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
        }
    }
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ConfigTypeError("override must be key=value: " + ov);
        c.set(trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
    }
    return c;
}

std::int64_t Config::get_int(const std::string& key) const {
    std::int64_t v{};
    parse_int(values_.at(key), v);
    return v;
}

std::uint64_t Config::get_u64(const std::string& key) const {
    std::uint64_t v{};
    parse_u64(values_.at(key), v);
    return v;
}

double Config::get_real(const std::string& key) const {
    double v{};
    parse_double(values_.at(key), v);
    return v;
}

const std::string& Config::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UnknownKey("unknown config key: " + key);
    return it->second;
}

DatasetSpec Config::dataset_spec() const {
    DatasetSpec s;
    s.n_samples = static_cast<std::size_t>(get_int("data.n_samples"));
    s.n_classes = static_cast<std::size_t>(get_int("data.n_classes"));
    s.image_size = static_cast<std::size_t>(get_int("data.image_size"));
    s.l_max = static_cast<std::size_t>(get_int("data.l_max"));
    s.vocab_size = static_cast<std::size_t>(get_int("data.vocab_size"));
    s.d_s = static_cast<std::size_t>(get_int("data.d_s"));
    s.s_img = get_real("data.s_img");
    s.s_seq = get_real("data.s_seq");
    s.s_struct = get_real("data.s_struct");
    s.noise = get_real("data.noise");
    s.seed = get_u64("data.seed");
    return s;
}

ModelConfig Config::model_config() const {
    ModelConfig m;
    m.fusion = fusion_mode_from_string(get_string("fusion.mode"));
    m.d_f = static_cast<std::size_t>(get_int("fusion.d_f"));
    m.embed_dim = static_cast<std::size_t>(get_int("model.embed_dim"));
    m.rnn_hidden = static_cast<std::size_t>(get_int("model.rnn_hidden"));
    m.conv_channels = static_cast<std::size_t>(get_int("model.conv_channels"));
    m.d_model = static_cast<std::size_t>(get_int("model.d_model"));
    m.encoder_depth = static_cast<std::size_t>(get_int("model.encoder_depth"));
    m.classifier_hidden = static_cast<std::size_t>(get_int("model.classifier_hidden"));
    m.mlp_hidden = static_cast<std::size_t>(get_int("model.mlp_hidden"));
    return m;
}

TrainConfig Config::train_config() const {
    TrainConfig t;
    t.lr = get_real("train.lr");
    t.batch_size = static_cast<std::size_t>(get_int("train.batch_size"));
    t.split_train = get_real("train.split_train");
    t.split_val = get_real("train.split_val");
    t.split_test = get_real("train.split_test");
    t.patience = static_cast<std::size_t>(get_int("train.patience"));
    t.lr_decay_factor = get_real("train.lr_decay_factor");
    t.lr_decay_every = static_cast<std::size_t>(get_int("train.lr_decay_every"));
    t.max_epochs = static_cast<std::size_t>(get_int("train.max_epochs"));
    t.seed = get_u64("train.seed");
    t.augment_kinds = parse_augment_kinds(get_string("train.augment"));
    return t;
}

std::vector<std::pair<std::string, std::string>> Config::schema_help() {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : kSchema) out.emplace_back(e.key, e.default_value);
    return out;
}

} // namespace mmf
