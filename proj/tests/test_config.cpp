#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "mmfusion/config.hpp"

using namespace mmf;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& contents) {
        path = std::string(std::tmpnam(nullptr)) + ".cfg";
        std::ofstream os(path);
        os << contents;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("defaults match the documented protocol") {
    const Config c = Config::defaults();
    const TrainConfig t = c.train_config();
    CHECK(t.lr == doctest::Approx(0.001));
    CHECK(t.batch_size == 32);
    CHECK(t.split_train == doctest::Approx(0.70));
    CHECK(t.split_val == doctest::Approx(0.15));
    CHECK(t.split_test == doctest::Approx(0.15));
    CHECK(t.patience == 10);
    CHECK(t.lr_decay_factor == doctest::Approx(0.5));
    CHECK(t.lr_decay_every == 20);
    CHECK(t.max_epochs == 200);
    CHECK(t.seed == 42);

    const DatasetSpec d = c.dataset_spec();
    CHECK(d.n_samples == 1000);
    CHECK(d.n_classes == 3);
    CHECK(d.image_size == 6);
    CHECK(d.l_max == 8);
    CHECK(d.vocab_size == 16);
    CHECK(d.d_s == 4);
    CHECK(d.noise == doctest::Approx(0.3));

    const ModelConfig m = c.model_config();
    CHECK(m.fusion == FusionMode::Attention);
    CHECK(m.d_f == 16);
    CHECK(m.embed_dim == 8);
    CHECK(m.encoder_depth == 1);
}

TEST_CASE("empty file leaves every default untouched") {
    const TempFile f("");
    const Config a = Config::load(f.path);
    const Config b = Config::defaults();
    for (const auto& [key, def] : Config::schema_help()) {
        CHECK(a.get_string(key) == b.get_string(key));
        CHECK(a.get_string(key) == def);
    }
}

TEST_CASE("file values override defaults, CLI overrides beat the file") {
    const TempFile f("train.lr = 0.01\n# comment line\n\nfusion.mode = late\n");
    const Config file_only = Config::load(f.path);
    CHECK(file_only.get_real("train.lr") == doctest::Approx(0.01));
    CHECK(file_only.get_string("fusion.mode") == "late");

    const Config with_override = Config::load(f.path, {"train.lr=0.5"});
    CHECK(with_override.get_real("train.lr") == doctest::Approx(0.5));
    CHECK(with_override.get_string("fusion.mode") == "late"); // untouched
}

TEST_CASE("unknown keys are rejected") {
    Config c = Config::defaults();
    CHECK_THROWS_AS(c.set("train.learning_rate", "0.1"), UnknownKey);
    const TempFile f("no.such.key = 1\n");
    CHECK_THROWS_AS(Config::load(f.path), UnknownKey);
    CHECK_THROWS_AS(Config::load(std::nullopt, {"bogus=1"}), UnknownKey);
}

TEST_CASE("type errors are rejected with the offending key") {
    Config c = Config::defaults();
    CHECK_THROWS_AS(c.set("train.lr", "fast"), ConfigTypeError);
    CHECK_THROWS_AS(c.set("train.batch_size", "-3"), ConfigTypeError);
    CHECK_THROWS_AS(c.set("data.s_img", "1.5"), ConfigTypeError);
    CHECK_THROWS_AS(c.set("fusion.mode", "telepathy"), ConfigTypeError);
    CHECK_THROWS_AS(c.set("train.augment", "blur"), ConfigTypeError);
    try {
        c.set("train.lr", "fast");
        FAIL("expected ConfigTypeError");
    } catch (const ConfigTypeError& e) {
        CHECK(std::string(e.what()).find("train.lr") != std::string::npos);
    }
}

TEST_CASE("malformed lines and overrides are rejected") {
    const TempFile f("train.lr 0.01\n");
    CHECK_THROWS_AS(Config::load(f.path), ConfigTypeError);
    CHECK_THROWS_AS(Config::load(std::nullopt, {"train.lr"}), ConfigTypeError);
}

TEST_CASE("missing config file is an io error") {
    CHECK_THROWS_AS(Config::load(std::string("/no/such/dir/config.cfg")), IoError);
}

TEST_CASE("augment kind parsing") {
    CHECK(parse_augment_kinds("none") == 0);
    CHECK(parse_augment_kinds("") == 0);
    CHECK(parse_augment_kinds("scale") == unsigned(AugmentKind::Scale));
    CHECK(parse_augment_kinds("rotate90,flip_h") ==
          (unsigned(AugmentKind::Rotate90) | unsigned(AugmentKind::FlipH)));
    CHECK(parse_augment_kinds(" flip_v , scale ") ==
          (unsigned(AugmentKind::FlipV) | unsigned(AugmentKind::Scale)));
    CHECK_THROWS_AS(parse_augment_kinds("sharpen"), ConfigTypeError);
}

TEST_CASE("schema help lists every key with its default") {
    const auto help = Config::schema_help();
    CHECK(help.size() == 31);
    bool found_lr = false;
    for (const auto& [key, def] : help)
        if (key == "train.lr") {
            found_lr = true;
            CHECK(def == "0.001");
        }
    CHECK(found_lr);
}

TEST_CASE("whitespace and comments are tolerated") {
    const TempFile f("  # leading comment\n   train.patience =  7  \n\t\n");
    const Config c = Config::load(f.path);
    CHECK(c.train_config().patience == 7);
}
