#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mmfusion/data.hpp"

using namespace mmf;

TEST_CASE("spec validation") {
    DatasetSpec s;
    s.validate(); // defaults are valid
    s.n_samples = 0;
    CHECK_THROWS_AS(s.validate(), BadSpec);
    s = DatasetSpec{};
    s.s_img = 1.5;
    CHECK_THROWS_AS(s.validate(), BadSpec);
    s = DatasetSpec{};
    s.vocab_size = 4; // too small for 3 class bigrams plus pad
    CHECK_THROWS_AS(s.validate(), BadSpec);
}

TEST_CASE("generation is deterministic and well-formed") {
    DatasetSpec spec;
    spec.n_samples = 200;
    const Dataset a = generate(spec);
    const Dataset b = generate(spec);
    CHECK(a == b);

    spec.seed = 43;
    const Dataset c = generate(spec);
    CHECK_FALSE(a == c);

    for (const auto& s : a.samples) {
        REQUIRE(s.image.shape == std::vector<std::size_t>{6, 6});
        REQUIRE(s.structured.shape == std::vector<std::size_t>{4});
        CHECK(s.label >= 0);
        CHECK(s.label < 3);
        CHECK(s.tokens.size() <= 8);
        CHECK(s.tokens.size() >= 3);
        for (int tok : s.tokens) {
            CHECK(tok >= 1); // 0 is the reserved pad token
            CHECK(tok < 16);
        }
    }
}

TEST_CASE("class balance within 3 sigma") {
    DatasetSpec spec;
    spec.n_samples = 3000;
    const Dataset ds = generate(spec);
    std::vector<std::size_t> counts(3, 0);
    for (const auto& s : ds.samples) ++counts[std::size_t(s.label)];
    const double expected = 1000.0;
    const double sigma = std::sqrt(3000.0 * (1.0 / 3.0) * (2.0 / 3.0));
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(std::abs(double(counts[c]) - expected) <= 3.0 * sigma);
}

TEST_CASE("Monte-Carlo Bayes oracle on the default spec") {
    DatasetSpec spec;
    const BayesReport r = bayes_report(spec, 10000);
    for (double acc : {r.acc_image, r.acc_tokens, r.acc_struct}) {
        CHECK(acc >= 0.65);
        CHECK(acc <= 0.85);
    }
    CHECK(r.acc_joint >= 0.93);
}

TEST_CASE("noiseless full-strength generator is perfectly separable") {
    DatasetSpec spec;
    spec.noise = 0.0;
    spec.s_img = spec.s_seq = spec.s_struct = 1.0;
    const BayesReport r = bayes_report(spec, 2000);
    CHECK(r.acc_image == doctest::Approx(1.0));
    CHECK(r.acc_tokens == doctest::Approx(1.0));
    CHECK(r.acc_struct == doctest::Approx(1.0));
    CHECK(r.acc_joint == doctest::Approx(1.0));
}

TEST_CASE("zero signal strengths give chance-level accuracy") {
    DatasetSpec spec;
    spec.s_img = spec.s_seq = spec.s_struct = 0.0;
    const BayesReport r = bayes_report(spec, 4000);
    for (double acc : {r.acc_image, r.acc_tokens, r.acc_struct, r.acc_joint}) {
        CHECK(acc >= 1.0 / 3.0 - 0.05);
        CHECK(acc <= 1.0 / 3.0 + 0.05);
    }
}

TEST_CASE("standardize examples") {
    const Tensor m = Tensor::from_values({2, 1}, {1, 3});
    auto [z, stats] = standardize(m, std::nullopt);
    CHECK(stats.mean.data[0] == doctest::Approx(2.0));
    CHECK(stats.stddev.data[0] == doctest::Approx(1.0));
    CHECK(z.data[0] == doctest::Approx(-1.0));
    CHECK(z.data[1] == doctest::Approx(1.0));

    const Tensor constant({3, 2}, 4.0);
    auto [zc, sc] = standardize(constant, std::nullopt);
    for (double v : zc.data) CHECK(v == 0.0);

    // applying train stats to other data uses the train mean
    const Tensor test = Tensor::from_values({1, 1}, {10.0});
    auto [zt, st] = standardize(test, stats);
    CHECK(zt.data[0] == doctest::Approx((10.0 - 2.0) / 1.0));
}

TEST_CASE("augmentation building blocks") {
    const Tensor img = Tensor::from_values({2, 2}, {1, 2, 3, 4});

    // rotate90 only: force it to fire by scanning seeds for one that applies it
    {
        bool found = false;
        for (std::uint64_t seed = 0; seed < 32 && !found; ++seed) {
            Rng probe(seed);
            const bool fires = probe.next_uniform() < 0.5;
            if (!fires) continue;
            Rng rng(seed);
            const Tensor out = augment(img, rng, unsigned(AugmentKind::Rotate90));
            CHECK(out.data == std::vector<double>{3, 1, 4, 2});
            found = true;
        }
        CHECK(found);
    }
    // flip_h fires: [[1,2],[3,4]] -> [[2,1],[4,3]]; applying twice is identity
    {
        for (std::uint64_t seed = 0; seed < 32; ++seed) {
            Rng probe(seed);
            if (!(probe.next_uniform() < 0.5)) continue;
            Rng rng(seed);
            const Tensor once = augment(img, rng, unsigned(AugmentKind::FlipH));
            CHECK(once.data == std::vector<double>{2, 1, 4, 3});
            Rng rng2(seed);
            Tensor twice = augment(once, rng2, unsigned(AugmentKind::FlipH));
            CHECK(twice == img);
            break;
        }
    }
    // no kinds enabled -> identity regardless of rng state
    {
        Rng rng(3);
        CHECK(augment(img, rng, 0) == img);
    }
    // rotate90 on a non-square image is rejected
    {
        Rng rng(4);
        CHECK_THROWS_AS(augment(Tensor({2, 4}, 1.0), rng, unsigned(AugmentKind::Rotate90)),
                        NonSquareRotate);
    }
    // scale multiplies by a factor in [0.8, 1.2] when it fires
    {
        for (std::uint64_t seed = 0; seed < 32; ++seed) {
            Rng probe(seed);
            if (!(probe.next_uniform() < 0.5)) continue;
            Rng rng(seed);
            const Tensor out = augment(img, rng, unsigned(AugmentKind::Scale));
            const double f = out.data[0] / img.data[0];
            CHECK(f >= 0.8);
            CHECK(f <= 1.2);
            for (std::size_t i = 0; i < img.size(); ++i)
                CHECK(out.data[i] == doctest::Approx(img.data[i] * f));
            break;
        }
    }
}

TEST_CASE("pad_or_truncate examples") {
    CHECK(pad_or_truncate({5, 6}, 4) == std::vector<int>{5, 6, 0, 0});
    CHECK(pad_or_truncate({1, 2, 3, 4, 5}, 3) == std::vector<int>{1, 2, 3});
    CHECK(pad_or_truncate({}, 2) == std::vector<int>{0, 0});
    CHECK(pad_or_truncate({9}, 1) == std::vector<int>{9});
}

TEST_CASE("MMDS round-trip is field-exact and byte-stable") {
    DatasetSpec spec;
    spec.n_samples = 50;
    const Dataset ds = generate(spec);

    std::stringstream ss;
    save_dataset(ss, ds);
    const std::string bytes = ss.str();
    const Dataset back = load_dataset(ss);
    CHECK(back == ds);

    std::stringstream ss2;
    save_dataset(ss2, back);
    CHECK(ss2.str() == bytes);
}

TEST_CASE("MMDS corruption handling") {
    DatasetSpec spec;
    spec.n_samples = 5;
    const Dataset ds = generate(spec);
    std::stringstream ss;
    save_dataset(ss, ds);
    std::string bytes = ss.str();

    {
        std::string bad = bytes;
        bad[1] = 'X';
        std::stringstream is(bad);
        CHECK_THROWS_AS(load_dataset(is), BadMagic);
    }
    {
        std::string bad = bytes;
        bad[4] = 9; // version field
        std::stringstream is(bad);
        CHECK_THROWS_AS(load_dataset(is), VersionMismatch);
    }
    {
        std::stringstream is(bytes.substr(0, bytes.size() / 2));
        CHECK_THROWS(load_dataset(is));
    }
}

TEST_CASE("prototypes and bigrams") {
    DatasetSpec spec;
    const Tensor p0 = image_prototype(spec, 0);
    const Tensor p1 = image_prototype(spec, 1);
    CHECK(p0.shape == std::vector<std::size_t>{6, 6});
    CHECK_FALSE(p0 == p1);

    const auto [t1, t2] = token_bigram(spec, 0);
    CHECK(t1 == 1);
    CHECK(t2 == 2);
    const auto [u1, u2] = token_bigram(spec, 2);
    CHECK(u1 == 5);
    CHECK(u2 == 6);

    const Tensor s1 = struct_prototype(spec, 1);
    CHECK(s1.shape == std::vector<std::size_t>{4});
}
