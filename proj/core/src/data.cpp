#include "mmfusion/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "mmfusion/errors.hpp"

namespace mmf {

// Prototype amplitudes chosen so that at the default noise level (0.3) each
// modality's Bayes accuracy lands near 0.75 while the joint posterior stays
// above 0.93.
static constexpr double kImageAmp = 0.22;
static constexpr double kStructAmp = 0.66;

void DatasetSpec::validate() const {
    if (n_classes < 2) throw BadSpec("n_classes must be >= 2");
    if (n_samples < 1) throw BadSpec("n_samples must be >= 1");
    if (image_size < 2 || image_size % 2 != 0) throw BadSpec("image_size must be even and >= 2");
    if (l_max < 3) throw BadSpec("l_max must be >= 3");
    if (vocab_size < 2 + 2 * n_classes) throw BadSpec("vocab_size too small for class bigrams");
    if (d_s < 1) throw BadSpec("d_s must be >= 1");
    for (double s : {s_img, s_seq, s_struct})
        if (s < 0.0 || s > 1.0) throw BadSpec("signal strengths must lie in [0,1]");
    if (noise < 0.0) throw BadSpec("noise must be >= 0");
}

Tensor image_prototype(const DatasetSpec& spec, std::size_t cls) {
    const std::size_t n = spec.image_size, half = n / 2;
    Tensor img({n, n}, 0.0);
    const std::size_t quadrant = cls % 4;
    const std::size_t y0 = (quadrant / 2) * half, x0 = (quadrant % 2) * half;
    for (std::size_t y = 0; y < half; ++y)
        for (std::size_t x = 0; x < half; ++x) img.at(y0 + y, x0 + x) = kImageAmp;
    return img;
}

Tensor struct_prototype(const DatasetSpec& spec, std::size_t cls) {
    Tensor v({spec.d_s}, 0.0);
    v.data[cls % spec.d_s] = kStructAmp;
    return v;
}

std::pair<int, int> token_bigram(const DatasetSpec& spec, std::size_t cls) {
    (void)spec;
    return {static_cast<int>(1 + 2 * cls), static_cast<int>(2 + 2 * cls)};
}

double token_signal_quality(const DatasetSpec& spec) {
    return std::clamp(1.0 - (5.0 / 9.0) * spec.noise, 0.0, 1.0);
}

// z_m = 1 iff frac(u + m/3) < s_m; marginals are Bernoulli(s_m), jointly
// anti-correlated through the shared u.
static bool informative(double u, std::size_t modality, double strength) {
    double f = u + double(modality) / 3.0;
    f -= std::floor(f);
    return f < strength;
}

static MultimodalSample generate_one(const DatasetSpec& spec, std::uint64_t index) {
    Rng rng(Rng::substream_seed(spec.seed, index));
    MultimodalSample s;
    s.label = static_cast<int>(rng.next_below(spec.n_classes));
    const double u = rng.next_uniform();
    const bool z_img = informative(u, 0, spec.s_img);
    const bool z_seq = informative(u, 1, spec.s_seq);
    const bool z_struct = informative(u, 2, spec.s_struct);

    // image
    s.image = z_img ? image_prototype(spec, static_cast<std::size_t>(s.label))
                    : Tensor({spec.image_size, spec.image_size}, 0.0);
    for (auto& p : s.image.data) p += rng.next_normal(0.0, spec.noise);

    // tokens: length uniform in [3, l_max]; informative sequences start with
    // the class bigram unless degraded by the noise-linked quality coin
    const std::size_t len = 3 + rng.next_below(spec.l_max - 2);
    const bool bigram = z_seq && rng.next_uniform() < token_signal_quality(spec);
    s.tokens.resize(len);
    for (auto& tok : s.tokens)
        tok = static_cast<int>(1 + rng.next_below(spec.vocab_size - 1));
    if (bigram) {
        auto [a, b] = token_bigram(spec, static_cast<std::size_t>(s.label));
        s.tokens[0] = a;
        s.tokens[1] = b;
    }

    // structured
    s.structured = z_struct ? struct_prototype(spec, static_cast<std::size_t>(s.label))
                            : Tensor({spec.d_s}, 0.0);
    for (auto& v : s.structured.data) v += rng.next_normal(0.0, spec.noise);

    return s;
}

Dataset generate(const DatasetSpec& spec) {
    spec.validate();
    Dataset ds;
    ds.n_classes = spec.n_classes;
    ds.height = ds.width = spec.image_size;
    ds.l_max = spec.l_max;
    ds.vocab_size = spec.vocab_size;
    ds.d_s = spec.d_s;
    ds.samples.reserve(spec.n_samples);
    for (std::size_t i = 0; i < spec.n_samples; ++i)
        ds.samples.push_back(generate_one(spec, i));
    return ds;
}

// ---- Bayes oracle ----

static double log_gaussian(const Tensor& x, const Tensor& mean, double sigma) {
    const double s = std::max(sigma, 1e-3);
    double ll = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x.data[i] - mean.data[i];
        ll += -0.5 * d * d / (s * s);
    }
    return ll - double(x.size()) * std::log(s);
}

namespace {

struct SampleLikelihoods {
    // log P(x_m | class, z_m) for each modality, class, and z in {0,1}.
    std::vector<double> img_inf, struct_inf; // per class
    double img_bg = 0, struct_bg = 0;
    std::vector<double> seq_inf; // per class (z=1, quality coin marginalized)
    double seq_bg = 0;
};

SampleLikelihoods likelihoods(const DatasetSpec& spec, const MultimodalSample& s) {
    SampleLikelihoods lk;
    const std::size_t k = spec.n_classes;
    lk.img_inf.resize(k);
    lk.struct_inf.resize(k);
    lk.seq_inf.resize(k);

    const Tensor zero_img({spec.image_size, spec.image_size}, 0.0);
    const Tensor zero_struct({spec.d_s}, 0.0);
    lk.img_bg = log_gaussian(s.image, zero_img, spec.noise);
    lk.struct_bg = log_gaussian(s.structured, zero_struct, spec.noise);

    const double log_tok = -std::log(double(spec.vocab_size - 1));
    const double q = token_signal_quality(spec);
    const std::size_t len = s.tokens.size();
    lk.seq_bg = double(len) * log_tok;

    for (std::size_t c = 0; c < k; ++c) {
        lk.img_inf[c] = log_gaussian(s.image, image_prototype(spec, c), spec.noise);
        lk.struct_inf[c] = log_gaussian(s.structured, struct_prototype(spec, c), spec.noise);
        const auto [a, b] = token_bigram(spec, c);
        const bool match = len >= 2 && s.tokens[0] == a && s.tokens[1] == b;
        // P = q * [match] * (V-1)^-(L-2) + (1-q) * (V-1)^-L
        double p = (1.0 - q) * std::exp(lk.seq_bg);
        if (match) p += q * std::exp(double(len - 2) * log_tok);
        lk.seq_inf[c] = std::log(std::max(p, 1e-300));
    }
    return lk;
}

double logsumexp(const std::vector<double>& terms) {
    double mx = -1e308;
    for (double t : terms) mx = std::max(mx, t);
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - mx);
    return mx + std::log(acc);
}

// Segments of u on which the informativeness pattern (z_img,z_seq,z_struct)
// is constant.
struct Segment {
    double length;
    bool z[3];
};

std::vector<Segment> u_segments(const DatasetSpec& spec) {
    const double s[3] = {spec.s_img, spec.s_seq, spec.s_struct};
    std::vector<double> cuts = {0.0, 1.0};
    for (int m = 0; m < 3; ++m) {
        double off = -double(m) / 3.0;
        for (double v : {off, s[m] + off}) {
            double f = v - std::floor(v);
            cuts.push_back(f);
        }
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    std::vector<Segment> segs;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double len = cuts[i + 1] - cuts[i];
        if (len <= 0) continue;
        const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
        Segment seg;
        seg.length = len;
        for (int m = 0; m < 3; ++m) seg.z[m] = informative(mid, m, s[m]);
        segs.push_back(seg);
    }
    return segs;
}

int argmax_class(const std::vector<double>& scores) {
    int best = 0;
    for (std::size_t c = 1; c < scores.size(); ++c)
        if (scores[c] > scores[best]) best = static_cast<int>(c);
    return best;
}

} // namespace

BayesReport bayes_report(const DatasetSpec& spec, std::size_t n_mc, std::uint64_t eval_seed) {
    spec.validate();
    DatasetSpec eval = spec;
    eval.seed = splitmix64(spec.seed ^ eval_seed);
    eval.n_samples = n_mc;

    const auto segs = u_segments(spec);
    const std::size_t k = spec.n_classes;
    std::size_t hit_img = 0, hit_seq = 0, hit_struct = 0, hit_joint = 0;

    for (std::size_t i = 0; i < n_mc; ++i) {
        const MultimodalSample s = generate_one(eval, i);
        const SampleLikelihoods lk = likelihoods(spec, s);

        std::vector<double> post_img(k), post_seq(k), post_struct(k), post_joint(k);
        for (std::size_t c = 0; c < k; ++c) {
            // per-modality: marginal z is Bernoulli(s_m)
            post_img[c] = logsumexp({std::log(std::max(spec.s_img, 1e-300)) + lk.img_inf[c],
                                     std::log(std::max(1.0 - spec.s_img, 1e-300)) + lk.img_bg});
            post_seq[c] = logsumexp({std::log(std::max(spec.s_seq, 1e-300)) + lk.seq_inf[c],
                                     std::log(std::max(1.0 - spec.s_seq, 1e-300)) + lk.seq_bg});
            post_struct[c] =
                logsumexp({std::log(std::max(spec.s_struct, 1e-300)) + lk.struct_inf[c],
                           std::log(std::max(1.0 - spec.s_struct, 1e-300)) + lk.struct_bg});
            // joint: integrate over u segments
            std::vector<double> terms;
            terms.reserve(segs.size());
            for (const auto& seg : segs) {
                double t = std::log(seg.length);
                t += seg.z[0] ? lk.img_inf[c] : lk.img_bg;
                t += seg.z[1] ? lk.seq_inf[c] : lk.seq_bg;
                t += seg.z[2] ? lk.struct_inf[c] : lk.struct_bg;
                terms.push_back(t);
            }
            post_joint[c] = logsumexp(terms);
        }
        if (argmax_class(post_img) == s.label) ++hit_img;
        if (argmax_class(post_seq) == s.label) ++hit_seq;
        if (argmax_class(post_struct) == s.label) ++hit_struct;
        if (argmax_class(post_joint) == s.label) ++hit_joint;
    }

    BayesReport r;
    r.acc_image = double(hit_img) / double(n_mc);
    r.acc_tokens = double(hit_seq) / double(n_mc);
    r.acc_struct = double(hit_struct) / double(n_mc);
    r.acc_joint = double(hit_joint) / double(n_mc);
    return r;
}

// ---- preprocessing ----

std::pair<Tensor, StandardizeStats> standardize(const Tensor& matrix,
                                                const std::optional<StandardizeStats>& stats) {
    if (matrix.rank() != 2) throw ShapeMismatch("standardize: [n, d] matrix required");
    const std::size_t n = matrix.shape[0], d = matrix.shape[1];
    StandardizeStats st;
    if (stats) {
        st = *stats;
        if (st.mean.size() != d) throw ShapeMismatch("standardize: stats dimension mismatch");
    } else {
        st.mean = Tensor({d}, 0.0);
        st.stddev = Tensor({d}, 0.0);
        for (std::size_t j = 0; j < d; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += matrix.at(i, j);
            m /= double(n);
            double var = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double dv = matrix.at(i, j) - m;
                var += dv * dv;
            }
            st.mean.data[j] = m;
            st.stddev.data[j] = std::max(std::sqrt(var / double(n)), 1e-8);
        }
    }
    Tensor out = matrix;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            out.at(i, j) = (matrix.at(i, j) - st.mean.data[j]) / st.stddev.data[j];
    return {out, st};
}

static Tensor rotate90_cw(const Tensor& img) {
    const std::size_t n = img.shape[0];
    if (img.shape[1] != n) throw NonSquareRotate("rotate90 requires a square image");
    Tensor out({n, n}, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) out.at(r, c) = img.at(n - 1 - c, r);
    return out;
}

Tensor augment(const Tensor& image, Rng& rng, unsigned kinds) {
    if (image.rank() != 2) throw ShapeMismatch("augment: rank-2 image required");
    Tensor out = image;
    if (kinds & static_cast<unsigned>(AugmentKind::Rotate90)) {
        if (rng.next_uniform() < 0.5) out = rotate90_cw(out);
    }
    if (kinds & static_cast<unsigned>(AugmentKind::FlipH)) {
        if (rng.next_uniform() < 0.5) {
            const std::size_t h = out.shape[0], w = out.shape[1];
            Tensor f({h, w}, 0.0);
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t c = 0; c < w; ++c) f.at(r, c) = out.at(r, w - 1 - c);
            out = f;
        }
    }
    if (kinds & static_cast<unsigned>(AugmentKind::FlipV)) {
        if (rng.next_uniform() < 0.5) {
            const std::size_t h = out.shape[0], w = out.shape[1];
            Tensor f({h, w}, 0.0);
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t c = 0; c < w; ++c) f.at(r, c) = out.at(h - 1 - r, c);
            out = f;
        }
    }
    if (kinds & static_cast<unsigned>(AugmentKind::Scale)) {
        if (rng.next_uniform() < 0.5) {
            const double factor = 0.8 + 0.4 * rng.next_uniform();
            for (auto& v : out.data) v *= factor;
        }
    }
    return out;
}

std::vector<int> pad_or_truncate(const std::vector<int>& tokens, std::size_t length,
                                 int pad_token) {
    if (length < 1) throw BadSpec("pad_or_truncate: length must be >= 1");
    std::vector<int> out(tokens.begin(),
                         tokens.begin() + std::min(tokens.size(), length));
    out.resize(length, pad_token);
    return out;
}

// ---- MMDS v1 ----

void save_dataset(std::ostream& os, const Dataset& ds) {
    io::write_magic(os, "MMDS");
    io::write_u32(os, 1);
    io::write_u32(os, static_cast<std::uint32_t>(ds.samples.size()));
    io::write_u32(os, static_cast<std::uint32_t>(ds.n_classes));
    io::write_u32(os, static_cast<std::uint32_t>(ds.height));
    io::write_u32(os, static_cast<std::uint32_t>(ds.width));
    io::write_u32(os, static_cast<std::uint32_t>(ds.l_max));
    io::write_u32(os, static_cast<std::uint32_t>(ds.vocab_size));
    io::write_u32(os, static_cast<std::uint32_t>(ds.d_s));
    for (const auto& s : ds.samples) {
        save_tensor(os, s.image);
        io::write_u32(os, static_cast<std::uint32_t>(s.tokens.size()));
        for (int tok : s.tokens) io::write_u32(os, static_cast<std::uint32_t>(tok));
        save_tensor(os, s.structured);
        io::write_u32(os, static_cast<std::uint32_t>(s.label));
    }
    if (!os) throw IoError("dataset write failed");
}

Dataset load_dataset(std::istream& is) {
    io::expect_magic(is, "MMDS");
    const std::uint32_t version = io::read_u32(is);
    if (version != 1) throw VersionMismatch("dataset version " + std::to_string(version));
    const std::uint32_t n = io::read_u32(is);
    Dataset ds;
    ds.n_classes = io::read_u32(is);
    ds.height = io::read_u32(is);
    ds.width = io::read_u32(is);
    ds.l_max = io::read_u32(is);
    ds.vocab_size = io::read_u32(is);
    ds.d_s = io::read_u32(is);
    ds.samples.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        MultimodalSample s;
        s.image = load_tensor(is);
        const std::uint32_t len = io::read_u32(is);
        if (len > ds.l_max) throw IoError("dataset: token count exceeds l_max");
        s.tokens.resize(len);
        for (auto& tok : s.tokens) tok = static_cast<int>(io::read_u32(is));
        s.structured = load_tensor(is);
        s.label = static_cast<int>(io::read_u32(is));
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    save_dataset(os, ds);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for read: " + path);
    return load_dataset(is);
}

} // namespace mmf
