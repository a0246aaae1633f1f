#include "csg0/errors.hpp"
#include "csg0/metrics.hpp"
#include "csg0/toyscenes.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace csg0;

namespace {

const std::string kData = CSG0_DATA_DIR;

DomainSpec spec(const std::string& d) { return load_domain_spec(kData + "/domains/" + d + ".json"); }

bool contains(const SemanticMap& m, int id) { return std::find(m.labels.begin(), m.labels.end(), id) != m.labels.end(); }

bool same_scene(const Scene& a, const Scene& b) {
    return a.mask == b.mask && a.seed == b.seed &&
           std::equal(a.image.data().begin(), a.image.data().end(), b.image.data().begin());
}

std::array<double, 3> mean_color(const std::vector<Scene>& scenes, int id) {
    std::array<double, 3> s{0, 0, 0};
    double n = 0;
    for (const auto& sc : scenes) {
        const std::size_t hw = sc.mask.labels.size();
        for (std::size_t p = 0; p < hw; ++p) {
            if (sc.mask.labels[p] == id) {
                for (std::size_t c = 0; c < 3; ++c) {
                    s[c] += sc.image.data()[c * hw + p];
                }
                n += 1;
            }
        }
    }
    for (auto& v : s) {
        v /= n;
    }
    return s;
}

} // namespace

TEST(Scenes, Deterministic) {
    for (const char* d : {"A", "B", "C"}) {
        const auto s = spec(d);
        EXPECT_TRUE(same_scene(generate_scene(s, 42), generate_scene(s, 42)));
        EXPECT_FALSE(generate_scene(s, 42).mask == generate_scene(s, 43).mask);
    }
}

TEST(Scenes, ShapeAndRange) {
    const auto s = spec("C");
    const auto sc = generate_scene(s, 3);
    EXPECT_EQ(sc.image.shape(), (Shape{1, 3, 32, 48}));
    EXPECT_EQ(sc.mask.height, 32u);
    EXPECT_EQ(sc.mask.width, 48u);
    for (double v : sc.image.data()) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
    for (int id : sc.mask.labels) {
        EXPECT_TRUE(s.has_class(id));
    }
}

TEST(Scenes, ImageIsRenderOfMask) {
    const auto s = spec("B");
    const auto sc = generate_scene(s, 8);
    const auto img = render(sc.mask, s, sc.seed);
    EXPECT_TRUE(std::equal(img.data().begin(), img.data().end(), sc.image.data().begin()));
}

TEST(Scenes, NoBuildingsWhenRangeIsZero) {
    auto s = spec("A");
    s.layout.buildings = {0, 0};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        EXPECT_FALSE(contains(generate_layout(s, seed), 1));
    }
}

TEST(Scenes, NewClassFrequency) {
    const auto b = spec("B");
    // Only autorickshaw is new; the other two new classes are switched off.
    auto single = b;
    for (auto& c : single.classes) {
        if (c.id == 7 || c.id == 8) {
            c.probability = 0.0;
        }
    }
    std::size_t hits = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto m = generate_layout(single, seed);
        hits += contains(m, 6) || contains(m, 7) || contains(m, 8);
    }
    EXPECT_NEAR(hits / 200.0, 0.8, 0.07);
    // Per class in the shipped specs.
    for (const char* d : {"B", "C"}) {
        const auto s = spec(d);
        for (const auto& c : s.classes) {
            if (c.id < 6 || (std::string(d) == "C" && c.id < 9)) {
                continue;
            }
            std::size_t n = 0;
            for (std::uint64_t seed = 0; seed < 200; ++seed) {
                n += contains(generate_layout(s, seed), c.id);
            }
            EXPECT_NEAR(n / 200.0, 0.8, 0.07) << d << " " << c.name;
        }
    }
}

TEST(Render, ZeroAmplitudeGivesBaseColor) {
    auto s = spec("C");
    for (auto& c : s.classes) {
        c.noise = 0.0;
        c.stripe_period = 0;
    }
    const auto m = generate_layout(s, 5);
    const auto img = render(m, s, 5);
    const std::size_t hw = m.labels.size();
    for (std::size_t p = 0; p < hw; ++p) {
        const auto& col = s.style(m.labels[p]).color;
        for (std::size_t c = 0; c < 3; ++c) {
            EXPECT_EQ(img.data()[c * hw + p], col[c]);
        }
    }
}

TEST(Render, ClampsToUnitRange) {
    auto s = spec("A");
    for (auto& c : s.classes) {
        c.color = {1.0, 1.0, 1.0};
        c.noise = 0.5;
    }
    const auto img = render(generate_layout(s, 1), s, 1);
    EXPECT_EQ(*std::max_element(img.data().begin(), img.data().end()), 1.0);
    for (double v : img.data()) {
        EXPECT_LE(v, 1.0);
    }
}

TEST(Render, UnknownClassIsValidationError) {
    const auto s = spec("A");
    SemanticMap m(2, 2, 0);
    m.labels[3] = 7;
    EXPECT_THROW(render(m, s, 0), ValidationError);
}

TEST(Render, SharedClassColorsDifferAcrossDomains) {
    const auto a = make_dataset(spec("A"), 50, 0);
    const auto b = make_dataset(spec("B"), 50, 0);
    const auto ma = mean_color(a, 2);
    const auto mb = mean_color(b, 2);
    double dist = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        dist = std::max(dist, std::abs(ma[c] - mb[c]));
    }
    EXPECT_GT(dist, std::max(spec("A").style(2).noise, spec("B").style(2).noise));
}

TEST(Dataset, PrefixStable) {
    const auto s = spec("B");
    const auto big = make_dataset(s, 300, 17);
    const auto small = make_dataset(s, 20, 17);
    ASSERT_EQ(big.size(), 300u);
    for (std::size_t i = 0; i < 20; ++i) {
        EXPECT_TRUE(same_scene(big[i], small[i]));
        EXPECT_EQ(big[i].seed, 17 + i);
    }
    EXPECT_EQ(make_dataset(s, 1, 5).size(), 1u);
    EXPECT_THROW(make_dataset(s, 0, 5), ValidationError);
}

TEST(Dataset, FrequenciesReproducible) {
    auto maps = [] {
        std::vector<SemanticMap> m;
        for (const auto& sc : make_dataset(spec("A"), 100, 0)) {
            m.push_back(sc.mask);
        }
        return class_frequencies(m, 6);
    };
    EXPECT_EQ(maps(), maps());
}

TEST(Dataset, DomainsAreSeparable) {
    FeatureExtractor fe;
    auto images = [](const std::vector<Scene>& s) {
        std::vector<Tensor> out;
        for (const auto& sc : s) {
            out.push_back(sc.image);
        }
        return out;
    };
    const auto a1 = summarize(images(make_dataset(spec("A"), 50, 0)), fe);
    const auto a2 = summarize(images(make_dataset(spec("A"), 50, 1000)), fe);
    const auto b = summarize(images(make_dataset(spec("B"), 50, 0)), fe);
    const auto c = summarize(images(make_dataset(spec("C"), 50, 0)), fe);
    const double same = proxy_fid(a1, a2);
    EXPECT_GT(proxy_fid(a1, b), same);
    EXPECT_GT(proxy_fid(a1, c), same);
    EXPECT_GT(proxy_fid(b, c), same);
}

TEST(Spec, JsonRoundTripAndRegistryCheck) {
    const auto reg = LabelRegistry::from_file(kData + "/toy_mapping.csv");
    for (const char* d : {"A", "B", "C"}) {
        const auto s = spec(d);
        EXPECT_EQ(to_json(domain_spec_from_json(to_json(s))), to_json(s));
        EXPECT_NO_THROW(check_spec_against(s, reg));
    }
    auto bad = spec("A");
    bad.classes.push_back(bad.classes.back());
    bad.classes.back().id = 6; // belongs to B
    EXPECT_THROW(check_spec_against(bad, reg), ValidationError);
    auto j = to_json(spec("A"));
    j["unexpected"] = 1;
    EXPECT_THROW(domain_spec_from_json(j), ValidationError);
}

TEST(Noise, StatelessAndBounded) {
    EXPECT_EQ(pixel_noise(1, 2, 3, 0), pixel_noise(1, 2, 3, 0));
    EXPECT_NE(pixel_noise(1, 2, 3, 0), pixel_noise(1, 2, 3, 1));
    for (std::size_t i = 0; i < 1000; ++i) {
        const double v = pixel_noise(9, i, i / 7, i % 3);
        EXPECT_GE(v, -1.0);
        EXPECT_LT(v, 1.0);
    }
}
