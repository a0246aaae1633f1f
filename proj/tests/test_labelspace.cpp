#include "csg0/errors.hpp"
#include "csg0/labelspace.hpp"
#include "csg0/rng.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

using namespace csg0;

namespace {

const std::string kData = CSG0_DATA_DIR;

struct Row {
    std::string domain, name;
    int orig, cont;
};

// Plain line splitter, independent of the registry's parser.
std::vector<Row> read_rows(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            f.push_back(tok);
        }
        rows.push_back({f.at(0), f.at(1), std::stoi(f.at(2)), std::stoi(f.at(3))});
    }
    return rows;
}

void check_golden(const std::string& file, std::size_t expected_rows) {
    const auto rows = read_rows(kData + "/" + file);
    ASSERT_EQ(rows.size(), expected_rows);
    const auto reg = LabelRegistry::from_file(kData + "/" + file);
    for (const auto& r : rows) {
        if (r.orig >= 0) {
            EXPECT_EQ(reg.remap(r.domain, r.orig), r.cont) << r.domain << " " << r.name;
        }
        EXPECT_EQ(reg.remap_name(r.domain, r.name), r.cont) << r.domain << " " << r.name;
        EXPECT_TRUE(reg.registered(r.domain, r.cont));
    }
}

SemanticMap random_map(std::size_t h, std::size_t w, int classes, std::uint64_t seed) {
    Rng rng(seed);
    SemanticMap m(h, w);
    for (auto& v : m.labels) {
        v = static_cast<int>(rng.below(classes));
    }
    return m;
}

} // namespace

TEST(Golden, GtaIddRoundTrip) { check_golden("gta5_idd.csv", 79); }
TEST(Golden, CityscapesMapillaryRoundTrip) { check_golden("cityscapes_mapillary.csv", 109); }
TEST(Golden, ToyRoundTrip) { check_golden("toy_mapping.csv", 27); }

TEST(Golden, IddCounts) {
    const auto reg = LabelRegistry::from_file(kData + "/gta5_idd.csv");
    ASSERT_EQ(reg.num_steps(), 2u);
    EXPECT_EQ(reg.step(0).new_count, 35u);
    EXPECT_EQ(reg.step(0).old_count, 0u);
    EXPECT_EQ(reg.step(1).old_count, 35u);
    EXPECT_EQ(reg.step(1).new_count, 9u);
    EXPECT_EQ(reg.step(1).first_new_id, 35);
    EXPECT_EQ(reg.total_classes(), 44u);
    for (int id = 35; id <= 43; ++id) {
        EXPECT_EQ(reg.step_introduced(id), 1u);
    }
}

TEST(Golden, MapillaryCounts) {
    const auto reg = LabelRegistry::from_file(kData + "/cityscapes_mapillary.csv");
    EXPECT_EQ(reg.total_classes(), 64u);
    EXPECT_EQ(reg.step(1).old_count, 35u);
}

TEST(Golden, TableSpotValues) {
    const auto idd = LabelRegistry::from_file(kData + "/gta5_idd.csv");
    const auto map = LabelRegistry::from_file(kData + "/cityscapes_mapillary.csv");
    EXPECT_EQ(idd.remap("IDD", 0), 7);
    EXPECT_EQ(idd.remap("IDD", 11), 38);
    EXPECT_EQ(idd.step_introduced(38), 1u);
    EXPECT_EQ(map.remap("Mapillary", 2), 37);
    EXPECT_EQ(map.remap("Mapillary", 9), 37);
    EXPECT_EQ(map.remap("Mapillary", 44), 17);
    EXPECT_EQ(map.remap("Cityscapes", 7), 7);
    EXPECT_THROW(idd.remap("IDD", 99), LookupError);
    EXPECT_THROW(idd.remap("Nowhere", 0), LookupError);
}

TEST(Golden, AbsentRowsAreNotSampleable) {
    const auto reg = LabelRegistry::from_file(kData + "/cityscapes_mapillary.csv");
    const auto ids = reg.sampleable_ids("Mapillary");
    const std::set<int> s(ids.begin(), ids.end());
    EXPECT_FALSE(s.contains(0));  // unlabeled, orig -1
    EXPECT_FALSE(s.contains(34)); // license plate
    EXPECT_TRUE(s.contains(37));
    EXPECT_TRUE(reg.registered("Mapillary", 34));
}

TEST(Parse, CsvRoundTrip) {
    const auto reg = LabelRegistry::from_file(kData + "/gta5_idd.csv");
    const auto again = LabelRegistry::from_csv(reg.to_csv());
    EXPECT_EQ(again.to_csv(), reg.to_csv());
    EXPECT_EQ(again.total_classes(), 44u);
}

TEST(Parse, ConflictingIdNamesRow) {
    const std::string csv = "domain,name,orig_id,cont_id\nA,x,0,0\nA,y,1,1\nA,x2,0,1\n";
    try {
        LabelRegistry::from_csv(csv);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.row(), 4u);
    }
}

TEST(Parse, GapInIdsIsValidationError) {
    EXPECT_THROW(LabelRegistry::from_csv("domain,name,orig_id,cont_id\nA,x,0,0\nA,y,1,2\n"), ValidationError);
}

TEST(Parse, BadHeaderAndFields) {
    EXPECT_THROW(LabelRegistry::from_csv("a,b,c,d\nA,x,0,0\n"), ParseError);
    EXPECT_THROW(LabelRegistry::from_csv("domain,name,orig_id,cont_id\nA,x,zero,0\n"), ParseError);
    EXPECT_THROW(LabelRegistry::from_csv("domain,name,orig_id,cont_id\nA,x,0\n"), ParseError);
}

TEST(Parse, UnionClassAccepted) {
    const auto reg = LabelRegistry::from_csv("domain,name,orig_id,cont_id\nA,a,0,0\nA,b,1,1\nA,b2,2,1\n");
    EXPECT_EQ(reg.total_classes(), 2u);
    EXPECT_EQ(reg.remap("A", 2), 1);
}

TEST(Split, OldClassPixel) {
    const auto reg = LabelRegistry::from_file(kData + "/toy_mapping.csv");
    SemanticMap m(1, 1, 2);
    const auto s = encode_split(m, reg, 1);
    ASSERT_EQ(s.old_classes.dim(1), reg.step(1).old_count);
    ASSERT_EQ(s.new_classes.dim(1), reg.step(1).new_count);
    EXPECT_EQ(s.old_classes.data()[2], 1.0);
    for (double v : s.new_classes.data()) {
        EXPECT_EQ(v, 0.0);
    }
    EXPECT_EQ(s.new_mask.item(), 0.0);
}

TEST(Split, NewClassPixel) {
    const auto reg = LabelRegistry::from_file(kData + "/toy_mapping.csv");
    const int id = reg.step(1).first_new_id + 1;
    const auto s = encode_split(SemanticMap(1, 1, id), reg, 1);
    for (double v : s.old_classes.data()) {
        EXPECT_EQ(v, 0.0);
    }
    EXPECT_EQ(s.new_classes.data()[1], 1.0);
    EXPECT_EQ(s.new_mask.item(), 1.0);
}

TEST(Split, MixedMapIsOneHot) {
    const auto reg = LabelRegistry::from_file(kData + "/toy_mapping.csv");
    const std::size_t step = 2;
    const int classes = static_cast<int>(reg.class_count(step));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto m = random_map(3, 4, classes, seed);
        const auto s = encode_split(m, reg, step);
        const auto joined = concat_channels({s.old_classes, s.new_classes});
        const std::size_t hw = 12;
        double mask_sum = 0;
        std::size_t new_pixels = 0;
        for (std::size_t p = 0; p < hw; ++p) {
            double total = 0, old_total = 0;
            for (std::size_t c = 0; c < static_cast<std::size_t>(classes); ++c) {
                const double v = joined.data()[c * hw + p];
                EXPECT_TRUE(v == 0.0 || v == 1.0);
                total += v;
                if (c < reg.step(step).old_count) {
                    old_total += v;
                }
            }
            EXPECT_EQ(total, 1.0);
            EXPECT_EQ(s.new_mask.data()[p], 1.0 - old_total);
            EXPECT_EQ(joined.data()[static_cast<std::size_t>(m.labels[p]) * hw + p], 1.0);
            mask_sum += s.new_mask.data()[p];
            new_pixels += reg.step_introduced(m.labels[p]) == step;
        }
        EXPECT_EQ(mask_sum, static_cast<double>(new_pixels));
    }
}

TEST(Split, FutureClassIsValidationError) {
    const auto reg = LabelRegistry::from_file(kData + "/toy_mapping.csv");
    EXPECT_THROW(encode_split(SemanticMap(1, 1, reg.step(2).first_new_id), reg, 1), ValidationError);
}

TEST(Frequencies, SingleClass) {
    std::vector<SemanticMap> d{SemanticMap(2, 2, 1)};
    const auto a = class_frequencies(d, 2);
    EXPECT_EQ(a[0], 0.0);
    EXPECT_EQ(a[1], 0.5);
}

TEST(Frequencies, EqualCounts) {
    SemanticMap m(1, 2);
    m.labels = {0, 1};
    std::vector<SemanticMap> d{m};
    const auto a = class_frequencies(d, 2);
    EXPECT_EQ(a[0], 1.0);
    EXPECT_EQ(a[1], 1.0);
}

TEST(Frequencies, MatchPixelCount) {
    std::vector<SemanticMap> d{random_map(8, 8, 4, 7), random_map(8, 8, 3, 8)};
    const auto a = class_frequencies(d, 4);
    std::vector<double> count(4, 0);
    for (const auto& m : d) {
        for (int v : m.labels) {
            count[v] += 1;
        }
    }
    for (std::size_t c = 0; c < 4; ++c) {
        EXPECT_NEAR(a[c], 128.0 / (4.0 * count[c]), 1e-12);
    }
}
