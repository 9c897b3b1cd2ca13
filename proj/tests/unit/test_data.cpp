#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "../support/reference_manifest.hpp"
#include "sgxp/clf/classifier.hpp"
#include "sgxp/core/errors.hpp"
#include "sgxp/core/random.hpp"
#include "sgxp/data/image_io.hpp"
#include "sgxp/data/manifest.hpp"
#include "sgxp/data/split.hpp"
#include "sgxp/data/synthetic.hpp"

using namespace sgxp;
namespace fs = std::filesystem;

namespace {

const char* kHeader = "id,image_path,patient_id,source,class_label,projection\n";

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("sgxp_test_data_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

SampleRecord record(std::string id, std::string pid, std::string source, std::string label) {
    return {id, id + ".pgm", std::move(pid), std::move(source), std::move(label), "PA", std::nullopt, {}};
}

// Random manifest: patients with 1-3 images, two sources, three classes.
Manifest random_manifest(std::size_t patients, std::uint64_t seed) {
    Rng rng(seed);
    Manifest m;
    const char* labels[] = {"lung_opacity", "covid19", "normal"};
    const char* sources[] = {"cohen", "rsna", "figure1"};
    std::size_t next = 0;
    for (std::size_t p = 0; p < patients; ++p) {
        const std::size_t n = 1 + static_cast<std::size_t>(uniform01(rng) * 3.0);
        const char* label = labels[static_cast<std::size_t>(uniform01(rng) * 3.0)];
        const char* source = sources[static_cast<std::size_t>(uniform01(rng) * 3.0)];
        for (std::size_t k = 0; k < n; ++k) m.records.push_back(record("r" + std::to_string(next++), "p" + std::to_string(p), source, label));
    }
    return m;
}

std::string pfm_bytes(const std::string& header, const std::vector<float>& values) {
    std::string out = header;
    for (float v : values) {
        const auto u = std::bit_cast<std::uint32_t>(v);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
    }
    return out;
}

}  // namespace

// ---- manifest

TEST(Manifest, HeaderOnlyIsEmpty) {
    EXPECT_TRUE(parse_manifest(kHeader).records.empty());
}

TEST(Manifest, DuplicateIdCitesItsLine) {
    std::string text = kHeader;
    for (int i = 0; i < 5; ++i) text += "a" + std::to_string(i) + ",x.pgm,p,cohen,normal,PA\n";
    text += "a2,y.pgm,q,rsna,normal,AP\n";  // line 7
    try {
        parse_manifest(text);
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 7u);
    }
}

TEST(Manifest, VocabularyViolationsCiteTheirLine) {
    const std::vector<std::string> bad = {"a,x.pgm,p,kaggle,normal,PA", "a,x.pgm,p,cohen,pneumonia,PA",
                                          "a,x.pgm,p,cohen,normal,lateral", "a,x.pgm,p,cohen,normal"};
    for (const auto& row : bad) {
        try {
            parse_manifest(std::string(kHeader) + "ok,y.pgm,q,rsna,normal,AP\n" + row + "\n");
            FAIL() << row;
        } catch (const ParseError& e) {
            EXPECT_EQ(e.line(), 3u) << row;
        }
    }
    EXPECT_THROW(parse_manifest("id,path\n"), ParseError);
    EXPECT_THROW(parse_manifest(""), ParseError);
}

TEST(Manifest, RoundTripsThroughDisk) {
    const fs::path dir = temp_dir("roundtrip");
    Manifest m;
    m.records = {record("a", "p1", "cohen", "covid19"), record("b", "p1", "cohen", "normal"),
                 record("c", "p2", "rsna", "lung_opacity")};
    m.records[2].projection = "AP_portable";
    for (const auto& r : m.records) save_mask(dir / r.image_path, BinaryMask(2, 2));
    save_manifest(dir / "m.csv", m);
    const Manifest once = load_manifest(dir / "m.csv");
    save_manifest(dir / "m2.csv", once);
    const Manifest twice = load_manifest(dir / "m2.csv");
    EXPECT_EQ(once.records, m.records);
    EXPECT_EQ(twice.records, m.records);
    EXPECT_EQ(read_file(dir / "m.csv"), read_file(dir / "m2.csv"));
    EXPECT_FALSE(once.has_split());
}

TEST(Manifest, SplitColumnRoundTrips) {
    Manifest m;
    m.records = {record("a", "p1", "cohen", "covid19"), record("b", "p2", "rsna", "normal")};
    m.records[0].split = Split::test;
    const Manifest back = parse_manifest(to_csv(m));
    EXPECT_TRUE(back.has_split());
    EXPECT_EQ(back.records[0].split, Split::test);
    EXPECT_FALSE(back.records[1].split.has_value());
    EXPECT_THROW(parse_manifest(std::string("id,image_path,patient_id,source,class_label,projection,split\n") +
                                "a,x.pgm,p,cohen,normal,PA,holdout\n"),
                 ParseError);
}

TEST(Manifest, MissingImageFileIsRejected) {
    const fs::path dir = temp_dir("missing");
    write_file_atomic(dir / "m.csv", std::string(kHeader) + "a,nothere.pgm,p,cohen,normal,PA\n");
    EXPECT_THROW(load_manifest(dir / "m.csv"), ArgumentError);
    EXPECT_NO_THROW(load_manifest(dir / "m.csv", false));
}

TEST(Relabel, SourcesMapToCohenRsnaOther) {
    Manifest m;
    m.records = {record("a", "p", "figure1", "covid19"), record("b", "q", "rsna", "normal"),
                 record("c", "r", "cohen", "lung_opacity")};
    const Manifest once = relabel_by_source(m);
    EXPECT_EQ(once.records[0].class_label, "other");
    EXPECT_EQ(once.records[1].class_label, "rsna");
    EXPECT_EQ(once.records[2].class_label, "cohen");
    EXPECT_EQ(once.records[0].original_label, "covid19");
    EXPECT_EQ(relabel_by_source(once).records, once.records);
}

TEST(Relabel, CountsOnTheFullComposition) {
    // Oracle: row sums of the per-source table.
    std::map<std::string, std::size_t> expected;
    for (const auto& s : sgxp::testing::kReferenceComposition) {
        const std::string key = std::string(s.source) == "cohen" || std::string(s.source) == "rsna" ? s.source : "other";
        expected[key] += s.opacity + s.covid + s.normal;
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& r : relabel_by_source(sgxp::testing::reference_manifest()).records) ++counts[r.class_label];
    EXPECT_EQ(counts, expected);
    EXPECT_EQ(counts["cohen"], 574u);
    EXPECT_EQ(counts["rsna"], 2000u);
    EXPECT_EQ(counts["other"], 104u);
}

// ---- generalization folds

TEST(Folds, ReferenceCompositionTotals) {
    const auto folds = make_generalization_folds(sgxp::testing::reference_manifest(), 3);
    EXPECT_EQ(folds[0].negatives.size(), 1156u);
    EXPECT_EQ(folds[0].positives.size(), 418u);
    EXPECT_EQ(folds[1].negatives.size(), 1019u);
    EXPECT_EQ(folds[1].positives.size(), 85u);
}

TEST(Folds, MiniatureManifest) {
    Manifest m;
    for (int i = 0; i < 4; ++i) m.records.push_back(record("a" + std::to_string(i), "pa" + std::to_string(i), "cohen", "covid19"));
    for (int i = 0; i < 2; ++i) m.records.push_back(record("b" + std::to_string(i), "pb" + std::to_string(i), "actualmed", "covid19"));
    for (int i = 0; i < 10; ++i) m.records.push_back(record("n" + std::to_string(i), "pn" + std::to_string(i), "rsna", "normal"));
    const auto folds = make_generalization_folds(m);
    EXPECT_EQ(folds[0].negatives.size(), 5u);
    EXPECT_EQ(folds[0].positives.size(), 4u);
    EXPECT_EQ(folds[1].negatives.size(), 5u);
    EXPECT_EQ(folds[1].positives.size(), 2u);
}

TEST(Folds, SingleCovidSourceIsAConfigurationError) {
    Manifest m;
    m.records = {record("a", "p", "cohen", "covid19"), record("b", "q", "rsna", "normal")};
    EXPECT_THROW(make_generalization_folds(m), ConfigError);
}

TEST(Folds, PropertyEveryRecordExactlyOnceAndPatientsNotShared) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Manifest m = random_manifest(40, seed);
        m.records.push_back(record("xa", "pxa", "cohen", "covid19"));
        m.records.push_back(record("xb", "pxb", "figure1", "covid19"));
        const auto folds = make_generalization_folds(m, seed);
        std::vector<int> seen(m.records.size(), 0);
        std::map<std::string, std::set<int>> patient_folds;
        for (int f = 0; f < 2; ++f) {
            for (auto i : folds[f].positives) {
                ++seen[i];
                EXPECT_EQ(m.records[i].class_label, "covid19");
                patient_folds[m.records[i].patient_id].insert(f);
            }
            for (auto i : folds[f].negatives) {
                ++seen[i];
                EXPECT_NE(m.records[i].class_label, "covid19");
                patient_folds[m.records[i].patient_id].insert(f);
            }
        }
        for (int s : seen) EXPECT_EQ(s, 1);
        // Patient ids are per source in this fixture, so no patient may straddle the folds.
        for (const auto& [pid, fs] : patient_folds) EXPECT_EQ(fs.size(), 1u) << pid;
    }
}

// ---- constrained split

TEST(ConstrainedSplit, PatientImagesStayTogether) {
    Manifest m = random_manifest(30, 1);
    m.records.push_back(record("t1", "triple", "cohen", "normal"));
    m.records.push_back(record("t2", "triple", "cohen", "normal"));
    m.records.push_back(record("t3", "triple", "cohen", "normal"));
    const auto s = constrained_split(m, {});
    const auto n = m.records.size();
    EXPECT_EQ(s.assignment[n - 1], s.assignment[n - 2]);
    EXPECT_EQ(s.assignment[n - 2], s.assignment[n - 3]);
}

TEST(ConstrainedSplit, BalancedManifestHitsTestFractionPerClass) {
    // 100 records, two classes, two sources, 20% of patients with two images.
    SynthConfig c;
    c.n = 100;
    c.size = 32;
    const auto corpus = generate_synthetic_corpus(c);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SplitSpec spec;
        spec.seed = seed;
        const auto s = constrained_split(corpus.manifest, spec);
        for (const auto& cls : corpus.classes) {
            double total = 0, test = 0;
            for (std::size_t i = 0; i < s.assignment.size(); ++i) {
                if (corpus.manifest.records[i].class_label != cls) continue;
                ++total;
                test += s.assignment[i] == Split::test ? 1 : 0;
            }
            EXPECT_NEAR(test / total, 0.2, 0.05) << cls << " seed " << seed;
        }
        EXPECT_TRUE(s.warnings.empty());
    }
}

TEST(ConstrainedSplit, SinglePatientGoesToTrainWithWarning) {
    Manifest m;
    for (int i = 0; i < 6; ++i) m.records.push_back(record("a" + std::to_string(i), "only", "cohen", "normal"));
    const auto s = constrained_split(m, {});
    for (auto a : s.assignment) EXPECT_EQ(a, Split::train);
    ASSERT_EQ(s.warnings.size(), 1u);
    EXPECT_NE(s.warnings[0].find("only"), std::string::npos);
}

TEST(ConstrainedSplit, PropertyPatientsDisjointDeterministicAndOrderInvariant) {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        Manifest m = random_manifest(60, seed + 100);
        SplitSpec spec;
        spec.seed = seed;
        const auto s = constrained_split(m, spec);
        std::map<std::string, std::set<Split>> by_patient;
        std::map<std::string, Split> by_id;
        for (std::size_t i = 0; i < m.records.size(); ++i) {
            by_patient[m.records[i].patient_id].insert(s.assignment[i]);
            by_id[m.records[i].id] = s.assignment[i];
        }
        for (const auto& [pid, splits] : by_patient) EXPECT_EQ(splits.size(), 1u);
        EXPECT_EQ(constrained_split(m, spec).assignment, s.assignment);

        Manifest shuffled = m;
        Rng rng(seed);
        for (std::size_t i = shuffled.records.size() - 1; i > 0; --i) {
            std::swap(shuffled.records[i], shuffled.records[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1))]);
        }
        const auto t = constrained_split(shuffled, spec);
        for (std::size_t i = 0; i < shuffled.records.size(); ++i) EXPECT_EQ(t.assignment[i], by_id[shuffled.records[i].id]);
    }
}

TEST(ConstrainedSplit, UngroupedRecordsMaySeparateAndSpecIsValidated) {
    SplitSpec spec;
    spec.test_fraction = 1.0;
    EXPECT_THROW(constrained_split(Manifest{}, spec), ConfigError);
    spec = {};
    spec.group_patients = false;
    Manifest m;
    for (int i = 0; i < 20; ++i) m.records.push_back(record("a" + std::to_string(i), "same", "cohen", "normal"));
    const auto s = constrained_split(m, spec);
    EXPECT_TRUE(s.warnings.empty());
    EXPECT_EQ(std::count(s.assignment.begin(), s.assignment.end(), Split::test), 4);
    const auto applied = apply_split(m, s);
    EXPECT_TRUE(applied.has_split());
}

// ---- image files

TEST(Pgm, DecodesTwoByTwo) {
    std::string bytes = "P5\n2 2\n255\n";
    bytes += std::string("\x00\xff\xff\x00", 4);
    const Image im = pgm_to_image(decode_pgm(bytes));
    ASSERT_TRUE(im.same_size(2, 2));
    EXPECT_EQ(im.data, (std::vector<float>{0.0f, 1.0f, 1.0f, 0.0f}));
}

TEST(Pgm, CommentsAndSmallMaxval) {
    std::string bytes = "P5 # comment\n3 1 # w h\n4\n";
    bytes += std::string("\x00\x02\x04", 3);
    const Pgm p = decode_pgm(bytes);
    EXPECT_EQ(p.maxval, 4);
    EXPECT_EQ(pgm_to_image(p).data, (std::vector<float>{0.0f, 0.5f, 1.0f}));
    EXPECT_EQ(pgm_to_mask({Grid<std::uint8_t>(1, 2, 4), 4}).data, (std::vector<std::uint8_t>{1, 1}));
}

TEST(Pgm, MalformedHeadersReportOffsets) {
    auto offset_of = [](const std::string& bytes) -> long {
        try {
            decode_pgm(bytes);
        } catch (const FormatError& e) {
            return static_cast<long>(e.offset());
        }
        return -1;
    };
    EXPECT_EQ(offset_of("P2\n2 2\n255\n"), 0);
    EXPECT_EQ(offset_of("P5\n2 x\n255\n"), 5);
    EXPECT_EQ(offset_of("P5\n2 2\n65535\n"), 7);
    EXPECT_EQ(offset_of("P5\n2 2\n255\nab"), 13);  // truncated raster ends at the file end
    EXPECT_EQ(offset_of(std::string("P5\n1 1\n255\n") + "ab"), 12);
    EXPECT_EQ(offset_of(std::string("P5\n1 1\n7\n") + "\x09"), 9);
}

TEST(Pgm, MaskAndImageRoundTripBitExact) {
    const fs::path dir = temp_dir("pgm");
    Rng rng(3);
    BinaryMask mask(7, 5);
    for (auto& v : mask.data) v = uniform01(rng) < 0.5 ? 1 : 0;
    save_mask(dir / "m.pgm", mask);
    EXPECT_EQ(load_mask(dir / "m.pgm"), mask);
    Image im(4, 6);
    for (std::size_t i = 0; i < im.size(); ++i) im.data[i] = static_cast<float>(i * 10) / 255.0f;
    save_image(dir / "i.pgm", im);
    EXPECT_EQ(quantize(load_image(dir / "i.pgm")), quantize(im));
    EXPECT_TRUE(load_image(dir / "i.pgm", 8).same_size(8, 8));
    EXPECT_THROW(pgm_to_mask({Grid<std::uint8_t>(1, 1, 7), 255}), ArgumentError);
}

TEST(Pfm, BottomToTopLittleEndian) {
    const Image im = decode_pfm(pfm_bytes("Pf\n2 2\n-1.0\n", {1.0f, 2.0f, 3.0f, 4.0f}));
    // The first stored row is the bottom one.
    EXPECT_EQ(im.data, (std::vector<float>{3.0f, 4.0f, 1.0f, 2.0f}));
    EXPECT_EQ(encode_pfm(im), pfm_bytes("Pf\n2 2\n-1.0\n", {1.0f, 2.0f, 3.0f, 4.0f}));
}

TEST(Pfm, RejectsBigEndianAndColour) {
    try {
        decode_pfm(pfm_bytes("Pf\n1 1\n1.0\n", {1.0f}));
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 7u);
    }
    EXPECT_THROW(decode_pfm(pfm_bytes("PF\n1 1\n-1.0\n", {1.0f, 1.0f, 1.0f})), FormatError);
    EXPECT_THROW(decode_pfm(pfm_bytes("Pf\n2 1\n-1.0\n", {1.0f})), FormatError);
}

TEST(Pfm, HeatmapRoundTripBitExact) {
    const fs::path dir = temp_dir("pfm");
    Image map(5, 3);
    Rng rng(9);
    for (auto& v : map.data) v = static_cast<float>(uniform01(rng) * 1e-3);
    map.data[4] = -0.0f;
    save_heatmap(dir / "h.pfm", map);
    const Image back = load_heatmap(dir / "h.pfm");
    ASSERT_TRUE(back.same_size(map));
    EXPECT_EQ(std::memcmp(back.data.data(), map.data.data(), map.size() * sizeof(float)), 0);
    EXPECT_FALSE(fs::exists(dir / "h.pfm.tmp"));
}

// ---- synthetic corpus

TEST(Synthetic, SameSeedGivesIdenticalFiles) {
    SynthConfig c;
    c.n = 12;
    c.size = 32;
    c.annotation_bias = true;
    const fs::path a = temp_dir("synth_a"), b = temp_dir("synth_b");
    const auto files = write_corpus(generate_synthetic_corpus(c), c, a);
    EXPECT_EQ(write_corpus(generate_synthetic_corpus(c), c, b), files);
    for (const auto& f : files) EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
    const Manifest m = load_manifest(a / "manifest.csv");
    EXPECT_EQ(m.records.size(), 12u);
    EXPECT_EQ(load_mask(corpus_mask_path(m, m.records[3])), generate_synthetic_corpus(c).masks[3]);
    c.seed = 1;
    EXPECT_NE(generate_synthetic_corpus(c).images[0], generate_synthetic_corpus(SynthConfig{12, 32, true}).images[0]);
}

TEST(Synthetic, MasksAreTheGeneratingEllipses) {
    SynthConfig c;
    c.n = 20;
    c.size = 48;
    const auto corpus = generate_synthetic_corpus(c);
    for (std::size_t i = 0; i < corpus.masks.size(); ++i) {
        std::size_t both = 0, either = 0;
        for (std::size_t y = 0; y < 48; ++y) {
            for (std::size_t x = 0; x < 48; ++x) {
                const bool geom = corpus.lungs[i][0].contains(y, x) || corpus.lungs[i][1].contains(y, x);
                const bool m = corpus.masks[i](y, x) != 0;
                both += geom && m;
                either += geom || m;
            }
        }
        EXPECT_EQ(both, either);  // Dice 1
        EXPECT_GT(both, 48u * 48u / 8);
    }
}

TEST(Synthetic, GlyphsSitInTheirCornerOutsideTheLungs) {
    SynthConfig c;
    c.n = 60;
    c.size = 64;
    c.annotation_bias = true;
    c.glyph_correlation = 1.0;
    const auto corpus = generate_synthetic_corpus(c);
    const BinaryMask region = glyph_region(64);
    for (std::size_t i = 0; i < corpus.images.size(); ++i) {
        EXPECT_EQ(corpus.glyph_corner[i], corpus.labels[i] == 0 ? 1 : 2);
        std::size_t changed = 0;
        for (std::size_t p = 0; p < corpus.images[i].size(); ++p) {
            if (corpus.images[i].data[p] == corpus.clean_images[i].data[p]) continue;
            ++changed;
            EXPECT_TRUE(region.data[p]);
            EXPECT_FALSE(corpus.masks[i].data[p]);
            EXPECT_EQ(corpus.glyph_corner[i] == 1, p % 64 < 32);
        }
        EXPECT_GT(changed, 10u);
    }
    c.annotation_bias = false;
    const auto plain = generate_synthetic_corpus(c);
    for (std::size_t i = 0; i < plain.images.size(); ++i) EXPECT_EQ(plain.images[i], plain.clean_images[i]);
}

TEST(Synthetic, MetadataAndLesions) {
    SynthConfig c;
    c.n = 400;
    c.size = 32;
    c.source_correlation = 0.9;
    const auto corpus = generate_synthetic_corpus(c);
    std::map<std::string, std::size_t> per_patient;
    std::size_t agree = 0;
    double lung_mean[2] = {0, 0};
    std::size_t lung_count[2] = {0, 0};
    for (std::size_t i = 0; i < corpus.images.size(); ++i) {
        const auto& r = corpus.manifest.records[i];
        ++per_patient[r.patient_id];
        agree += (r.source == "cohen") == (corpus.labels[i] == 0);
        for (std::size_t p = 0; p < corpus.images[i].size(); ++p) {
            if (!corpus.masks[i].data[p]) continue;
            lung_mean[corpus.labels[i]] += corpus.images[i].data[p];
            ++lung_count[corpus.labels[i]];
        }
    }
    std::size_t twice = 0;
    for (const auto& [pid, n] : per_patient) twice += n == 2;
    EXPECT_NEAR(static_cast<double>(twice) / static_cast<double>(per_patient.size()), 0.2, 0.06);
    EXPECT_NEAR(static_cast<double>(agree) / 400.0, 0.9, 0.05);
    EXPECT_GT(lung_mean[0] / static_cast<double>(lung_count[0]), lung_mean[1] / static_cast<double>(lung_count[1]) + 0.01);
    EXPECT_NO_THROW(validate(corpus.manifest));
    c.n = 5;
    EXPECT_THROW(generate_synthetic_corpus(c), ConfigError);
}

TEST(Synthetic, ShuffledLabelsGiveChanceAccuracy) {
    SynthConfig c;
    c.n = 360;
    c.size = 32;
    const auto corpus = generate_synthetic_corpus(c);
    Rng rng(5);
    std::vector<LabeledImage> train, test;
    for (std::size_t i = 0; i < corpus.images.size(); ++i) {
        LabeledImage s{corpus.images[i], uniform01(rng) < 0.5 ? 0u : 1u};
        (i < 160 ? train : test).push_back(std::move(s));
    }
    ClassifierConfig cfg;
    cfg.input_size = 32;
    cfg.block_channels = {4, 8};
    cfg.head_units = {32, 16};
    TrainSchedule sched;
    sched.warmup_epochs = 0;
    sched.finetune_epochs = 8;
    sched.finetune_lr = 1e-3;
    sched.batch_size = 32;
    sched.seed = 2;
    auto model = build_classifier(cfg, 2);
    model.initialize(3);
    const auto trained = train_two_phase(std::move(model), train, {}, sched, AugmentationConfig::none());
    std::size_t correct = 0;
    for (const auto& s : test) correct += argmax(predict_proba(trained.model, s.image)) == s.label;
    EXPECT_NEAR(static_cast<double>(correct) / static_cast<double>(test.size()), 0.5, 0.1);
}
