// Runs the ten acceptance criteria and prints one PASS/FAIL line each.
// Usage: sgxp_acceptance [--work DIR] [criterion numbers...]

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "../support/layer_zoo.hpp"
#include "../support/reference_manifest.hpp"
#include "sgxp/cli/cli.hpp"
#include "sgxp/clf/classifier.hpp"
#include "sgxp/clf/metrics.hpp"
#include "sgxp/data/image_io.hpp"
#include "sgxp/data/split.hpp"
#include "sgxp/seg/mask_ops.hpp"
#include "sgxp/xai/gradcam.hpp"
#include "sgxp/xai/lime.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sgxp;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

class Context {
public:
    explicit Context(fs::path work) : work_(std::move(work)) {}

    fs::path dir(const std::string& name) const { return work_ / name; }
    std::string str(const std::string& name) const { return (work_ / name).string(); }

    void cli(const std::vector<std::string>& args) const {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        if (code != 0) throw std::runtime_error(args.front() + " exited " + std::to_string(code) + ": " + err.str());
    }

    json report(const std::string& run) const { return json::parse(read_file(dir(run) / "report.json")); }

    // Biased 200-image corpus, its split and the trained U-Net; built once and shared.
    void segmentation_stage() {
        if (seg_seconds_) return;
        const auto start = std::chrono::steady_clock::now();
        fs::remove_all(dir("seg"));
        cli({"synth", "--n", "200", "--size", "64", "--bias", "--seed", "1", "--out", str("seg/corpus")});
        cli({"split", "--manifest", str("seg/corpus/manifest.csv"), "--seed", "1", "--out", str("seg/split")});
        write_text("seg/unet.json", R"({"model": {"unet": {"input_size": 64, "depth": 3, "base_channels": 8}},
 "schedule": {"segmentation": {"epochs": 30}}})");
        cli({"seg-train", "--manifest", str("seg/split/manifest.csv"), "--config", str("seg/unet.json"), "--seed", "1",
             "--out", str("seg/train")});
        seg_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    double segmentation_seconds() const { return *seg_seconds_; }

    void write_text(const std::string& rel, const std::string& text) const {
        fs::create_directories(dir(rel).parent_path());
        std::ofstream(dir(rel)) << text;
    }

private:
    fs::path work_;
    std::optional<double> seg_seconds_;
};

double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// --- 1: gradient soundness ---------------------------------------------------------

Outcome gradients(Context&) {
    const auto start = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::string worst_case;
    const auto zoo = sgxp::testing::layer_zoo();
    for (const auto& c : zoo) {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            auto net = sgxp::testing::build_case(c, 1000 + seed);
            GradCheckOptions o;
            o.include_input = true;
            o.seed = seed;
            const auto r = gradient_check(net, sgxp::testing::random_tensor(sgxp::testing::batch_shape(c), 2000 + seed),
                                          sgxp::testing::linear_probe(3000 + seed), o);
            if (r.max_relative_error > worst) {
                worst = r.max_relative_error;
                worst_case = c.name;
            }
        }
    }
    const double t = seconds_since(start);
    return {worst < 1e-6 && t < 60.0, std::to_string(zoo.size()) + " layer types x 50 instances, max rel error " +
                                          fmt(worst * 1e9, 3) + "e-9 (" + worst_case + ")"};
}

// --- 2: segmentation desk analog ----------------------------------------------------

Outcome segmentation(Context& ctx) {
    ctx.segmentation_stage();
    const json r = ctx.report("seg/train");
    // The U-Net's own thresholded output. Post-processing dilates on purpose before the ROI crop.
    const json& raw = r.at("test").at("raw");
    const json& post = r.at("test").at("postprocessed");
    const double dice = raw.at("dice").at("mean"), jd = raw.at("jaccard_distance").at("mean");
    const std::size_t epochs = r.at("history").size();
    const double t = ctx.segmentation_seconds();
    return {dice >= 0.95 && jd <= 0.10 && epochs <= 30 && t < 600.0,
            "held-out Dice " + fmt(dice) + ", Jaccard distance " + fmt(jd) + " (after opening and dilation " +
                fmt(post.at("dice").at("mean")) + " / " + fmt(post.at("jaccard_distance").at("mean")) + ") after " +
                std::to_string(epochs) + " epochs, n_test " + std::to_string(raw.at("dice").at("n").get<int>())};
}

// --- 3: metric oracles ----------------------------------------------------------------

Outcome metric_oracles(Context&) {
    double worst = 0.0;
    bool counts_ok = true;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(derive_seed(seed, "acceptance-metrics"));
        // Masks against set counting.
        const std::size_t h = 3 + seed % 9, w = 4 + seed % 7;
        BinaryMask a(h, w), b(h, w);
        const double pa = uniform01(rng), pb = uniform01(rng);
        std::set<std::size_t> sa, sb;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (uniform01(rng) < pa) a.data[i] = 1, sa.insert(i);
            if (uniform01(rng) < pb) b.data[i] = 1, sb.insert(i);
        }
        std::set<std::size_t> inter, uni(sa);
        for (const auto i : sa)
            if (sb.count(i)) inter.insert(i);
        uni.insert(sb.begin(), sb.end());
        const double j = uni.empty() ? 1.0 : double(inter.size()) / double(uni.size());
        const double d = sa.size() + sb.size() == 0 ? 1.0 : 2.0 * double(inter.size()) / double(sa.size() + sb.size());
        const MaskMetrics m = mask_metrics(a, b);
        worst = std::max({worst, std::abs(m.jaccard_index - j), std::abs(m.dice - d), std::abs(m.jaccard_distance - (1 - j))});

        // Classification report against per-class counting.
        const std::size_t k = 2 + seed % 4, n = 5 + seed % 40;
        std::vector<std::size_t> truth(n), pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            truth[i] = static_cast<std::size_t>(uniform01(rng) * double(k));
            pred[i] = uniform01(rng) < 0.6 ? truth[i] : static_cast<std::size_t>(uniform01(rng) * double(k));
        }
        std::vector<std::string> names;
        for (std::size_t c = 0; c < k; ++c) names.push_back("c" + std::to_string(c));
        const EvaluationReport rep = evaluate(pred, truth, names);
        double macro = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            std::size_t tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < n; ++i) {
                tp += truth[i] == c && pred[i] == c;
                fp += truth[i] != c && pred[i] == c;
                fn += truth[i] == c && pred[i] != c;
            }
            counts_ok = counts_ok && rep.per_class[c].tp == tp && rep.per_class[c].fp == fp && rep.per_class[c].fn == fn;
            const double p = tp + fp ? double(tp) / double(tp + fp) : 0.0;
            const double rc = tp + fn ? double(tp) / double(tp + fn) : 0.0;
            const double f1 = p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0;
            worst = std::max({worst, std::abs(rep.per_class[c].precision - p), std::abs(rep.per_class[c].recall - rc),
                              std::abs(rep.per_class[c].f1 - f1)});
            macro += f1 / double(k);
        }
        worst = std::max(worst, std::abs(rep.macro_f1 - macro));

        // ROC-AUC against pairwise concordance.
        const std::size_t m_roc = 4 + seed % 30;
        std::vector<double> scores(m_roc);
        std::vector<int> labels(m_roc);
        for (std::size_t i = 0; i < m_roc; ++i) {
            scores[i] = std::round(uniform01(rng) * 8.0) / 8.0;
            labels[i] = uniform01(rng) < 0.5;
        }
        labels[0] = 0;
        labels[1] = 1;
        double conc = 0.0, pairs = 0.0;
        for (std::size_t i = 0; i < m_roc; ++i)
            for (std::size_t q = 0; q < m_roc; ++q) {
                if (labels[i] != 1 || labels[q] != 0) continue;
                pairs += 1.0;
                conc += scores[i] > scores[q] ? 1.0 : (scores[i] == scores[q] ? 0.5 : 0.0);
            }
        worst = std::max(worst, std::abs(roc_auc(scores, labels).auc - conc / pairs));

        // Wilcoxon against exact sign enumeration.
        const std::size_t nw = 1 + seed % 12;
        std::vector<double> x(nw), y(nw);
        for (std::size_t i = 0; i < nw; ++i) {
            x[i] = std::round(uniform01(rng) * 6.0);
            y[i] = std::round(uniform01(rng) * 6.0);
        }
        std::vector<double> diff;
        for (std::size_t i = 0; i < nw; ++i)
            if (x[i] != y[i]) diff.push_back(x[i] - y[i]);
        const WilcoxonResult wr = wilcoxon_signed_rank(x, y);
        if (diff.empty()) {
            worst = std::max(worst, std::abs(wr.p_value - 1.0));
            continue;
        }
        const std::size_t ne = diff.size();
        std::vector<double> rank(ne);
        for (std::size_t i = 0; i < ne; ++i) {
            double below = 0.0, equal = 0.0;
            for (std::size_t q = 0; q < ne; ++q) {
                below += std::abs(diff[q]) < std::abs(diff[i]);
                equal += std::abs(diff[q]) == std::abs(diff[i]);
            }
            rank[i] = below + (equal + 1.0) / 2.0;
        }
        double plus = 0.0, total = 0.0;
        for (std::size_t i = 0; i < ne; ++i) {
            total += rank[i];
            if (diff[i] > 0) plus += rank[i];
        }
        const double observed = std::min(plus, total - plus);
        std::size_t at_most = 0;
        for (std::size_t mask = 0; mask < (std::size_t{1} << ne); ++mask) {
            double s = 0.0;
            for (std::size_t i = 0; i < ne; ++i)
                if (mask >> i & 1) s += rank[i];
            at_most += s <= observed + 1e-9;
        }
        const double p = std::min(1.0, 2.0 * double(at_most) / double(std::size_t{1} << ne));
        worst = std::max({worst, std::abs(wr.p_value - p), std::abs(wr.statistic - observed)});
    }
    return {worst <= 1e-12 && counts_ok, "100 instances each, max deviation " + fmt(worst * 1e15, 2) + "e-15" +
                                              (counts_ok ? "" : ", count mismatch")};
}

// --- 4: morphology oracle ---------------------------------------------------------------

BinaryMask naive_sweep(const BinaryMask& m, int r, bool erode_op) {
    BinaryMask out(m.height, m.width);
    const int h = static_cast<int>(m.height), w = static_cast<int>(m.width);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool all = true, any = false;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (dy * dy + dx * dx > r * r) continue;
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
                    const bool v = m(yy, xx) != 0;
                    all = all && v;
                    any = any || v;
                }
            out(y, x) = erode_op ? all : any;
        }
    return out;
}

Outcome morphology(Context&) {
    std::size_t mismatches = 0, cases = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(derive_seed(seed, "acceptance-morphology"));
        BinaryMask m(32, 32);
        const double p = 0.2 + 0.6 * uniform01(rng);
        for (auto& v : m.data) v = uniform01(rng) < p;
        const int open_r = 1 + static_cast<int>(seed % 5), dilate_r = 1 + static_cast<int>((seed / 5) % 5);
        const BinaryMask expected =
            naive_sweep(naive_sweep(naive_sweep(m, open_r, true), open_r, false), dilate_r, false);
        ++cases;
        if (!(postprocess_mask(m, open_r, dilate_r) == expected)) ++mismatches;
    }
    return {mismatches == 0, std::to_string(cases) + " masks, radii 1-5, " + std::to_string(mismatches) + " mismatches"};
}

// --- 5: LIME planted feature -------------------------------------------------------------

Outcome lime_planted(Context&) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t size = 64, half = size / 2;
    // Probability of the positive class is the mean intensity of the top-left quadrant.
    const Blackbox blackbox = [half](const std::vector<Image>& batch) {
        std::vector<std::vector<double>> out;
        for (const auto& im : batch) {
            double s = 0.0;
            for (std::size_t y = 0; y < half; ++y)
                for (std::size_t x = 0; x < half; ++x) s += im(y, x);
            const double m = s / double(half * half);
            out.push_back({1.0 - m, m});
        }
        return out;
    };
    LimeConfig config;
    config.quickshift.kernel_size = 2.0;
    std::size_t good = 0;
    std::ostringstream counts;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng noise(derive_seed(seed, "acceptance-lime-image"));
        Image raw(size, size);
        for (auto& v : raw.data) v = static_cast<float>(uniform01(noise));
        // Smoothed noise so superpixels have some extent.
        Image im(size, size);
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                double s = 0.0;
                int n = 0;
                for (int dy = -2; dy <= 2; ++dy)
                    for (int dx = -2; dx <= 2; ++dx) {
                        const long yy = long(y) + dy, xx = long(x) + dx;
                        if (yy < 0 || xx < 0 || yy >= long(size) || xx >= long(size)) continue;
                        s += raw(std::size_t(yy), std::size_t(xx));
                        ++n;
                    }
                im(y, x) = static_cast<float>(s / n);
            }
        Rng rng(derive_seed(seed, "acceptance-lime"));
        const Explanation e = lime_explain(im, blackbox, 1, config, rng);
        std::size_t inside = 0;
        for (const auto& sp : e.superpixels) {
            bool hits = false;
            for (std::size_t y = 0; y < half && !hits; ++y)
                for (std::size_t x = 0; x < half && !hits; ++x) hits = e.segments(y, x) == sp.id;
            inside += hits;
        }
        counts << inside << "/" << e.superpixels.size() << (seed + 1 < 20 ? " " : "");
        good += e.superpixels.size() == 5 && inside >= 4;
    }
    const double t = seconds_since(start);
    return {good >= 16 && t < 120.0, std::to_string(good) + "/20 seeds with >= 4/5 in the quadrant [" + counts.str() + "]"};
}

// --- 6: Grad-CAM localization ---------------------------------------------------------------

Outcome gradcam_localization(Context&) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t size = 32, half = 16, side = 6;
    auto make = [&](std::uint64_t seed, std::size_t n) {
        Rng rng(derive_seed(seed, "acceptance-cam-data"));
        std::vector<LabeledImage> out;
        for (std::size_t i = 0; i < n; ++i) {
            LabeledImage s{Image(size, size), i % 4};
            for (auto& v : s.image.data) v = static_cast<float>(0.3 * uniform01(rng));
            const std::size_t qy = s.label / 2, qx = s.label % 2;
            const auto y0 = qy * half + static_cast<std::size_t>(uniform01(rng) * double(half - side + 1));
            const auto x0 = qx * half + static_cast<std::size_t>(uniform01(rng) * double(half - side + 1));
            for (std::size_t y = y0; y < y0 + side; ++y)
                for (std::size_t x = x0; x < x0 + side; ++x) s.image(y, x) = 0.9f;
            out.push_back(std::move(s));
        }
        return out;
    };
    const auto train = make(1, 400), val = make(2, 80), test = make(3, 100);
    // Fully convolutional: a one-channel detector map max-pooled per quadrant gives the four logits.
    // A dense head over flattened features encodes position in its weights, and under softmax its
    // class-shared component never moves from the initialization, so the channel weights Grad-CAM
    // averages out of it are noise.
    Network<float> model({1, size, size});
    std::size_t in = 1;
    for (const std::size_t c : {std::size_t{8}, std::size_t{8}}) {
        const std::string p = "block" + std::to_string(in) + "_";
        model.add(p + "conv", Conv2D{in, c, 3, 1, 1});
        model.add(p + "bn", BatchNorm{c});
        model.add(p + "relu", Activation{ActivationKind::relu});
        in = c;
    }
    model.add("detector", Conv2D{in, 1, 1, 1, 0});
    model.add("quadrants", MaxPool2D{half});
    model.add("logits", Flatten{});
    model.add("softmax", Activation{ActivationKind::softmax});
    model.initialize(derive_seed(6, "acceptance-cam-init"));
    TrainSchedule schedule;
    schedule.batch_size = 32;
    schedule.seed = derive_seed(6, "acceptance-cam-train");
    const ClfTrainResult trained =
        train_phase(std::move(model), train, val, PhaseSpec{"quadrants", 15, 1e-3, false}, schedule, AugmentationConfig::none());

    std::size_t correct = 0, localized = 0;
    for (const auto& s : test) {
        correct += argmax(predict_proba(trained.model, s.image)) == s.label;
        const Image cam = gradcam(trained.model, s.image, s.label);
        double inside = 0.0, total = 0.0;
        const std::size_t qy = s.label / 2, qx = s.label % 2;
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                total += cam(y, x);
                if (y / half == qy && x / half == qx) inside += cam(y, x);
            }
        localized += total > 0.0 && inside / total >= 0.6;
    }
    const double t = seconds_since(start);
    return {localized * 10 >= test.size() * 9 && t < 300.0,
            std::to_string(localized) + "/" + std::to_string(test.size()) + " CAMs with >= 60% mass in the square's quadrant" +
                " (test accuracy " + fmt(double(correct) / double(test.size()), 2) + ")"};
}

// --- 7: annotation bias ------------------------------------------------------------------------

const char* kDeskClassifier = R"("classifier": {"input_size": 48, "block_channels": [8, 16, 32], "head_units": [64], "dropout_rate": 0.3})";
const char* kDeskSchedule = R"("classifier": {"warmup_epochs": 10, "finetune_epochs": 20, "batch_size": 16, "warmup_lr": 0.001, "finetune_lr": 0.0005})";

Outcome annotation_bias(Context& ctx) {
    ctx.segmentation_stage();
    const auto start = std::chrono::steady_clock::now();
    ctx.cli({"seg-predict", "--model", ctx.str("seg/train/checkpoints/unet.ckpt"), "--manifest",
             ctx.str("seg/split/manifest.csv"), "--split", "all", "--out", ctx.str("bias/masks")});
    ctx.write_text("bias/config.json", std::string(R"({"model": {)") + kDeskClassifier +
                                           R"(, "explain": "lime", "lime": {"n_samples": 300, "quickshift": {"kernel_size": 2}}},
 "schedule": {)" + kDeskSchedule + "}}");
    ctx.cli({"compare", "--manifest", ctx.str("seg/split/manifest.csv"), "--config", ctx.str("bias/config.json"), "--seed",
             "7", "--masks", ctx.str("bias/masks/masks"), "--clean-image-dir", ctx.str("seg/corpus/clean"), "--glyph-strip",
             "--out", ctx.str("bias/compare")});
    const json r = ctx.report("bias/compare");
    const json& seg = r.at("variants")[0];
    const json& full = r.at("variants")[1];
    const double seg_mass = seg.at("strip_mass"), full_mass = full.at("strip_mass");
    const double seg_drop = seg.at("clean_accuracy_drop"), full_drop = full.at("clean_accuracy_drop");
    const bool mass_ok = full_mass >= 2.0 * seg_mass && full_mass > 0.0;
    const bool drop_ok = full_drop >= 0.15 && seg_drop <= 0.05;
    const double t = seconds_since(start) + ctx.segmentation_seconds();
    return {mass_ok && drop_ok && t < 900.0,
            "(a) strip mass full " + fmt(full_mass) + " vs segmented " + fmt(seg_mass) + "; (b) accuracy drop full " +
                fmt(100 * full_drop, 1) + " pts (" + fmt(full.at("accuracy"), 3) + " -> " +
                fmt(full.at("clean").at("accuracy"), 3) + "), segmented " + fmt(100 * seg_drop, 1) + " pts (" +
                fmt(seg.at("accuracy"), 3) + " -> " + fmt(seg.at("clean").at("accuracy"), 3) + ")"};
}

// --- 8: source bias probe ------------------------------------------------------------------------

Outcome source_bias(Context& ctx) {
    fs::remove_all(ctx.dir("source"));
    ctx.cli({"synth", "--n", "200", "--size", "64", "--bias", "--glyph-mode", "source", "--source-texture", "--seed", "8",
             "--out", ctx.str("source/corpus")});
    ctx.cli({"split", "--manifest", ctx.str("source/corpus/manifest.csv"), "--seed", "8", "--out", ctx.str("source/split")});
    ctx.write_text("source/config.json", std::string(R"({"mode": "source_bias", "model": {)") + kDeskClassifier +
                                             R"(}, "schedule": {)" + kDeskSchedule + "}}");
    ctx.cli({"compare", "--manifest", ctx.str("source/split/manifest.csv"), "--config", ctx.str("source/config.json"),
             "--seed", "8", "--masks", ctx.str("source/corpus/masks"), "--no-explain", "--out", ctx.str("source/compare")});
    const json r = ctx.report("source/compare");
    const double seg = r.at("variants")[0].at("macro_f1"), full = r.at("variants")[1].at("macro_f1");
    return {seg < full, "source macro-F1 segmented " + fmt(seg, 3) + " vs full " + fmt(full, 3) + " over classes " +
                            r.at("classes").dump()};
}

// --- 9: determinism --------------------------------------------------------------------------------

Outcome determinism(Context& ctx) {
    const char* config = R"({"model": {"unet": {"input_size": 32, "depth": 2, "base_channels": 4},
   "classifier": {"input_size": 24, "block_channels": [4, 8], "head_units": [16]},
   "lime": {"n_samples": 100, "quickshift": {"kernel_size": 2}}},
 "schedule": {"segmentation": {"epochs": 3}, "classifier": {"warmup_epochs": 2, "finetune_epochs": 3, "batch_size": 16}}})";
    std::vector<std::string> compared;
    std::size_t differing = 0;
    for (const char* tag : {"a", "b"}) {
        const std::string root = std::string("determinism/") + tag;
        fs::remove_all(ctx.dir(root));
        ctx.write_text(root + "/config.json", config);
        ctx.cli({"synth", "--n", "60", "--size", "32", "--bias", "--seed", "9", "--out", ctx.str(root + "/corpus")});
        ctx.cli({"split", "--manifest", ctx.str(root + "/corpus/manifest.csv"), "--seed", "9", "--out", ctx.str(root + "/split")});
        ctx.cli({"seg-train", "--manifest", ctx.str(root + "/split/manifest.csv"), "--config", ctx.str(root + "/config.json"),
                 "--seed", "9", "--out", ctx.str(root + "/seg")});
        ctx.cli({"clf-train", "--manifest", ctx.str(root + "/split/manifest.csv"), "--config", ctx.str(root + "/config.json"),
                 "--seed", "9", "--out", ctx.str(root + "/clf")});
        ctx.cli({"explain", "--model", ctx.str(root + "/clf/checkpoints/classifier.ckpt"), "--manifest",
                 ctx.str(root + "/split/manifest.csv"), "--config", ctx.str(root + "/config.json"), "--seed", "9", "--out",
                 ctx.str(root + "/explain")});
        ctx.cli({"heatmap", "--explanations", ctx.str(root + "/explain"), "--out", ctx.str(root + "/heatmap")});
        ctx.cli({"compare", "--manifest", ctx.str(root + "/split/manifest.csv"), "--config", ctx.str(root + "/config.json"),
                 "--seed", "9", "--set", "model.explain=gradcam", "--glyph-strip", "--out", ctx.str(root + "/compare")});
    }
    for (const char* run : {"corpus", "split", "seg", "clf", "explain", "heatmap", "compare"}) {
        const fs::path a = ctx.dir(std::string("determinism/a/") + run), b = ctx.dir(std::string("determinism/b/") + run);
        for (const auto& e : fs::recursive_directory_iterator(a)) {
            const std::string rel = fs::relative(e.path(), a).generic_string();
            if (rel != "report.json" && e.path().extension() != ".pfm") continue;
            compared.push_back(rel);
            if (read_file(e.path()) != read_file(b / rel)) ++differing;
        }
    }
    return {differing == 0 && !compared.empty(),
            std::to_string(compared.size()) + " report/PFM files compared across two runs, " + std::to_string(differing) +
                " differ"};
}

// --- 10: generalization folds -------------------------------------------------------------------------

Outcome folds(Context&) {
    const Manifest m = sgxp::testing::reference_manifest();
    const auto f = make_generalization_folds(m, 10);
    // Per-source (negative, covid19) counts of each fold.
    std::map<std::string, std::array<std::size_t, 4>> cells;
    for (std::size_t k = 0; k < 2; ++k) {
        for (const auto i : f[k].negatives) ++cells[m.records[i].source][2 * k];
        for (const auto i : f[k].positives) ++cells[m.records[i].source][2 * k + 1];
    }
    const std::map<std::string, std::array<std::size_t, 4>> expected = {
        {"cohen", {156, 418, 0, 0}},  {"rsna", {1000, 0, 1000, 0}}, {"actualmed", {0, 0, 0, 51}},
        {"figure1", {0, 0, 0, 34}},   {"radiopaedia", {0, 0, 7, 0}}, {"eurorad", {0, 0, 1, 0}},
        {"hamimi", {0, 0, 7, 0}},     {"bontrager", {0, 0, 4, 0}}};
    const bool ok = cells == expected && f[0].negatives.size() == 1156 && f[0].positives.size() == 418 &&
                    f[1].negatives.size() == 1019 && f[1].positives.size() == 85;
    return {ok, "fold 1 " + std::to_string(f[0].negatives.size()) + "/" + std::to_string(f[0].positives.size()) +
                    ", fold 2 " + std::to_string(f[1].negatives.size()) + "/" + std::to_string(f[1].positives.size()) +
                    " (negative/covid19), per-source cells " + (cells == expected ? "match" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
    fs::path work = fs::temp_directory_path() / "sgxp_acceptance";
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--work" && i + 1 < argc) {
            work = argv[++i];
        } else {
            selected.insert(std::stoi(a));
        }
    }
    fs::create_directories(work);
    Context ctx(work);

    const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria = {
        {"gradient soundness", gradients},
        {"segmentation Dice/Jaccard", segmentation},
        {"metric oracles", metric_oracles},
        {"morphology oracle", morphology},
        {"LIME planted feature", lime_planted},
        {"Grad-CAM localization", gradcam_localization},
        {"annotation bias", annotation_bias},
        {"source bias probe", source_bias},
        {"CLI determinism", determinism},
        {"generalization folds", folds},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int number = static_cast<int>(i + 1);
        if (!selected.empty() && !selected.count(number)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second(ctx);
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << "criterion " << std::setw(2) << number << " " << (o.pass ? "PASS" : "FAIL") << "  "
                  << criteria[i].first << ": " << o.detail << " [" << fmt(seconds_since(start), 1) << " s]" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
