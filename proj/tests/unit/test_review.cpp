#include <algorithm>
#include <atomic>
#include <filesystem>
#include <functional>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include "sgxp/core/errors.hpp"
#include "sgxp/core/random.hpp"
#include "sgxp/data/image_io.hpp"
#include "sgxp/review/server.hpp"
#include "sgxp/review/store.hpp"

using namespace sgxp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("sgxp_test_review_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

BinaryMask random_mask(std::size_t h, std::size_t w, std::uint64_t seed) {
    Rng rng(seed);
    BinaryMask m(h, w);
    for (auto& v : m.data) v = uniform01(rng) < 0.4 ? 1 : 0;
    return m;
}

// A seg-predict style directory with n 64x64 predictions; returns its path.
fs::path make_predictions(const fs::path& root, std::size_t n) {
    const fs::path pred = root / "pred";
    json items = json::array();
    for (std::size_t i = 0; i < n; ++i) {
        const std::string id = "img" + std::to_string(i);
        Image im(64, 64);
        for (std::size_t p = 0; p < im.size(); ++p) im.data[p] = static_cast<float>((p * 7 + i) % 256) / 255.0f;
        save_image(pred / "images" / (id + ".pgm"), im);
        save_mask(pred / "masks" / (id + ".pgm"), random_mask(64, 64, i));
        items.push_back({{"id", id}, {"image", "images/" + id + ".pgm"}, {"mask", "masks/" + id + ".pgm"}});
    }
    write_file_atomic(pred / "predictions.json", json{{"items", items}}.dump());
    return pred;
}

// Names and bytes of every file under dir.
std::string checksum(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string all;
    for (const auto& f : files) all += f.string() + '\0' + read_file(f) + '\0';
    return std::to_string(std::hash<std::string>{}(all)) + ":" + std::to_string(all.size());
}

int status_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ReviewError& e) {
        return e.status();
    }
    return 200;
}

class StoreTest : public ::testing::Test {
protected:
    void SetUp() override {
        root = temp_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
        ReviewStore::initialize_from_predictions(root / "store", make_predictions(root, 5));
    }
    fs::path root;
};

}  // namespace

TEST(Base64, KnownVectorsAndRoundTrip) {
    EXPECT_EQ(base64_encode(""), "");
    EXPECT_EQ(base64_encode("f"), "Zg==");
    EXPECT_EQ(base64_encode("fo"), "Zm8=");
    EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
    Rng rng(1);
    for (int n = 0; n < 40; ++n) {
        std::string bytes(static_cast<std::size_t>(n), '\0');
        for (auto& c : bytes) c = static_cast<char>(rng() & 0xFF);
        EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
    }
    EXPECT_THROW(base64_decode("Zg="), ArgumentError);
    EXPECT_THROW(base64_decode("Z=g="), ArgumentError);
    EXPECT_THROW(base64_decode("Zm9*"), ArgumentError);
}

TEST(ReviewTransitions, OnlyPendingAndEditedMove) {
    using S = ReviewStatus;
    EXPECT_TRUE(legal_transition(S::pending, S::accepted));
    EXPECT_TRUE(legal_transition(S::pending, S::edited));
    EXPECT_TRUE(legal_transition(S::pending, S::rejected));
    EXPECT_TRUE(legal_transition(S::edited, S::edited));
    EXPECT_FALSE(legal_transition(S::pending, S::pending));
    EXPECT_FALSE(legal_transition(S::accepted, S::pending));
    EXPECT_FALSE(legal_transition(S::edited, S::accepted));
    EXPECT_FALSE(legal_transition(S::rejected, S::edited));
}

TEST_F(StoreTest, FreshStoreListsPendingSorted) {
    ReviewStore store(root / "store");
    const auto items = store.list(ReviewStatus::pending);
    ASSERT_EQ(items.size(), 5u);
    for (std::size_t i = 1; i < items.size(); ++i) EXPECT_LT(items[i - 1].image_id, items[i].image_id);
    EXPECT_EQ(store.mask("img2"), random_mask(64, 64, 2));
    EXPECT_THROW(ReviewStore::initialize(root / "store", {}), ArgumentError);
}

TEST_F(StoreTest, EditedMaskPersistsAndBumpsRevision) {
    ReviewStore store(root / "store");
    const BinaryMask edit = random_mask(64, 64, 99);
    EXPECT_EQ(store.update("img1", {ReviewStatus::edited, encode_mask(edit), 0}), 1u);
    EXPECT_EQ(store.mask("img1"), edit);
    EXPECT_EQ(store.update("img1", {ReviewStatus::edited, encode_mask(random_mask(64, 64, 5)), 1}), 2u);
    ReviewStore reopened(root / "store");
    EXPECT_EQ(reopened.item("img1").revision, 2u);
    EXPECT_EQ(reopened.mask("img1"), random_mask(64, 64, 5));
    // Old revisions are not kept.
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(root / "store" / "masks")) files += e.path().filename().string().rfind("img1.", 0) == 0;
    EXPECT_EQ(files, 1u);
}

TEST_F(StoreTest, RejectsIllegalAndMalformedUpdates) {
    ReviewStore store(root / "store");
    EXPECT_EQ(store.update("img0", {ReviewStatus::accepted, std::nullopt, std::nullopt}), 1u);
    EXPECT_EQ(status_of([&] { store.update("img0", {ReviewStatus::pending, std::nullopt, std::nullopt}); }), 409);
    EXPECT_EQ(status_of([&] { store.update("img1", {ReviewStatus::accepted, std::nullopt, 3}); }), 409);
    EXPECT_EQ(status_of([&] { store.update("img1", {ReviewStatus::edited, encode_mask(BinaryMask(63, 63)), 0}); }), 422);
    EXPECT_EQ(status_of([&] { store.update("img1", {ReviewStatus::edited, std::nullopt, 0}); }), 422);
    EXPECT_EQ(status_of([&] { store.update("img1", {ReviewStatus::accepted, encode_mask(BinaryMask(64, 64)), 0}); }), 422);
    EXPECT_EQ(status_of([&] { store.update("img1", {ReviewStatus::edited, encode_pgm(Grid<std::uint8_t>(64, 64, 7)), 0}); }), 422);
    EXPECT_EQ(status_of([&] { store.update("img1", {ReviewStatus::edited, std::string("P5\n64"), 0}); }), 422);
    EXPECT_EQ(status_of([&] { store.update("nope", {ReviewStatus::accepted, std::nullopt, 0}); }), 404);
    EXPECT_EQ(store.item("img1").revision, 0u);
    EXPECT_EQ(store.item("img1").status, ReviewStatus::pending);
}

TEST_F(StoreTest, CrashBetweenMaskAndIndexLeavesPreviousState) {
    const std::string before = read_file(root / "store" / "index.json");
    {
        ReviewStore store(root / "store");
        store.fault_hook = [](std::string_view stage) {
            if (stage == "mask-written") throw std::runtime_error("simulated crash");
        };
        EXPECT_THROW(store.update("img3", {ReviewStatus::edited, encode_mask(random_mask(64, 64, 42)), 0}),
                     std::runtime_error);
    }
    EXPECT_EQ(read_file(root / "store" / "index.json"), before);
    ReviewStore reopened(root / "store");
    EXPECT_EQ(reopened.item("img3").revision, 0u);
    EXPECT_EQ(reopened.mask("img3"), random_mask(64, 64, 3));
    EXPECT_FALSE(fs::exists(root / "store" / "masks" / "img3.rev1.pgm"));  // orphan collected
    EXPECT_EQ(reopened.update("img3", {ReviewStatus::edited, encode_mask(random_mask(64, 64, 42)), 0}), 1u);
}

TEST_F(StoreTest, CrashAfterIndexKeepsTheNewState) {
    {
        ReviewStore store(root / "store");
        store.fault_hook = [](std::string_view stage) {
            if (stage == "index-written") throw std::runtime_error("simulated crash");
        };
        EXPECT_THROW(store.update("img4", {ReviewStatus::edited, encode_mask(random_mask(64, 64, 8)), 0}),
                     std::runtime_error);
    }
    ReviewStore reopened(root / "store");
    EXPECT_EQ(reopened.item("img4").revision, 1u);
    EXPECT_EQ(reopened.mask("img4"), random_mask(64, 64, 8));
    EXPECT_FALSE(fs::exists(root / "store" / "masks" / "img4.rev0.pgm"));
}

TEST_F(StoreTest, ExportsEditedItemsOnly) {
    ReviewStore store(root / "store");
    store.update("img0", {ReviewStatus::accepted, std::nullopt, 0});
    store.update("img2", {ReviewStatus::edited, encode_mask(random_mask(64, 64, 11)), 0});
    const auto ids = store.export_corrections(root / "out");
    EXPECT_EQ(ids, std::vector<std::string>{"img2"});
    EXPECT_EQ(load_mask(root / "out" / "masks" / "img2.pgm"), random_mask(64, 64, 11));
    EXPECT_EQ(read_file(root / "out" / "corrections.csv"), "id,image,mask\nimg2,images/img2.pgm,masks/img2.pgm\n");
}

TEST(ReviewStoreOpen, UninitializedIs503) {
    EXPECT_EQ(status_of([] { ReviewStore s(temp_dir("empty")); }), 503);
}

// ---- HTTP

class ServerTest : public ::testing::Test {
protected:
    void SetUp() override {
        root = temp_dir(std::string("http_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        server = std::make_unique<ReviewServer>(root / "store");
        port = server->start();
    }
    void TearDown() override { server->stop(); }
    void init(std::size_t n = 5) { ReviewStore::initialize_from_predictions(root / "store", make_predictions(root, n)); }
    httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
    static json body(const httplib::Result& r) { return json::parse(r->body); }
    httplib::Result put(const std::string& id, const json& b) const {
        return client().Put("/api/items/" + id, b.dump(), "application/json");
    }

    fs::path root;
    std::unique_ptr<ReviewServer> server;
    int port = 0;
};

TEST_F(ServerTest, UninitializedThenInitialized) {
    auto r = client().Get("/api/items");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 503);
    EXPECT_TRUE(body(r).contains("error"));
    init();
    r = client().Get("/api/items?status=pending");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    const auto items = body(r).at("items");
    ASSERT_EQ(items.size(), 5u);
    EXPECT_EQ(items[0], (json{{"image_id", "img0"}, {"status", "pending"}, {"revision", 0}}));
}

TEST_F(ServerTest, BadQueriesAndUnknownIds) {
    init();
    EXPECT_EQ(client().Get("/api/items?status=bogus")->status, 400);
    EXPECT_EQ(client().Get("/api/items/missing")->status, 404);
    EXPECT_EQ(client().Put("/api/items/img0", "{not json", "application/json")->status, 400);
    EXPECT_EQ(put("img0", {{"mask", "abc"}})->status, 400);
    EXPECT_EQ(put("img0", {{"status", "bogus"}})->status, 400);
    EXPECT_EQ(put("img0", {{"status", "edited"}, {"mask", "***="}})->status, 422);
}

TEST_F(ServerTest, GetReturnsDecodablePgmsWithoutMutating) {
    init();
    const std::string before = checksum(root / "store");
    const auto r = client().Get("/api/items/img3");
    ASSERT_EQ(r->status, 200);
    const auto b = body(r);
    EXPECT_EQ(b.at("revision"), 0);
    EXPECT_EQ(b.at("status"), "pending");
    const std::string mask_bytes = base64_decode(b.at("mask").get<std::string>());
    EXPECT_EQ(mask_bytes, read_file(root / "store" / "masks" / "img3.rev0.pgm"));
    EXPECT_EQ(pgm_to_mask(decode_pgm(mask_bytes)), random_mask(64, 64, 3));
    EXPECT_TRUE(decode_pgm(base64_decode(b.at("image").get<std::string>())).pixels.same_size(64, 64));
    client().Get("/api/items");
    client().Get("/api/items?status=edited");
    EXPECT_EQ(checksum(root / "store"), before);
}

TEST_F(ServerTest, EditRoundTripAndQueueDrains) {
    init(3);
    const BinaryMask edit = random_mask(64, 64, 77);
    auto r = put("img1", {{"status", "edited"}, {"mask", base64_encode(encode_mask(edit))}, {"revision", 0}});
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(body(r).at("revision"), 1);
    const auto got = body(client().Get("/api/items/img1"));
    EXPECT_EQ(got.at("revision"), 1);
    EXPECT_EQ(got.at("status"), "edited");
    EXPECT_EQ(pgm_to_mask(decode_pgm(base64_decode(got.at("mask").get<std::string>()))), edit);

    EXPECT_EQ(put("img0", {{"status", "accepted"}})->status, 200);
    EXPECT_EQ(put("img2", {{"status", "rejected"}})->status, 200);
    EXPECT_TRUE(body(client().Get("/api/items?status=pending")).at("items").empty());
    r = put("img0", {{"status", "pending"}});
    EXPECT_EQ(r->status, 409);
    EXPECT_EQ(body(r).at("revision"), 1);
    EXPECT_EQ(put("img1", {{"status", "edited"}, {"mask", base64_encode(encode_mask(BinaryMask(63, 63)))}})->status, 422);
}

TEST_F(ServerTest, ConcurrentWritersOneWinsLoserSeesCurrentRevision) {
    init(1);
    for (int round = 0; round < 10; ++round) {
        const auto base = body(client().Get("/api/items/img0")).at("revision").get<int>();
        std::atomic<int> ok{0}, conflict{0};
        std::vector<std::thread> writers;
        std::vector<BinaryMask> masks;
        for (int w = 0; w < 4; ++w) masks.push_back(random_mask(64, 64, static_cast<std::uint64_t>(round * 10 + w)));
        for (int w = 0; w < 4; ++w) {
            writers.emplace_back([&, w] {
                const auto r = put("img0", {{"status", "edited"},
                                            {"mask", base64_encode(encode_mask(masks[static_cast<std::size_t>(w)]))},
                                            {"revision", base}});
                if (r && r->status == 200) ++ok;
                if (r && r->status == 409) {
                    ++conflict;
                    EXPECT_EQ(json::parse(r->body).at("revision"), base + 1);
                }
            });
        }
        for (auto& t : writers) t.join();
        EXPECT_EQ(ok.load(), 1);
        EXPECT_EQ(conflict.load(), 3);
        const auto now = body(client().Get("/api/items/img0"));
        EXPECT_EQ(now.at("revision"), base + 1);
        const BinaryMask stored = pgm_to_mask(decode_pgm(base64_decode(now.at("mask").get<std::string>())));
        EXPECT_TRUE(std::find(masks.begin(), masks.end(), stored) != masks.end());
    }
}
