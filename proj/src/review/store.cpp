#include "sgxp/review/store.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "sgxp/core/errors.hpp"
#include "sgxp/data/image_io.hpp"

namespace sgxp {
namespace fs = std::filesystem;
namespace {

constexpr const char* kIndex = "index.json";

void check_id(std::string_view id) {
    const bool ok = !id.empty() && id.front() != '.' && std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
    });
    if (!ok) throw ArgumentError("image id '" + std::string(id) + "' is not a plain file name");
}

std::string mask_name(std::string_view id, std::uint64_t revision) {
    return "masks/" + std::string(id) + ".rev" + std::to_string(revision) + ".pgm";
}

nlohmann::json to_json(const ReviewItem& item) {
    return {{"image_id", item.image_id},
            {"status", to_string(item.status)},
            {"revision", item.revision},
            {"image", item.image},
            {"mask", item.mask}};
}

std::string index_bytes(const std::vector<ReviewItem>& items) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& item : items) arr.push_back(to_json(item));
    return nlohmann::json{{"version", 1}, {"items", arr}}.dump(2) + "\n";
}

}  // namespace

std::string_view to_string(ReviewStatus s) {
    switch (s) {
        case ReviewStatus::pending: return "pending";
        case ReviewStatus::accepted: return "accepted";
        case ReviewStatus::edited: return "edited";
        case ReviewStatus::rejected: return "rejected";
    }
    return "pending";
}

ReviewStatus parse_review_status(std::string_view s) {
    if (s == "pending") return ReviewStatus::pending;
    if (s == "accepted") return ReviewStatus::accepted;
    if (s == "edited") return ReviewStatus::edited;
    if (s == "rejected") return ReviewStatus::rejected;
    throw ArgumentError("unknown review status '" + std::string(s) + "'");
}

bool legal_transition(ReviewStatus from, ReviewStatus to) {
    if (from == ReviewStatus::pending) return to != ReviewStatus::pending;
    return from == ReviewStatus::edited && to == ReviewStatus::edited;
}

bool ReviewStore::exists(const fs::path& dir) { return fs::is_regular_file(dir / kIndex); }

void ReviewStore::initialize(const fs::path& dir, const std::vector<ReviewSource>& sources) {
    if (exists(dir)) throw ArgumentError(dir.string() + " already holds a review store");
    std::vector<ReviewItem> items;
    std::set<std::string> ids;
    for (const auto& s : sources) {
        check_id(s.image_id);
        if (!ids.insert(s.image_id).second) throw ArgumentError("duplicate image id '" + s.image_id + "'");
        const std::string image = read_file(s.image);
        const Pgm pgm = decode_pgm(image);
        const BinaryMask mask = load_mask(s.mask);
        if (!mask.same_size(pgm.pixels)) throw ArgumentError("mask size differs from image for '" + s.image_id + "'");
        ReviewItem item{s.image_id, ReviewStatus::pending, 0, "images/" + s.image_id + ".pgm", mask_name(s.image_id, 0)};
        write_file_atomic(dir / item.image, image);
        write_file_atomic(dir / item.mask, encode_mask(mask));
        items.push_back(std::move(item));
    }
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
    write_file_atomic(dir / kIndex, index_bytes(items));
}

void ReviewStore::initialize_from_predictions(const fs::path& dir, const fs::path& predictions) {
    const fs::path file = fs::is_directory(predictions) ? predictions / "predictions.json" : predictions;
    const auto j = nlohmann::json::parse(read_file(file));
    std::vector<ReviewSource> sources;
    for (const auto& e : j.at("items")) {
        auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : file.parent_path() / p; };
        sources.push_back({e.at("id").get<std::string>(), resolve(e.at("image").get<std::string>()),
                           resolve(e.at("mask").get<std::string>())});
    }
    initialize(dir, sources);
}

ReviewStore::ReviewStore(fs::path dir) : dir_(std::move(dir)) {
    if (!exists(dir_)) throw ReviewError(503, "review store not initialized at " + dir_.string());
    load_index();
    collect_garbage();
}

void ReviewStore::load_index() {
    const auto j = nlohmann::json::parse(read_file(dir_ / kIndex));
    items_.clear();
    for (const auto& e : j.at("items")) {
        items_.push_back({e.at("image_id").get<std::string>(), parse_review_status(e.at("status").get<std::string>()),
                          e.at("revision").get<std::uint64_t>(), e.at("image").get<std::string>(),
                          e.at("mask").get<std::string>()});
    }
}

void ReviewStore::write_index() const { write_file_atomic(dir_ / kIndex, index_bytes(items_)); }

void ReviewStore::collect_garbage() const {
    std::set<fs::path> referenced;
    for (const auto& item : items_) referenced.insert(fs::path(item.mask).lexically_normal());
    if (fs::is_directory(dir_ / "masks")) {
        for (const auto& entry : fs::directory_iterator(dir_ / "masks")) {
            const fs::path rel = fs::path("masks") / entry.path().filename();
            if (!referenced.count(rel)) fs::remove(entry.path());
        }
    }
    fs::remove(fs::path(dir_ / kIndex) += ".tmp");
}

ReviewItem& ReviewStore::find(std::string_view id) {
    for (auto& item : items_) {
        if (item.image_id == id) return item;
    }
    throw ReviewError(404, "no review item '" + std::string(id) + "'");
}

const ReviewItem& ReviewStore::find(std::string_view id) const {
    return const_cast<ReviewStore*>(this)->find(id);
}

std::vector<ReviewItem> ReviewStore::list(std::optional<ReviewStatus> status) const {
    std::lock_guard lock(mutex_);
    std::vector<ReviewItem> out;
    for (const auto& item : items_) {
        if (!status || item.status == *status) out.push_back(item);
    }
    return out;
}

ReviewItem ReviewStore::item(std::string_view id) const {
    std::lock_guard lock(mutex_);
    return find(id);
}

std::string ReviewStore::image_bytes(std::string_view id) const {
    std::lock_guard lock(mutex_);
    return read_file(dir_ / find(id).image);
}

std::string ReviewStore::mask_bytes(std::string_view id) const {
    std::lock_guard lock(mutex_);
    return read_file(dir_ / find(id).mask);
}

BinaryMask ReviewStore::mask(std::string_view id) const { return pgm_to_mask(decode_pgm(mask_bytes(id))); }

std::uint64_t ReviewStore::update(std::string_view id, const ReviewUpdate& update) {
    std::lock_guard lock(mutex_);
    ReviewItem& item = find(id);
    if (update.base_revision && *update.base_revision != item.revision) {
        throw ReviewError(409, "stale revision " + std::to_string(*update.base_revision) + ", current is " +
                                   std::to_string(item.revision), item.revision);
    }
    if (!legal_transition(item.status, update.status)) {
        throw ReviewError(409, "cannot move from " + std::string(to_string(item.status)) + " to " +
                                   std::string(to_string(update.status)), item.revision);
    }
    const bool edited = update.status == ReviewStatus::edited;
    if (edited && !update.mask) throw ReviewError(422, "status edited needs a mask");
    if (!edited && update.mask) throw ReviewError(422, "a mask is only accepted with status edited");

    ReviewItem next = item;
    next.status = update.status;
    next.revision = item.revision + 1;
    if (update.mask) {
        BinaryMask mask;
        Pgm image_header;
        try {
            mask = pgm_to_mask(decode_pgm(*update.mask));
            image_header = decode_pgm(read_file(dir_ / item.image));
        } catch (const FormatError& e) {
            throw ReviewError(422, std::string("mask is not a valid PGM: ") + e.what());
        } catch (const ArgumentError& e) {
            throw ReviewError(422, e.what());
        }
        if (!mask.same_size(image_header.pixels)) {
            throw ReviewError(422, "mask is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                                       ", image is " + std::to_string(image_header.pixels.width) + "x" +
                                       std::to_string(image_header.pixels.height));
        }
        next.mask = mask_name(id, next.revision);
        write_file_atomic(dir_ / next.mask, encode_mask(mask));
        if (fault_hook) fault_hook("mask-written");
    }
    const ReviewItem previous = item;
    item = next;
    try {
        write_index();
    } catch (...) {
        item = previous;
        throw;
    }
    if (fault_hook) fault_hook("index-written");
    if (previous.mask != item.mask) fs::remove(dir_ / previous.mask);
    return item.revision;
}

std::vector<std::string> ReviewStore::export_corrections(const fs::path& out) const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> ids;
    std::string csv = "id,image,mask\n";
    for (const auto& item : items_) {
        if (item.status != ReviewStatus::edited) continue;
        const std::string image = "images/" + item.image_id + ".pgm", mask = "masks/" + item.image_id + ".pgm";
        write_file_atomic(out / image, read_file(dir_ / item.image));
        write_file_atomic(out / mask, read_file(dir_ / item.mask));
        csv += item.image_id + "," + image + "," + mask + "\n";
        ids.push_back(item.image_id);
    }
    write_file_atomic(out / "corrections.csv", csv);
    return ids;
}

namespace {
constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
        if (i + 2 < bytes.size()) v |= static_cast<unsigned char>(bytes[i + 2]);
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
        out += i + 2 < bytes.size() ? kAlphabet[v & 63] : '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw ArgumentError("base64 length is not a multiple of 4");
    std::array<int, 256> value;
    value.fill(-1);
    for (std::size_t i = 0; i < kAlphabet.size(); ++i) value[static_cast<unsigned char>(kAlphabet[i])] = static_cast<int>(i);
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        const bool last = i + 4 == text.size();
        int pad = 0;
        std::uint32_t v = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=' && last && k >= 2) {
                ++pad;
                v <<= 6;
                continue;
            }
            const int d = value[static_cast<unsigned char>(c)];
            if (d < 0 || pad > 0) throw ArgumentError("invalid base64 at position " + std::to_string(i + k));
            v = (v << 6) | static_cast<std::uint32_t>(d);
        }
        out += static_cast<char>((v >> 16) & 0xFF);
        if (pad < 2) out += static_cast<char>((v >> 8) & 0xFF);
        if (pad < 1) out += static_cast<char>(v & 0xFF);
    }
    return out;
}

}  // namespace sgxp
