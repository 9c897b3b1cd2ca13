#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sgxp/core/image.hpp"

namespace sgxp {

enum class ReviewStatus { pending, accepted, edited, rejected };

std::string_view to_string(ReviewStatus s);
/// Throws ArgumentError on unknown names.
ReviewStatus parse_review_status(std::string_view s);
/// pending -> {accepted, edited, rejected} and edited -> edited.
bool legal_transition(ReviewStatus from, ReviewStatus to);

struct ReviewItem {
    std::string image_id;
    ReviewStatus status = ReviewStatus::pending;
    std::uint64_t revision = 0;
    /// Relative to the store directory.
    std::string image;
    std::string mask;
};

/// Failure carrying the HTTP status the service answers with.
class ReviewError : public std::runtime_error {
public:
    ReviewError(int status, const std::string& what, std::optional<std::uint64_t> revision = std::nullopt)
        : std::runtime_error(what), status_(status), revision_(revision) {}
    int status() const noexcept { return status_; }
    std::optional<std::uint64_t> revision() const noexcept { return revision_; }

private:
    int status_;
    std::optional<std::uint64_t> revision_;
};

struct ReviewSource {
    std::string image_id;
    std::filesystem::path image;
    std::filesystem::path mask;
};

struct ReviewUpdate {
    ReviewStatus status = ReviewStatus::pending;
    /// PGM bytes; required for edited, refused otherwise.
    std::optional<std::string> mask;
    /// Optimistic lock: when set it must equal the current revision.
    std::optional<std::uint64_t> base_revision;
};

/// Directory-backed review items: index.json, images/<id>.pgm and masks/<id>.rev<N>.pgm.
/// Mask files are written before the index and both are replaced by rename, so a crash leaves
/// the previous index valid; unreferenced mask files are removed when the store is opened.
/// Every successful update bumps the revision. All methods are serialized by one mutex.
class ReviewStore {
public:
    /// Copies the images and predicted masks into `dir` (which must not hold a store yet).
    static void initialize(const std::filesystem::path& dir, const std::vector<ReviewSource>& sources);
    /// From a seg-predict output directory (predictions.json).
    static void initialize_from_predictions(const std::filesystem::path& dir, const std::filesystem::path& predictions);
    static bool exists(const std::filesystem::path& dir);

    /// Throws ReviewError(503) when `dir` holds no store.
    explicit ReviewStore(std::filesystem::path dir);

    const std::filesystem::path& dir() const noexcept { return dir_; }

    /// Sorted by image id.
    std::vector<ReviewItem> list(std::optional<ReviewStatus> status = std::nullopt) const;
    /// Throws ReviewError(404).
    ReviewItem item(std::string_view id) const;
    std::string image_bytes(std::string_view id) const;
    std::string mask_bytes(std::string_view id) const;
    BinaryMask mask(std::string_view id) const;

    /// 404 unknown id; 409 stale revision or illegal transition; 422 missing, misplaced,
    /// malformed, non-binary or wrongly sized mask. Returns the new revision.
    std::uint64_t update(std::string_view id, const ReviewUpdate& update);

    /// Writes masks/<id>.pgm, images/<id>.pgm and corrections.csv for every edited item.
    /// Returns the exported ids.
    std::vector<std::string> export_corrections(const std::filesystem::path& out) const;

    /// Test hook called with "mask-written" and "index-written"; throwing simulates a crash.
    std::function<void(std::string_view)> fault_hook;

private:
    void load_index();
    void write_index() const;
    void collect_garbage() const;
    ReviewItem& find(std::string_view id);
    const ReviewItem& find(std::string_view id) const;

    std::filesystem::path dir_;
    std::vector<ReviewItem> items_;
    mutable std::mutex mutex_;
};

std::string base64_encode(std::string_view bytes);
/// Throws ArgumentError on characters outside the standard alphabet or bad padding.
std::string base64_decode(std::string_view text);

}  // namespace sgxp
