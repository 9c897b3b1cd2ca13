#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sgxp {

inline constexpr std::array<std::string_view, 9> kSources = {
    "cohen", "rsna", "actualmed", "figure1", "radiopaedia", "eurorad", "hamimi", "bontrager", "other"};
/// Diagnostic labels followed by the source labels produced by relabel_by_source.
inline constexpr std::array<std::string_view, 6> kClassLabels = {"lung_opacity", "covid19", "normal",
                                                                 "cohen",        "rsna",    "other"};
inline constexpr std::array<std::string_view, 3> kProjections = {"PA", "AP", "AP_portable"};

enum class Split { train, val, test };

std::string_view to_string(Split s);
/// Throws ArgumentError on anything but train|val|test.
Split parse_split(std::string_view s);

struct SampleRecord {
    std::string id;
    std::string image_path;
    std::string patient_id;
    std::string source;
    std::string class_label;
    std::string projection;
    std::optional<Split> split;
    /// Label before relabel_by_source; empty when never relabelled. Not serialized.
    std::string original_label;

    friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct Manifest {
    std::vector<SampleRecord> records;
    /// Directory relative image paths are resolved against.
    std::filesystem::path base_dir;

    bool has_split() const;
    std::filesystem::path resolve(const SampleRecord& r) const { return base_dir / r.image_path; }
    /// Throws ArgumentError on an unknown id.
    const SampleRecord& find(std::string_view id) const;
};

/// Checks vocabularies and id uniqueness; throws ArgumentError naming the offending record.
void validate(const Manifest& manifest);

/// CSV with header id,image_path,patient_id,source,class_label,projection[,split].
/// Vocabulary and duplicate-id violations raise ParseError with the 1-based line number.
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir = {});
/// Also requires every image file to exist (relative to the manifest's directory).
Manifest load_manifest(const std::filesystem::path& path, bool check_files = true);

std::string to_csv(const Manifest& manifest);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Sorted, duplicate-free class labels present in the manifest, in vocabulary order.
std::vector<std::string> present_classes(const Manifest& manifest);

/// class_label := cohen | rsna | other by source; the diagnostic label moves to
/// original_label. Idempotent.
Manifest relabel_by_source(Manifest manifest);

}  // namespace sgxp
