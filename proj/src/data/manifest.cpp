#include "sgxp/data/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "sgxp/core/errors.hpp"

namespace sgxp {
namespace {

constexpr std::array<std::string_view, 6> kColumns = {"id",     "image_path",  "patient_id",
                                                      "source", "class_label", "projection"};

template <std::size_t N>
bool in_vocabulary(const std::array<std::string_view, N>& vocab, std::string_view v) {
    return std::find(vocab.begin(), vocab.end(), v) != vocab.end();
}

std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

// Empty string when the record is valid.
std::string record_problem(const SampleRecord& r) {
    if (r.id.empty()) return "empty id";
    if (r.image_path.empty()) return "empty image_path for '" + r.id + "'";
    if (r.patient_id.empty()) return "empty patient_id for '" + r.id + "'";
    if (!in_vocabulary(kSources, r.source)) return "unknown source '" + r.source + "'";
    if (!in_vocabulary(kClassLabels, r.class_label)) return "unknown class_label '" + r.class_label + "'";
    if (!in_vocabulary(kProjections, r.projection)) return "unknown projection '" + r.projection + "'";
    return {};
}

}  // namespace

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ArgumentError("unknown split '" + std::string(s) + "'");
}

bool Manifest::has_split() const {
    return std::any_of(records.begin(), records.end(), [](const auto& r) { return r.split.has_value(); });
}

const SampleRecord& Manifest::find(std::string_view id) const {
    for (const auto& r : records) {
        if (r.id == id) return r;
    }
    throw ArgumentError("no record with id '" + std::string(id) + "'");
}

void validate(const Manifest& manifest) {
    std::set<std::string_view> ids;
    for (const auto& r : manifest.records) {
        if (auto p = record_problem(r); !p.empty()) throw ArgumentError("invalid record: " + p);
        if (!ids.insert(r.id).second) throw ArgumentError("duplicate id '" + r.id + "'");
    }
}

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir) {
    Manifest m;
    m.base_dir = base_dir;
    std::set<std::string> ids;
    std::size_t line_no = 0, pos = 0;
    bool with_split = false;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line_no == 1 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
        if (line_no == 1) {
            const auto header = split_fields(line);
            with_split = header.size() == kColumns.size() + 1 && header.back() == "split";
            if (!std::equal(kColumns.begin(), kColumns.end(), header.begin(), header.begin() + std::min(header.size(), kColumns.size())) ||
                (header.size() != kColumns.size() && !with_split)) {
                throw ParseError("expected header id,image_path,patient_id,source,class_label,projection[,split]", 1);
            }
            continue;
        }
        if (line.empty()) continue;
        const auto f = split_fields(line);
        const std::size_t want = kColumns.size() + (with_split ? 1 : 0);
        if (f.size() != want) {
            throw ParseError("expected " + std::to_string(want) + " fields, found " + std::to_string(f.size()), line_no);
        }
        SampleRecord r{f[0], f[1], f[2], f[3], f[4], f[5], std::nullopt, {}};
        if (auto p = record_problem(r); !p.empty()) throw ParseError(p, line_no);
        if (with_split && !f[6].empty()) {
            try {
                r.split = parse_split(f[6]);
            } catch (const ArgumentError& e) {
                throw ParseError(e.what(), line_no);
            }
        }
        if (!ids.insert(r.id).second) throw ParseError("duplicate id '" + r.id + "'", line_no);
        m.records.push_back(std::move(r));
    }
    if (line_no == 0) throw ParseError("missing header", 1);
    return m;
}

Manifest load_manifest(const std::filesystem::path& path, bool check_files) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    Manifest m = parse_manifest(ss.str(), path.parent_path());
    if (check_files) {
        for (const auto& r : m.records) {
            if (!std::filesystem::is_regular_file(m.resolve(r))) {
                throw ArgumentError("image for '" + r.id + "' not found: " + m.resolve(r).string());
            }
        }
    }
    return m;
}

std::string to_csv(const Manifest& manifest) {
    const bool with_split = manifest.has_split();
    std::string out = "id,image_path,patient_id,source,class_label,projection";
    out += with_split ? ",split\n" : "\n";
    for (const auto& r : manifest.records) {
        out += r.id + ',' + r.image_path + ',' + r.patient_id + ',' + r.source + ',' + r.class_label + ',' + r.projection;
        if (with_split) {
            out += ',';
            if (r.split) out += to_string(*r.split);
        }
        out += '\n';
    }
    return out;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    validate(manifest);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest " + path.string());
    out << to_csv(manifest);
}

std::vector<std::string> present_classes(const Manifest& manifest) {
    std::vector<std::string> out;
    for (auto label : kClassLabels) {
        const bool present = std::any_of(manifest.records.begin(), manifest.records.end(),
                                         [&](const auto& r) { return r.class_label == label; });
        if (present) out.emplace_back(label);
    }
    return out;
}

Manifest relabel_by_source(Manifest manifest) {
    for (auto& r : manifest.records) {
        if (r.original_label.empty()) r.original_label = r.class_label;
        r.class_label = r.source == "cohen" || r.source == "rsna" ? r.source : "other";
    }
    return manifest;
}

}  // namespace sgxp
