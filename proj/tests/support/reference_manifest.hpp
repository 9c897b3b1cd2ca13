#pragma once

#include <array>
#include <string>

#include "sgxp/data/manifest.hpp"

namespace sgxp::testing {

struct SourceCounts {
    const char* source;
    std::size_t opacity, covid, normal;
};

// Per-source image totals of the real composition (lung opacity / COVID-19 / normal).
inline constexpr std::array<SourceCounts, 8> kReferenceComposition = {{{"cohen", 140, 418, 16},
                                                                   {"rsna", 1000, 0, 1000},
                                                                   {"actualmed", 0, 51, 0},
                                                                   {"figure1", 0, 34, 0},
                                                                   {"radiopaedia", 7, 0, 0},
                                                                   {"eurorad", 1, 0, 0},
                                                                   {"hamimi", 7, 0, 0},
                                                                   {"bontrager", 4, 0, 0}}};

// Metadata-only manifest, one patient per image.
inline Manifest reference_manifest() {
    Manifest m;
    std::size_t next = 0;
    for (const auto& s : kReferenceComposition) {
        const std::array<std::pair<const char*, std::size_t>, 3> cells = {
            {{"lung_opacity", s.opacity}, {"covid19", s.covid}, {"normal", s.normal}}};
        for (const auto& [label, count] : cells) {
            for (std::size_t i = 0; i < count; ++i, ++next) {
                const std::string id = "r" + std::to_string(next);
                m.records.push_back({id, id + ".pgm", "p" + std::to_string(next), s.source, label, "PA", std::nullopt, {}});
            }
        }
    }
    return m;
}

}  // namespace sgxp::testing
