#include "sgxp/xai/quickshift.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include "sgxp/core/errors.hpp"

namespace sgxp {
namespace {

struct DisjointSets {
    std::vector<std::size_t> parent;
    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
    std::size_t find(std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    }
};

}  // namespace

std::vector<std::size_t> SuperpixelMap::areas() const {
    std::vector<std::size_t> a(static_cast<std::size_t>(count), 0);
    for (int l : labels) ++a[static_cast<std::size_t>(l)];
    return a;
}

SuperpixelMap quickshift(const Image& image, const QuickshiftConfig& config) {
    if (!(config.kernel_size > 0.0)) throw ArgumentError("quickshift kernel_size must be positive");
    if (config.ratio < 0.0) throw ArgumentError("quickshift ratio must be non-negative");
    if (image.empty()) throw ArgumentError("quickshift needs a non-empty image");
    const double sigma = config.kernel_size;
    const double max_dist = config.max_dist > 0.0 ? config.max_dist : 2.0 * sigma;
    const long h = static_cast<long>(image.height), w = static_cast<long>(image.width);
    const std::size_t n = image.size();
    std::vector<double> feat(n);
    for (std::size_t i = 0; i < n; ++i) feat[i] = config.ratio * 100.0 * image.data[i];

    // Density, quantized so that the ordering does not hinge on the last bits of a sum.
    const long win = static_cast<long>(std::ceil(3.0 * sigma));
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    std::vector<std::int64_t> density(n);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            const std::size_t p = static_cast<std::size_t>(y * w + x);
            double d = 0.0;
            for (long yy = std::max(0L, y - win); yy <= std::min(h - 1, y + win); ++yy) {
                for (long xx = std::max(0L, x - win); xx <= std::min(w - 1, x + win); ++xx) {
                    const std::size_t q = static_cast<std::size_t>(yy * w + xx);
                    const double df = feat[q] - feat[p];
                    const double dist2 = static_cast<double>((yy - y) * (yy - y) + (xx - x) * (xx - x)) + df * df;
                    d += std::exp(-dist2 * inv2s2);
                }
            }
            density[p] = std::llround(d * 1e9);
        }
    }
    auto higher = [&](std::size_t a, std::size_t b) {
        return density[a] != density[b] ? density[a] > density[b] : a > b;
    };

    // Link to the nearest higher-key pixel; roots keep themselves.
    const long reach = static_cast<long>(std::ceil(max_dist));
    const double max2 = max_dist * max_dist;
    std::vector<std::size_t> parent(n);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            const std::size_t p = static_cast<std::size_t>(y * w + x);
            parent[p] = p;
            double best = std::numeric_limits<double>::infinity();
            for (long yy = std::max(0L, y - reach); yy <= std::min(h - 1, y + reach); ++yy) {
                for (long xx = std::max(0L, x - reach); xx <= std::min(w - 1, x + reach); ++xx) {
                    const std::size_t q = static_cast<std::size_t>(yy * w + xx);
                    if (!higher(q, p)) continue;
                    const double df = feat[q] - feat[p];
                    const double dist2 = static_cast<double>((yy - y) * (yy - y) + (xx - x) * (xx - x)) + df * df;
                    if (dist2 < max2 && dist2 < best) {
                        best = dist2;
                        parent[p] = q;
                    }
                }
            }
        }
    }
    // Parents strictly increase the key, so following them terminates; visit pixels by
    // ascending key reversed (highest first) so each parent's root is known already.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return higher(a, b); });
    std::vector<std::size_t> root(n);
    for (std::size_t p : order) root[p] = parent[p] == p ? p : root[parent[p]];

    // 4-connected pieces of each tree.
    std::vector<int> comp(n, -1);
    int count = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < n; ++s) {
        if (comp[s] >= 0) continue;
        comp[s] = count;
        stack.assign(1, s);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const long y = static_cast<long>(p) / w, x = static_cast<long>(p) % w;
            const long ny[4] = {y - 1, y + 1, y, y}, nx[4] = {x, x, x - 1, x + 1};
            for (int k = 0; k < 4; ++k) {
                if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
                const std::size_t q = static_cast<std::size_t>(ny[k] * w + nx[k]);
                if (comp[q] < 0 && root[q] == root[p]) {
                    comp[q] = count;
                    stack.push_back(q);
                }
            }
        }
        ++count;
    }

    // Merge pieces below min_size into the adjacent piece with the closest mean intensity.
    const std::size_t m = static_cast<std::size_t>(count);
    DisjointSets sets(m);
    std::vector<std::size_t> size(m, 0);
    std::vector<double> sum(m, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
        ++size[static_cast<std::size_t>(comp[p])];
        sum[static_cast<std::size_t>(comp[p])] += image.data[p];
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t c = 0; c < m; ++c) {
            if (sets.find(c) != c || size[c] >= config.min_size || size[c] == n) continue;
            const double mean = sum[c] / static_cast<double>(size[c]);
            std::size_t target = m;
            double best = std::numeric_limits<double>::infinity();
            for (long y = 0; y < h; ++y) {
                for (long x = 0; x < w; ++x) {
                    const std::size_t p = static_cast<std::size_t>(y * w + x);
                    if (sets.find(static_cast<std::size_t>(comp[p])) != c) continue;
                    const long ny[4] = {y - 1, y + 1, y, y}, nx[4] = {x, x, x - 1, x + 1};
                    for (int k = 0; k < 4; ++k) {
                        if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
                        const std::size_t o = sets.find(static_cast<std::size_t>(comp[static_cast<std::size_t>(ny[k] * w + nx[k])]));
                        if (o == c) continue;
                        const double diff = std::abs(sum[o] / static_cast<double>(size[o]) - mean);
                        if (diff < best || (diff == best && o < target)) {
                            best = diff;
                            target = o;
                        }
                    }
                }
            }
            if (target == m) continue;
            sets.parent[c] = target;
            size[target] += size[c];
            sum[target] += sum[c];
            changed = true;
        }
    }

    SuperpixelMap map{image.height, image.width, std::vector<int>(n, -1), 0};
    std::vector<int> relabel(m, -1);
    for (std::size_t p = 0; p < n; ++p) {
        const std::size_t r = sets.find(static_cast<std::size_t>(comp[p]));
        if (relabel[r] < 0) relabel[r] = map.count++;
        map.labels[p] = relabel[r];
    }
    return map;
}

}  // namespace sgxp
