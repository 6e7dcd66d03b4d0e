#pragma once

#include "postdae/raster.hpp"
#include "postdae/rng.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace testing {

inline std::filesystem::path tmp_dir(const std::string& name)
{
    auto dir = std::filesystem::path(POSTDAE_TEST_TMP) / name;
    std::filesystem::create_directories(dir);
    return dir;
}

/// 4-connected components of one label.
inline int components(const postdae::LabelMask& m, int label)
{
    std::vector<char> seen(m.size(), 0);
    int count = 0;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (m.at(x, y) != label || seen[m.index(x, y)]) {
                continue;
            }
            ++count;
            stack.assign(1, {x, y});
            seen[m.index(x, y)] = 1;
            while (!stack.empty()) {
                auto [cx, cy] = stack.back();
                stack.pop_back();
                const int dx[] = {1, -1, 0, 0};
                const int dy[] = {0, 0, 1, -1};
                for (int d = 0; d < 4; ++d) {
                    const int nx = cx + dx[d], ny = cy + dy[d];
                    if (m.in_bounds(nx, ny) && m.at(nx, ny) == label && !seen[m.index(nx, ny)]) {
                        seen[m.index(nx, ny)] = 1;
                        stack.emplace_back(nx, ny);
                    }
                }
            }
        }
    }
    return count;
}

inline postdae::LabelMask random_mask(int w, int h, int k, std::uint64_t seed, double fg = 0.5)
{
    postdae::Rng rng(seed);
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(w) * h);
    for (auto& l : labels) {
        l = rng.bernoulli(fg) ? static_cast<std::uint8_t>(rng.uniform_int(1, k - 1)) : 0;
    }
    return postdae::LabelMask(w, h, k, std::move(labels));
}

} // namespace testing
