#include "splitter.hpp"

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace cytoclip::split {

namespace {

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do x = rng();
    while (x >= limit);
    return x % bound;
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
    std::sort(v.begin(), v.end());
    return v;
}

} // namespace

template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

template void seeded_shuffle<std::size_t>(std::vector<std::size_t>&, std::uint64_t);
template void seeded_shuffle<std::string>(std::vector<std::string>&, std::uint64_t);

std::uint64_t label_seed(std::uint64_t seed, const std::string& label) {
    // FNV-1a over the label, mixed with the run seed.
    std::uint64_t h = 1469598103934665603ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
    for (unsigned char c : label) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

SplitResult split_whole_region(std::span<const regions::RegionImageRecord> records, double val_fraction,
                               std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        fail(ErrorKind::InvalidArgument, "whole-region val_fraction must be in (0, 1)");

    std::map<std::string, std::set<std::string>> sections_of;
    for (const auto& r : records) sections_of[r.label].insert(r.section_id);

    SplitResult res;
    std::map<std::string, std::set<std::string>> val_sections_of;
    for (const auto& [label, secs] : sections_of) {
        std::vector<std::string> order(secs.begin(), secs.end());
        seeded_shuffle(order, label_seed(seed, label));
        const auto n = order.size();
        auto n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(n) - 1e-9));
        n_val = std::min(n_val, n - 1);
        val_sections_of[label].insert(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
        auto& st = res.per_label[label];
        st.sections = n;
        st.val_sections = n_val;
        if (n_val == 0) res.uncovered_labels.push_back(label);
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        auto& st = res.per_label[r.label];
        if (val_sections_of[r.label].contains(r.section_id)) {
            res.val.push_back(i);
            ++st.val_records;
        } else {
            res.train.push_back(i);
            ++st.train_records;
        }
    }
    return res;
}

SplitResult split_tiles(std::span<const tiles::TileRecord> records, double val_fraction, std::uint64_t seed,
                        double cross_section_ratio) {
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
        fail(ErrorKind::InvalidArgument, "tile val_fraction must be in [0, 1)");
    if (!(cross_section_ratio >= 0.0 && cross_section_ratio <= 1.0))
        fail(ErrorKind::InvalidArgument, "cross_section_ratio must be in [0, 1]");

    std::map<std::string, std::map<std::string, std::vector<std::size_t>>> by_label;  // label -> section -> tiles
    {
        std::set<std::tuple<std::string, long, long>> seen;
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& t = records[i];
            if (!seen.emplace(t.section_id, t.grid_x, t.grid_y).second)
                fail(ErrorKind::Domain, "duplicate tile " + t.section_id + " (" + std::to_string(t.grid_x) + ", " +
                                            std::to_string(t.grid_y) + ")");
            by_label[t.label][t.section_id].push_back(i);
        }
    }

    SplitResult res;
    std::vector<char> in_val(records.size(), 0);
    for (const auto& [label, sections] : by_label) {
        auto& st = res.per_label[label];
        st.sections = sections.size();
        std::size_t n = 0;
        for (const auto& [s, v] : sections) n += v.size();
        auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n) + 1e-9));
        n_val = std::min(n_val, n - 1);
        const std::uint64_t lseed = label_seed(seed, label);

        std::vector<std::string> order;
        for (const auto& [s, v] : sections) order.push_back(s);
        seeded_shuffle(order, lseed);

        // Whole sections held out (cross-section provenance), greedy in seeded order.
        const auto cross_quota = static_cast<std::size_t>(std::lround(cross_section_ratio * static_cast<double>(n_val)));
        std::set<std::string> held_out;
        std::size_t cross = 0;
        if (sections.size() > 1) {
            for (const auto& s : order) {
                if (held_out.size() + 1 >= sections.size()) break;
                const std::size_t sz = sections.at(s).size();
                if (cross + sz <= cross_quota) {
                    held_out.insert(s);
                    cross += sz;
                }
            }
            if (held_out.empty() && cross_quota > 0) {
                // Nothing fitted the quota: take the smallest section that still
                // leaves room for a same-section tile.
                const std::string* smallest = nullptr;
                for (const auto& s : order)
                    if (sections.at(s).size() + 1 <= n_val &&
                        (!smallest || sections.at(s).size() < sections.at(*smallest).size()))
                        smallest = &s;
                if (smallest) {
                    held_out.insert(*smallest);
                    cross = sections.at(*smallest).size();
                }
            }
        }
        for (const auto& s : held_out)
            for (std::size_t i : sections.at(s)) in_val[i] = 1;

        // Same-section tiles: random positions from sections that keep training tiles.
        std::vector<std::size_t> pool;
        for (const auto& s : order)
            if (!held_out.contains(s))
                for (std::size_t i : sections.at(s)) pool.push_back(i);
        std::sort(pool.begin(), pool.end());
        seeded_shuffle(pool, lseed ^ 0x5bd1e995ULL);
        const std::size_t same = n_val > cross ? std::min(n_val - cross, pool.size() - 1) : 0;
        for (std::size_t k = 0; k < same; ++k) in_val[pool[k]] = 1;

        st.val_sections = held_out.size();
        st.val_cross_section = cross;
        st.val_same_section = same;
        if (cross + same == 0) res.uncovered_labels.push_back(label);
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto& st = res.per_label[records[i].label];
        if (in_val[i]) {
            res.val.push_back(i);
            ++st.val_records;
        } else {
            res.train.push_back(i);
            ++st.train_records;
        }
    }
    res.train = sorted(std::move(res.train));
    res.val = sorted(std::move(res.val));
    return res;
}

std::string split_report(const SplitResult& result) {
    std::ostringstream ss;
    ss << "train_records\t" << result.train.size() << "\n";
    ss << "val_records\t" << result.val.size() << "\n";
    ss << "label\tsections\tval_sections\ttrain\tval\tval_same_section\tval_cross_section\n";
    for (const auto& [label, st] : result.per_label)
        ss << label << "\t" << st.sections << "\t" << st.val_sections << "\t" << st.train_records << "\t"
           << st.val_records << "\t" << st.val_same_section << "\t" << st.val_cross_section << "\n";
    ss << "uncovered_labels\t" << result.uncovered_labels.size() << "\n";
    for (const auto& l : result.uncovered_labels) ss << "uncovered\t" << l << "\n";
    return ss.str();
}

} // namespace cytoclip::split
