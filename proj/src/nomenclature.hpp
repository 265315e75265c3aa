#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace cytoclip::nomenclature {

struct RegionNode {
    std::string id;
    std::string name;
    std::optional<std::string> parent;
    std::vector<std::string> children;
};

// Hierarchical region taxonomy (a forest). Immutable once built.
class NomenclatureTree {
public:
    // Builds the forest from flat {id, name, parent?} records. Throws
    // Error(Parse) naming the offending id on duplicate ids, dangling parents
    // and cycles.
    static NomenclatureTree from_records(std::vector<RegionNode> records);

    bool contains(const std::string& id) const { return index_.contains(id); }
    const RegionNode& node(const std::string& id) const;
    const std::vector<RegionNode>& nodes() const noexcept { return nodes_; }
    const std::vector<std::string>& roots() const noexcept { return roots_; }

    // Root depth is 0.
    std::size_t depth(const std::string& id) const;
    std::size_t max_depth() const;
    std::vector<std::string> leaves() const;
    // id, parent, grandparent, ..., root
    std::vector<std::string> ancestry(const std::string& id) const;
    // Id of the first node with this display name, if any.
    std::optional<std::string> find_by_name(const std::string& name) const;

private:
    std::vector<RegionNode> nodes_;
    std::vector<std::string> roots_;
    std::unordered_map<std::string, std::size_t> index_;
    std::unordered_map<std::string, std::size_t> depth_;
};

struct MergeAnchor {
    std::string id;
    std::size_t keep_depth = 0;
};

struct MergePolicy {
    std::vector<std::string> excluded_roots;
    std::vector<MergeAnchor> merge_anchors;
    std::vector<std::string> exceptions;

    // Checks ids exist and excluded/anchor sets are disjoint.
    void validate(const NomenclatureTree& tree) const;
};

NomenclatureTree parse_nomenclature(const nlohmann::json& doc);
NomenclatureTree load_nomenclature(const std::filesystem::path& path);
MergePolicy parse_policy(const nlohmann::json& doc);
MergePolicy load_policy(const std::filesystem::path& path);

// Training label for a region: nullopt inside an excluded subtree; otherwise the
// name of the ancestor `keep_depth` levels below the deepest applicable anchor,
// or the region's own name.
std::optional<std::string> resolve_label(const NomenclatureTree& tree, const MergePolicy& policy,
                                         const std::string& region_id);

// Distinct labels obtained by resolving every leaf.
std::vector<std::string> distinct_leaf_labels(const NomenclatureTree& tree, const MergePolicy& policy);

} // namespace cytoclip::nomenclature
