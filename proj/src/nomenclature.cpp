#include "nomenclature.hpp"

#include "error.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include <json.hpp>

namespace cytoclip::nomenclature {

NomenclatureTree NomenclatureTree::from_records(std::vector<RegionNode> records) {
    NomenclatureTree tree;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto& r = records[i];
        if (r.id.empty()) fail(ErrorKind::Parse, "region record " + std::to_string(i) + " has an empty id");
        if (!tree.index_.emplace(r.id, i).second) fail(ErrorKind::Parse, "duplicate region id: " + r.id);
        r.children.clear();
    }
    for (auto& r : records) {
        if (!r.parent) continue;
        auto it = tree.index_.find(*r.parent);
        if (it == tree.index_.end())
            fail(ErrorKind::Parse, "dangling parent reference: " + r.id + " -> " + *r.parent);
        records[it->second].children.push_back(r.id);
    }
    tree.nodes_ = std::move(records);

    // Depth by walking parents; a walk longer than the node count is a cycle.
    for (const auto& n : tree.nodes_) {
        std::size_t d = 0;
        const RegionNode* cur = &n;
        while (cur->parent) {
            if (++d > tree.nodes_.size()) fail(ErrorKind::Parse, "cycle detected at region id: " + n.id);
            cur = &tree.nodes_[tree.index_.at(*cur->parent)];
            if (auto known = tree.depth_.find(cur->id); known != tree.depth_.end()) {
                d += known->second;
                break;
            }
        }
        tree.depth_[n.id] = d;
        if (!n.parent) tree.roots_.push_back(n.id);
    }
    return tree;
}

const RegionNode& NomenclatureTree::node(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) fail(ErrorKind::InvalidArgument, "unknown region id: " + id);
    return nodes_[it->second];
}

std::size_t NomenclatureTree::depth(const std::string& id) const {
    auto it = depth_.find(id);
    if (it == depth_.end()) fail(ErrorKind::InvalidArgument, "unknown region id: " + id);
    return it->second;
}

std::size_t NomenclatureTree::max_depth() const {
    std::size_t m = 0;
    for (const auto& [id, d] : depth_) m = std::max(m, d);
    return m;
}

std::vector<std::string> NomenclatureTree::leaves() const {
    std::vector<std::string> out;
    for (const auto& n : nodes_)
        if (n.children.empty()) out.push_back(n.id);
    return out;
}

std::vector<std::string> NomenclatureTree::ancestry(const std::string& id) const {
    std::vector<std::string> chain{node(id).id};
    while (const auto& parent = node(chain.back()).parent) chain.push_back(*parent);
    return chain;
}

std::optional<std::string> NomenclatureTree::find_by_name(const std::string& name) const {
    for (const auto& n : nodes_)
        if (n.name == name) return n.id;
    return std::nullopt;
}

void MergePolicy::validate(const NomenclatureTree& tree) const {
    auto require = [&](const std::string& id, const char* what) {
        if (!tree.contains(id)) fail(ErrorKind::Parse, std::string("policy ") + what + " refers to unknown id: " + id);
    };
    std::set<std::string> excluded;
    for (const auto& id : excluded_roots) {
        require(id, "excluded_roots");
        excluded.insert(id);
    }
    for (const auto& a : merge_anchors) {
        require(a.id, "anchor");
        if (excluded.contains(a.id)) fail(ErrorKind::Parse, "policy id is both excluded and an anchor: " + a.id);
    }
    for (const auto& id : exceptions) require(id, "exception");
}

NomenclatureTree parse_nomenclature(const nlohmann::json& doc) {
    if (!doc.is_array() && !(doc.is_object() && doc.contains("regions")))
        fail(ErrorKind::Parse, "taxonomy: expected {\"regions\": [...]} or an array of region records");
    const nlohmann::json& list = doc.is_array() ? doc : doc.at("regions");
    if (!list.is_array()) fail(ErrorKind::Parse, "taxonomy: expected an array of region records");
    std::vector<RegionNode> records;
    records.reserve(list.size());
    for (const auto& item : list) {
        try {
            RegionNode r;
            r.id = item.at("id").get<std::string>();
            r.name = item.contains("name") ? item.at("name").get<std::string>() : r.id;
            if (item.contains("parent") && !item.at("parent").is_null()) r.parent = item.at("parent").get<std::string>();
            records.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Parse, std::string("taxonomy record malformed: ") + e.what());
        }
    }
    return NomenclatureTree::from_records(std::move(records));
}

NomenclatureTree load_nomenclature(const std::filesystem::path& path) { return parse_nomenclature(read_json_file(path)); }

MergePolicy parse_policy(const nlohmann::json& doc) {
    MergePolicy p;
    if (!doc.is_object()) fail(ErrorKind::Parse, "policy must be a JSON object");
    for (const auto& [key, value] : doc.items())
        if (key != "excluded_roots" && key != "exceptions" && key != "anchors")
            fail(ErrorKind::Parse, "policy has unknown key " + key);
    try {
        if (doc.contains("excluded_roots")) p.excluded_roots = doc.at("excluded_roots").get<std::vector<std::string>>();
        if (doc.contains("exceptions")) p.exceptions = doc.at("exceptions").get<std::vector<std::string>>();
        if (doc.contains("anchors")) {
            for (const auto& a : doc.at("anchors")) {
                const auto depth = a.at("keep_depth").get<long long>();
                if (depth < 0) fail(ErrorKind::Parse, "policy anchor keep_depth must be >= 0");
                p.merge_anchors.push_back({a.at("id").get<std::string>(), static_cast<std::size_t>(depth)});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, std::string("policy malformed: ") + e.what());
    }
    return p;
}

MergePolicy load_policy(const std::filesystem::path& path) { return parse_policy(read_json_file(path)); }

std::optional<std::string> resolve_label(const NomenclatureTree& tree, const MergePolicy& policy,
                                         const std::string& region_id) {
    const std::vector<std::string> chain = tree.ancestry(region_id);  // self first

    for (const auto& id : chain)
        if (std::find(policy.excluded_roots.begin(), policy.excluded_roots.end(), id) != policy.excluded_roots.end())
            return std::nullopt;

    auto is_exception = [&](const std::string& id) {
        return std::find(policy.exceptions.begin(), policy.exceptions.end(), id) != policy.exceptions.end();
    };
    auto anchor_depth = [&](const std::string& id) -> std::optional<std::size_t> {
        for (const auto& a : policy.merge_anchors)
            if (a.id == id) return a.keep_depth;
        return std::nullopt;
    };

    // chain[k] is k levels above the region; the first anchor met walking up
    // is the deepest. An exception at or below chain[k] blocks that anchor.
    bool blocked = false;
    for (std::size_t k = 0; k < chain.size(); ++k) {
        if (auto keep = anchor_depth(chain[k]); keep && !blocked) {
            if (k > *keep) return tree.node(chain[k - *keep]).name;
            return tree.node(region_id).name;
        }
        if (is_exception(chain[k])) blocked = true;
    }
    return tree.node(region_id).name;
}

std::vector<std::string> distinct_leaf_labels(const NomenclatureTree& tree, const MergePolicy& policy) {
    std::set<std::string> labels;
    for (const auto& id : tree.leaves())
        if (auto l = resolve_label(tree, policy, id)) labels.insert(*l);
    return {labels.begin(), labels.end()};
}

} // namespace cytoclip::nomenclature
