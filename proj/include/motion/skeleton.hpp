#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace motion {

// Joint hierarchy. parent[j] == -1 marks the root.
class SkeletonTree {
public:
    SkeletonTree() = default;
    // Throws ConfigError unless the links form a single rooted tree.
    explicit SkeletonTree(std::vector<int> parent, std::vector<std::string> names = {});

    std::size_t joints() const noexcept { return parent_.size(); }
    int parent(std::size_t j) const { return parent_.at(j); }
    const std::vector<int>& parents() const noexcept { return parent_; }
    const std::vector<std::string>& names() const noexcept { return names_; }
    std::size_t root() const noexcept { return root_; }

    // Parents before children; ties broken by joint index.
    const std::vector<std::size_t>& topological_order() const noexcept { return order_; }
    bool is_ancestor(std::size_t ancestor, std::size_t j) const;
    std::vector<std::size_t> ancestors(std::size_t j) const;

    bool operator==(const SkeletonTree& o) const { return parent_ == o.parent_; }

private:
    std::vector<int> parent_;
    std::vector<std::string> names_;
    std::vector<std::size_t> order_;
    std::size_t root_ = 0;
};

// 20-joint depth-camera skeleton rooted at the hip center.
SkeletonTree default_skeleton();

// `joint_index,parent_index,name` per line; blank lines and '#' comments skipped.
SkeletonTree load_skeleton(const std::filesystem::path& path);
void save_skeleton(const std::filesystem::path& path, const SkeletonTree& tree);

std::string format_parents(const SkeletonTree& tree);
SkeletonTree parse_parents(const std::string& text);

}  // namespace motion
