#include "motion/skeleton.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>

#include "motion/errors.hpp"

namespace motion {

SkeletonTree::SkeletonTree(std::vector<int> parent, std::vector<std::string> names)
    : parent_(std::move(parent)), names_(std::move(names)) {
    const std::size_t n = parent_.size();
    if (n == 0) throw ConfigError("skeleton has no joints");
    if (!names_.empty() && names_.size() != n) throw ConfigError("skeleton names do not match joint count");

    std::size_t roots = 0;
    std::vector<std::vector<std::size_t>> children(n);
    for (std::size_t j = 0; j < n; ++j) {
        const int p = parent_[j];
        if (p == -1) {
            ++roots;
            root_ = j;
            continue;
        }
        if (p < 0 || static_cast<std::size_t>(p) >= n || static_cast<std::size_t>(p) == j) {
            throw ConfigError("joint " + std::to_string(j) + " has invalid parent " + std::to_string(p));
        }
        children[static_cast<std::size_t>(p)].push_back(j);
    }
    if (roots != 1) throw ConfigError("skeleton must have exactly one root, found " + std::to_string(roots));

    // Breadth-first from the root; anything unreached sits on a cycle.
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> frontier;
    frontier.push(root_);
    while (!frontier.empty()) {
        const std::size_t j = frontier.top();
        frontier.pop();
        order_.push_back(j);
        for (std::size_t c : children[j]) frontier.push(c);
    }
    if (order_.size() != n) throw ConfigError("skeleton parent links contain a cycle");
}

bool SkeletonTree::is_ancestor(std::size_t ancestor, std::size_t j) const {
    int p = parent_.at(j);
    while (p != -1) {
        if (static_cast<std::size_t>(p) == ancestor) return true;
        p = parent_[static_cast<std::size_t>(p)];
    }
    return false;
}

std::vector<std::size_t> SkeletonTree::ancestors(std::size_t j) const {
    std::vector<std::size_t> out;
    for (int p = parent_.at(j); p != -1; p = parent_[static_cast<std::size_t>(p)]) {
        out.push_back(static_cast<std::size_t>(p));
    }
    return out;
}

SkeletonTree default_skeleton() {
    return SkeletonTree({-1, 0, 1, 2, 2, 4, 5, 6, 2, 8, 9, 10, 0, 12, 13, 14, 0, 16, 17, 18},
                        {"hip_center",    "spine",        "shoulder_center", "head",        "shoulder_left",
                         "elbow_left",    "wrist_left",   "hand_left",       "shoulder_right", "elbow_right",
                         "wrist_right",   "hand_right",   "hip_left",        "knee_left",   "ankle_left",
                         "foot_left",     "hip_right",    "knee_right",      "ankle_right", "foot_right"});
}

SkeletonTree load_skeleton(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open skeleton file " + path.string(), 0);
    std::vector<std::pair<int, std::pair<int, std::string>>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string a, b, name;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',')) {
            throw ParseError("expected joint_index,parent_index,name", lineno);
        }
        std::getline(ss, name);
        try {
            rows.push_back({std::stoi(a), {std::stoi(b), name}});
        } catch (const std::exception&) {
            throw ParseError("non-integer joint or parent index", lineno);
        }
    }
    std::sort(rows.begin(), rows.end());
    std::vector<int> parent;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].first != static_cast<int>(i)) throw ParseError("joint indices must be 0..J-1 without gaps", 0);
        parent.push_back(rows[i].second.first);
        names.push_back(rows[i].second.second);
    }
    return SkeletonTree(std::move(parent), std::move(names));
}

void save_skeleton(const std::filesystem::path& path, const SkeletonTree& tree) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "# joint_index,parent_index,name\n";
    for (std::size_t j = 0; j < tree.joints(); ++j) {
        out << j << ',' << tree.parent(j) << ',' << (tree.names().empty() ? "" : tree.names()[j]) << '\n';
    }
}

std::string format_parents(const SkeletonTree& tree) {
    std::string s;
    for (std::size_t j = 0; j < tree.joints(); ++j) {
        if (j > 0) s += ' ';
        s += std::to_string(tree.parent(j));
    }
    return s;
}

SkeletonTree parse_parents(const std::string& text) {
    std::istringstream ss(text);
    std::vector<int> parent;
    int p = 0;
    while (ss >> p) parent.push_back(p);
    if (!ss.eof()) throw ConfigError("malformed parent list '" + text + "'");
    return SkeletonTree(std::move(parent));
}

}  // namespace motion
