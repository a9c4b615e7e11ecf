#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include "wsikit/core.hpp"

namespace wsikit {

// ---------------------------------------------------------------------------
// Axis-aligned bounding rectangle in level-0 pixel coordinates.
// ---------------------------------------------------------------------------

struct Rect {
  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;

  bool operator==(const Rect&) const = default;

  double area() const { return (max_x - min_x) * (max_y - min_y); }

  bool intersects(const Rect& o) const {
    return min_x < o.max_x && o.min_x < max_x && min_y < o.max_y &&
           o.min_y < max_y;
  }

  bool contains(double x, double y) const {
    return x >= min_x && x < max_x && y >= min_y && y < max_y;
  }

  Rect united(const Rect& o) const {
    return Rect{std::min(min_x, o.min_x), std::min(min_y, o.min_y),
                std::max(max_x, o.max_x), std::max(max_y, o.max_y)};
  }

  // Area growth needed to absorb `o`; the classic insertion heuristic.
  double enlargement(const Rect& o) const { return united(o).area() - area(); }
};

// ---------------------------------------------------------------------------
// R-tree over rectangles with integer payloads (indices into an external
// region list). Insertion follows Guttman: descend by least enlargement,
// split overfull nodes with the quadratic seed heuristic. Queries return a
// superset of the exact matches; callers re-test geometry themselves.
// ---------------------------------------------------------------------------

class RTree {
 public:
  static constexpr std::size_t kMaxEntries = 8;
  static constexpr std::size_t kMinEntries = kMaxEntries / 2;

  void insert(const Rect& box, std::size_t payload) {
    if (nodes_.empty()) {
      root_ = make_node(true);
      nodes_[root_].entries.push_back(Entry{box, kNoChild, payload});
      ++size_;
      return;
    }
    std::size_t overflow = insert_into(root_, box, payload);
    if (overflow != kNoChild) {
      // Root split: grow the tree by one level.
      std::size_t old_root = root_;
      root_ = make_node(false);
      nodes_[root_].entries.push_back(
          Entry{bounds_of(old_root), old_root, 0});
      nodes_[root_].entries.push_back(
          Entry{bounds_of(overflow), overflow, 0});
    }
  }

  // Payloads of every stored rectangle whose box intersects `query`.
  std::vector<std::size_t> search(const Rect& query) const {
    std::vector<std::size_t> hits;
    if (!nodes_.empty()) collect(root_, query, hits);
    return hits;
  }

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

  // Deepest level count; 1 for a lone leaf. Exposed for structural tests.
  int height() const {
    if (nodes_.empty()) return 0;
    int h = 1;
    std::size_t n = root_;
    while (!nodes_[n].leaf) {
      n = nodes_[n].entries.front().child;
      ++h;
    }
    return h;
  }

 private:
  static constexpr std::size_t kNoChild =
      std::numeric_limits<std::size_t>::max();

  struct Entry {
    Rect box;
    std::size_t child = kNoChild;  // kNoChild in leaves
    std::size_t payload = 0;       // meaningful in leaves only
  };

  struct Node {
    bool leaf = true;
    std::vector<Entry> entries;
  };

  std::vector<Node> nodes_;
  std::size_t root_ = kNoChild;
  std::size_t size_ = 0;

  std::size_t make_node(bool leaf) {
    nodes_.push_back(Node{leaf, {}});
    nodes_.back().entries.reserve(kMaxEntries + 1);
    return nodes_.size() - 1;
  }

  Rect bounds_of(std::size_t node) const {
    const auto& entries = nodes_[node].entries;
    Rect b = entries.front().box;
    for (std::size_t i = 1; i < entries.size(); ++i)
      b = b.united(entries[i].box);
    return b;
  }

  // Inserts below `node`; returns the index of a freshly split-off sibling
  // when the node overflowed, else kNoChild.
  std::size_t insert_into(std::size_t node, const Rect& box,
                          std::size_t payload) {
    Node& n = nodes_[node];
    if (n.leaf) {
      n.entries.push_back(Entry{box, kNoChild, payload});
      ++size_;
    } else {
      std::size_t slot = choose_subtree(node, box);
      std::size_t child = n.entries[slot].child;
      std::size_t overflow = insert_into(child, box, payload);
      // Vector may have reallocated during recursion; re-fetch.
      Node& parent = nodes_[node];
      parent.entries[slot].box = bounds_of(child);
      if (overflow != kNoChild)
        parent.entries.push_back(Entry{bounds_of(overflow), overflow, 0});
    }
    if (nodes_[node].entries.size() > kMaxEntries) return split(node);
    return kNoChild;
  }

  std::size_t choose_subtree(std::size_t node, const Rect& box) const {
    const auto& entries = nodes_[node].entries;
    std::size_t best = 0;
    double best_growth = std::numeric_limits<double>::infinity();
    double best_area = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      double growth = entries[i].box.enlargement(box);
      double area = entries[i].box.area();
      if (growth < best_growth ||
          (growth == best_growth && area < best_area)) {
        best = i;
        best_growth = growth;
        best_area = area;
      }
    }
    return best;
  }

  // Quadratic split: seed with the pair wasting the most area together,
  // then assign each remaining entry to the group whose bounds grow least.
  std::size_t split(std::size_t node) {
    std::vector<Entry> pool = std::move(nodes_[node].entries);
    bool leaf = nodes_[node].leaf;

    std::size_t seed_a = 0, seed_b = 1;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < pool.size(); ++i)
      for (std::size_t j = i + 1; j < pool.size(); ++j) {
        double waste = pool[i].box.united(pool[j].box).area() -
                       pool[i].box.area() - pool[j].box.area();
        if (waste > worst) {
          worst = waste;
          seed_a = i;
          seed_b = j;
        }
      }

    std::size_t sibling = make_node(leaf);
    Node& a = nodes_[node];
    Node& b = nodes_[sibling];
    a.entries.clear();
    a.entries.push_back(pool[seed_a]);
    b.entries.push_back(pool[seed_b]);
    Rect box_a = pool[seed_a].box;
    Rect box_b = pool[seed_b].box;

    std::vector<Entry> rest;
    rest.reserve(pool.size() - 2);
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (i != seed_a && i != seed_b) rest.push_back(pool[i]);

    for (std::size_t assigned = 0; assigned < rest.size(); ++assigned) {
      std::size_t remaining = rest.size() - assigned;
      // Honor the minimum fill: hand the stragglers to a starved group.
      if (a.entries.size() + remaining == kMinEntries) {
        for (std::size_t i = assigned; i < rest.size(); ++i) {
          a.entries.push_back(rest[i]);
          box_a = box_a.united(rest[i].box);
        }
        break;
      }
      if (b.entries.size() + remaining == kMinEntries) {
        for (std::size_t i = assigned; i < rest.size(); ++i) {
          b.entries.push_back(rest[i]);
          box_b = box_b.united(rest[i].box);
        }
        break;
      }
      // Pick the entry with the strongest group preference next.
      std::size_t pick = assigned;
      double best_diff = -1.0;
      for (std::size_t i = assigned; i < rest.size(); ++i) {
        double da = box_a.enlargement(rest[i].box);
        double db = box_b.enlargement(rest[i].box);
        double diff = std::abs(da - db);
        if (diff > best_diff) {
          best_diff = diff;
          pick = i;
        }
      }
      std::swap(rest[assigned], rest[pick]);
      const Entry& e = rest[assigned];
      double da = box_a.enlargement(e.box);
      double db = box_b.enlargement(e.box);
      bool to_a;
      if (da != db)
        to_a = da < db;
      else if (box_a.area() != box_b.area())
        to_a = box_a.area() < box_b.area();
      else
        to_a = a.entries.size() <= b.entries.size();
      if (to_a) {
        a.entries.push_back(e);
        box_a = box_a.united(e.box);
      } else {
        b.entries.push_back(e);
        box_b = box_b.united(e.box);
      }
    }
    return sibling;
  }

  void collect(std::size_t node, const Rect& query,
               std::vector<std::size_t>& hits) const {
    const Node& n = nodes_[node];
    for (const Entry& e : n.entries) {
      if (!e.box.intersects(query)) continue;
      if (n.leaf)
        hits.push_back(e.payload);
      else
        collect(e.child, query, hits);
    }
  }
};

}  // namespace wsikit
