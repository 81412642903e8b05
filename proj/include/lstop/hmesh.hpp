#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace lstop {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};
class ConfigError : public Error {
public:
  using Error::Error;
};
class InvariantError : public Error {
public:
  using Error::Error;
};
class NumericalError : public Error {
public:
  using Error::Error;
};

struct Rect {
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
};

/// Dyadic cell address: grid position (i, j) on the level-l subdivision of
/// the background grid. Children of (l,i,j) are (l+1, 2i+a, 2j+b).
struct ElemKey {
  std::int32_t level = 0, i = 0, j = 0;
  friend bool operator==(const ElemKey&, const ElemKey&) = default;
  friend bool operator<(const ElemKey& a, const ElemKey& b) {
    if (a.level != b.level) return a.level < b.level;
    if (a.j != b.j) return a.j < b.j;
    return a.i < b.i;
  }
  ElemKey parent() const { return {level - 1, i >> 1, j >> 1}; }
  ElemKey child(int a, int b) const { return {level + 1, 2 * i + a, 2 * j + b}; }
};

struct ElemKeyHash {
  std::size_t operator()(const ElemKey& k) const {
    std::uint64_t h = (std::uint64_t(std::uint32_t(k.level)) << 58) ^
                      (std::uint64_t(std::uint32_t(k.i)) << 29) ^ std::uint64_t(std::uint32_t(k.j));
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return std::size_t(h);
  }
};

/// Mesh vertex identified by integer coordinates normalized to a fixed
/// reference level, so the same geometric point always maps to one key.
struct NodeKey {
  std::int64_t x = 0, y = 0;
  friend bool operator==(const NodeKey&, const NodeKey&) = default;
};
struct NodeKeyHash {
  std::size_t operator()(const NodeKey& k) const {
    std::uint64_t h = std::uint64_t(k.x) * 0x9e3779b97f4a7c15ULL ^ std::uint64_t(k.y);
    h ^= h >> 31;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 29;
    return std::size_t(h);
  }
};

enum class RefineFlag { None, Keep, Refine };
using RefineFlags = std::unordered_map<ElemKey, RefineFlag, ElemKeyHash>;

enum class PhaseClass { Solid, Void, Cut };

/// Classification from the four snapped corner level set values: mixed sign
/// means intersected; values are never exactly zero after snapping.
inline PhaseClass classify_corners(const std::array<double, 4>& phi) {
  bool neg = false, pos = false;
  for (double v : phi) (v < 0 ? neg : pos) = true;
  if (neg && pos) return PhaseClass::Cut;
  return neg ? PhaseClass::Solid : PhaseClass::Void;
}

/// Quadtree of elements over a rectangular background grid. Active elements
/// are leaves and tile the domain exactly; level-l cells have edge h(0)/2^l.
class HierarchicalMesh {
public:
  static constexpr int kMaxLevel = 22;

  HierarchicalMesh() = default;
  HierarchicalMesh(int nx, int ny, Rect domain);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  const Rect& domain() const { return domain_; }
  double hx(int level) const { return hx0_ / double(1 << level); }
  double hy(int level) const { return hy0_ / double(1 << level); }
  /// Representative edge length at a level (meshes are square-celled in all
  /// production configurations; the max covers anisotropic backgrounds).
  double edge(int level) const { return std::max(hx(level), hy(level)); }

  Rect cell_bbox(const ElemKey& k) const;
  bool in_grid(const ElemKey& k) const {
    return k.i >= 0 && k.j >= 0 && k.i < (nx_ << k.level) && k.j < (ny_ << k.level);
  }

  bool exists(const ElemKey& k) const { return cells_.count(k) > 0; }
  bool is_active(const ElemKey& k) const {
    auto it = cells_.find(k);
    return it != cells_.end() && it->second.active;
  }
  bool is_subdivided(const ElemKey& k) const {
    auto it = cells_.find(k);
    return it != cells_.end() && it->second.subdivided;
  }

  /// The active element whose area contains cell k (k itself or an
  /// ancestor); empty if the region is refined beyond level k.level.
  std::optional<ElemKey> active_covering(ElemKey k) const;

  enum class Cover { Outside, ByCoarser, Active, Finer };
  Cover cover(const ElemKey& k) const;

  /// All active elements in deterministic (level, j, i) order.
  std::vector<ElemKey> active_elements() const;
  std::size_t active_count() const { return n_active_; }
  int max_active_level() const;

  /// Active elements overlapping a window (closed box, touching counts).
  std::vector<ElemKey> query_active(const Rect& window) const;

  /// Edge-adjacent active neighbors of an active element.
  std::vector<ElemKey> active_edge_neighbors(const ElemKey& k) const;

  void refine(const ElemKey& k);
  void coarsen_children(const ElemKey& parent);
  void refine_all();

  /// Enforce the 2:1 rule by refining coarse offenders.
  int balance();

  /// Node keys of the four corners, order (x0,y0),(x1,y0),(x1,y1),(x0,y1).
  std::array<NodeKey, 4> corner_nodes(const ElemKey& k) const;
  NodeKey node_at(int level, std::int64_t i, std::int64_t j) const;
  std::pair<double, double> node_coords(const NodeKey& n) const;

  bool check_tiling(double rel_tol = 1e-12) const;
  bool check_two_one_balance(std::string* offender = nullptr) const;

private:
  struct Cell {
    bool active = false;
    bool subdivided = false;
  };
  void query_active_rec(const ElemKey& k, const Rect& w, std::vector<ElemKey>& out) const;

  int nx_ = 0, ny_ = 0;
  Rect domain_;
  double hx0_ = 0, hy0_ = 0;
  std::unordered_map<ElemKey, Cell, ElemKeyHash> cells_;
  std::size_t n_active_ = 0;
};

/// Per-node scalar samples on the active mesh corners.
struct NodalField {
  std::unordered_map<NodeKey, double, NodeKeyHash> values;

  double at(const NodeKey& n) const {
    auto it = values.find(n);
    if (it == values.end()) throw InvariantError("NodalField: missing nodal value");
    return it->second;
  }
  std::array<double, 4> corners(const HierarchicalMesh& mesh, const ElemKey& k) const {
    const auto nodes = mesh.corner_nodes(k);
    return {at(nodes[0]), at(nodes[1]), at(nodes[2]), at(nodes[3])};
  }
};

/// Current and limiting refinement levels of the adaptation schedule.
struct LevelSchedule {
  int l_ifc = 0, l_solid = 0, l_void = 0;
  int l_ifc_max = 0, l_solid_max = 0, l_min = 0;

  static LevelSchedule start_at(int l0, int l_ifc_max, int l_solid_max, int l_min) {
    if (l_min > l0 || l0 > std::min(l_solid_max, l_ifc_max))
      throw ConfigError("LevelSchedule: need l_min <= l0 <= min(l_solid_max, l_ifc_max)");
    if (l_solid_max > l_ifc_max)
      throw ConfigError("LevelSchedule: l_solid_max must not exceed l_ifc_max");
    return {l0, l0, l0, l_ifc_max, l_solid_max, l_min};
  }
  void bump() {
    l_ifc = std::min(l_ifc + 1, l_ifc_max);
    l_solid = std::min(l_solid + 1, l_solid_max);
    l_void = std::max(l_void - 1, l_min);
  }
};

/// Band/solid/void flagging from nodal level set values.
RefineFlags flag_by_levelset(const HierarchicalMesh& mesh, const NodalField& phi,
                             const LevelSchedule& levels, double phi_bw);

/// Buffer closure around refine-flagged elements: strictly coarser active
/// neighbors within b_buffer element widths are flagged for refinement and
/// cascade; same-level neighbors in range are flagged Keep. Idempotent.
void apply_buffer(const HierarchicalMesh& mesh, RefineFlags& flags, double b_buffer);

struct RefineEvent {
  int n_refined = 0;
  int n_coarsened = 0;
  int n_balance = 0;
  bool changed() const { return n_refined + n_coarsened + n_balance > 0; }
};

/// One scheduled adaptation step: flag, buffer, subdivide, enforce l_min,
/// coarsen fully-void regions above l_void, re-balance, then advance the
/// level schedule.
RefineEvent refinement_step(HierarchicalMesh& mesh, const NodalField& phi, LevelSchedule& levels,
                            double phi_bw, double b_buffer);

/// Refine until every intersected element sits at levels.l_ifc, keeping the
/// schedule untouched and never coarsening. phi_eval must return the level
/// set value at a physical point (valid across nested refinements).
RefineEvent maintain_intersected_uniformity(HierarchicalMesh& mesh,
                                            const std::function<double(double, double)>& phi_eval,
                                            const LevelSchedule& levels, double phi_bw,
                                            double b_buffer);

/// Sample an analytic field at all active corner nodes.
NodalField sample_nodal(const HierarchicalMesh& mesh,
                        const std::function<double(double, double)>& f);

bool intersected_levels_uniform(const HierarchicalMesh& mesh, const NodalField& phi,
                                int* level_out = nullptr);

}  // namespace lstop
