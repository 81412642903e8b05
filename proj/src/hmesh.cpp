#include "lstop/hmesh.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace lstop {

HierarchicalMesh::HierarchicalMesh(int nx, int ny, Rect domain)
    : nx_(nx), ny_(ny), domain_(domain) {
  if (nx < 1 || ny < 1) throw ConfigError("create_background_mesh: dims must be >= 1");
  if (domain.width() <= 0 || domain.height() <= 0)
    throw ConfigError("create_background_mesh: domain extents must be positive");
  hx0_ = domain.width() / nx;
  hy0_ = domain.height() / ny;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) cells_[{0, i, j}] = {true, false};
  n_active_ = std::size_t(nx) * std::size_t(ny);
}

Rect HierarchicalMesh::cell_bbox(const ElemKey& k) const {
  const double hx = this->hx(k.level), hy = this->hy(k.level);
  return {domain_.x0 + k.i * hx, domain_.y0 + k.j * hy, domain_.x0 + (k.i + 1) * hx,
          domain_.y0 + (k.j + 1) * hy};
}

std::optional<ElemKey> HierarchicalMesh::active_covering(ElemKey k) const {
  while (k.level >= 0) {
    auto it = cells_.find(k);
    if (it != cells_.end()) {
      if (it->second.active) return k;
      if (it->second.subdivided && k.level < kMaxLevel) return std::nullopt;  // refined beyond
    }
    if (k.level == 0) break;
    k = k.parent();
  }
  return std::nullopt;
}

HierarchicalMesh::Cover HierarchicalMesh::cover(const ElemKey& k) const {
  if (!in_grid(k)) return Cover::Outside;
  ElemKey a = k;
  while (a.level >= 0) {
    auto it = cells_.find(a);
    if (it != cells_.end() && it->second.active)
      return a.level == k.level ? Cover::Active : Cover::ByCoarser;
    if (a.level == 0) break;
    a = a.parent();
  }
  return Cover::Finer;
}

std::vector<ElemKey> HierarchicalMesh::active_elements() const {
  std::vector<ElemKey> out;
  out.reserve(n_active_);
  for (const auto& [k, c] : cells_)
    if (c.active) out.push_back(k);
  std::sort(out.begin(), out.end());
  return out;
}

int HierarchicalMesh::max_active_level() const {
  int m = 0;
  for (const auto& [k, c] : cells_)
    if (c.active) m = std::max(m, int(k.level));
  return m;
}

void HierarchicalMesh::query_active_rec(const ElemKey& k, const Rect& w,
                                        std::vector<ElemKey>& out) const {
  const Rect b = cell_bbox(k);
  if (b.x1 < w.x0 || b.x0 > w.x1 || b.y1 < w.y0 || b.y0 > w.y1) return;
  auto it = cells_.find(k);
  if (it == cells_.end()) return;
  if (it->second.active) {
    out.push_back(k);
    return;
  }
  if (!it->second.subdivided) return;
  for (int b2 = 0; b2 < 2; ++b2)
    for (int a = 0; a < 2; ++a) query_active_rec(k.child(a, b2), w, out);
}

std::vector<ElemKey> HierarchicalMesh::query_active(const Rect& w) const {
  std::vector<ElemKey> out;
  const int i0 = std::max(0, int(std::floor((w.x0 - domain_.x0) / hx0_)));
  const int i1 = std::min(nx_ - 1, int(std::floor((w.x1 - domain_.x0) / hx0_)));
  const int j0 = std::max(0, int(std::floor((w.y0 - domain_.y0) / hy0_)));
  const int j1 = std::min(ny_ - 1, int(std::floor((w.y1 - domain_.y0) / hy0_)));
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) query_active_rec({0, i, j}, w, out);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<ElemKey> HierarchicalMesh::active_edge_neighbors(const ElemKey& k) const {
  std::vector<ElemKey> out;
  const Rect b = cell_bbox(k);
  const double eps = 0.25 * std::min(hx(k.level), hy(k.level));
  const std::array<Rect, 4> windows = {{
      {b.x0 - eps, b.y0 + eps, b.x0 - eps, b.y1 - eps},  // west
      {b.x1 + eps, b.y0 + eps, b.x1 + eps, b.y1 - eps},  // east
      {b.x0 + eps, b.y0 - eps, b.x1 - eps, b.y0 - eps},  // south
      {b.x0 + eps, b.y1 + eps, b.x1 - eps, b.y1 + eps},  // north
  }};
  for (const Rect& w : windows) {
    auto part = query_active(w);
    out.insert(out.end(), part.begin(), part.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void HierarchicalMesh::refine(const ElemKey& k) {
  auto it = cells_.find(k);
  if (it == cells_.end() || !it->second.active)
    throw InvariantError("refine: element is not an active leaf");
  if (k.level + 1 > kMaxLevel) throw InvariantError("refine: maximum tree depth exceeded");
  it->second.active = false;
  it->second.subdivided = true;
  for (int b = 0; b < 2; ++b)
    for (int a = 0; a < 2; ++a) {
      Cell& c = cells_[k.child(a, b)];
      c.active = true;
    }
  n_active_ += 3;
}

void HierarchicalMesh::coarsen_children(const ElemKey& parent) {
  auto it = cells_.find(parent);
  if (it == cells_.end() || !it->second.subdivided)
    throw InvariantError("coarsen_children: parent is not subdivided");
  for (int b = 0; b < 2; ++b)
    for (int a = 0; a < 2; ++a) {
      auto ct = cells_.find(parent.child(a, b));
      if (ct == cells_.end() || !ct->second.active)
        throw InvariantError("coarsen_children: children are not all active leaves");
    }
  for (int b = 0; b < 2; ++b)
    for (int a = 0; a < 2; ++a) cells_[parent.child(a, b)].active = false;
  it->second.active = true;
  n_active_ -= 3;
}

void HierarchicalMesh::refine_all() {
  for (const ElemKey& k : active_elements()) refine(k);
}

int HierarchicalMesh::balance() {
  int n = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const ElemKey& k : active_elements()) {
      const std::array<ElemKey, 4> nbrs = {{{k.level, k.i - 1, k.j},
                                            {k.level, k.i + 1, k.j},
                                            {k.level, k.i, k.j - 1},
                                            {k.level, k.i, k.j + 1}}};
      for (const ElemKey& nb : nbrs) {
        if (!in_grid(nb)) continue;
        if (cover(nb) != Cover::ByCoarser) continue;
        auto cov = active_covering(nb);
        if (cov && cov->level < k.level - 1) {
          refine(*cov);
          ++n;
          changed = true;
        }
      }
    }
  }
  return n;
}

NodeKey HierarchicalMesh::node_at(int level, std::int64_t i, std::int64_t j) const {
  const int shift = kMaxLevel - level;
  return {i << shift, j << shift};
}

std::array<NodeKey, 4> HierarchicalMesh::corner_nodes(const ElemKey& k) const {
  return {node_at(k.level, k.i, k.j), node_at(k.level, k.i + 1, k.j),
          node_at(k.level, k.i + 1, k.j + 1), node_at(k.level, k.i, k.j + 1)};
}

std::pair<double, double> HierarchicalMesh::node_coords(const NodeKey& n) const {
  const double s = 1.0 / double(std::int64_t(1) << kMaxLevel);
  return {domain_.x0 + hx0_ * (double(n.x) * s), domain_.y0 + hy0_ * (double(n.y) * s)};
}

bool HierarchicalMesh::check_tiling(double rel_tol) const {
  double sum = 0.0;
  for (const auto& [k, c] : cells_)
    if (c.active) sum += cell_bbox(k).area();
  // Overlap/gap detection: active covering of every finest-level probe cell
  // must be unique, which the tree structure guarantees; area closes the loop.
  return std::abs(sum - domain_.area()) <= rel_tol * domain_.area();
}

bool HierarchicalMesh::check_two_one_balance(std::string* offender) const {
  for (const auto& [k, c] : cells_) {
    if (!c.active) continue;
    const std::array<ElemKey, 4> nbrs = {{{k.level, k.i - 1, k.j},
                                          {k.level, k.i + 1, k.j},
                                          {k.level, k.i, k.j - 1},
                                          {k.level, k.i, k.j + 1}}};
    for (const ElemKey& nb : nbrs) {
      if (!in_grid(nb)) continue;
      auto cov = active_covering(nb);
      if (cov && cov->level < k.level - 1) {
        if (offender)
          *offender = "element (" + std::to_string(k.level) + "," + std::to_string(k.i) + "," +
                      std::to_string(k.j) + ") vs coarser neighbor level " +
                      std::to_string(cov->level);
        return false;
      }
    }
  }
  return true;
}

RefineFlags flag_by_levelset(const HierarchicalMesh& mesh, const NodalField& phi,
                             const LevelSchedule& levels, double phi_bw) {
  RefineFlags flags;
  for (const ElemKey& k : mesh.active_elements()) {
    const auto c = phi.corners(mesh, k);
    const double mn = std::min({c[0], c[1], c[2], c[3]});
    const double mx = std::max({c[0], c[1], c[2], c[3]});
    const bool banded = (mn < 0 && mx > 0) || std::min(std::abs(mn), std::abs(mx)) <= phi_bw;
    if (banded) {
      flags[k] = k.level < levels.l_ifc ? RefineFlag::Refine : RefineFlag::Keep;
    } else if (mx < -phi_bw) {  // solid
      flags[k] = k.level < levels.l_solid ? RefineFlag::Refine : RefineFlag::Keep;
    } else {  // void
      if (k.level <= levels.l_void) flags[k] = RefineFlag::Keep;
    }
  }
  return flags;
}

namespace {
double bbox_gap(const Rect& a, const Rect& b) {
  const double dx = std::max({0.0, b.x0 - a.x1, a.x0 - b.x1});
  const double dy = std::max({0.0, b.y0 - a.y1, a.y0 - b.y1});
  return std::hypot(dx, dy);
}
}  // namespace

void apply_buffer(const HierarchicalMesh& mesh, RefineFlags& flags, double b_buffer) {
  std::deque<ElemKey> sources;
  for (const ElemKey& k : mesh.active_elements()) {
    auto it = flags.find(k);
    if (it != flags.end() && it->second == RefineFlag::Refine) sources.push_back(k);
  }
  while (!sources.empty()) {
    const ElemKey e = sources.front();
    sources.pop_front();
    const Rect be = mesh.cell_bbox(e);
    const double d_buffer = b_buffer * mesh.edge(e.level);
    const Rect w = {be.x0 - d_buffer, be.y0 - d_buffer, be.x1 + d_buffer, be.y1 + d_buffer};
    for (const ElemKey& n : mesh.query_active(w)) {
      if (n == e || n.level > e.level) continue;
      auto it = flags.find(n);
      if (it != flags.end() && it->second != RefineFlag::None) continue;
      // strict inequality with a relative slack: gaps that are whole
      // multiples of the element width must not flip on rounding noise
      if (bbox_gap(be, mesh.cell_bbox(n)) >= d_buffer * (1.0 - 1e-9)) continue;
      if (n.level < e.level) {
        flags[n] = RefineFlag::Refine;
        sources.push_back(n);
      } else {
        flags[n] = RefineFlag::Keep;
      }
    }
  }
}

namespace {

int enforce_min_level(HierarchicalMesh& mesh, int l_min) {
  int n = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const ElemKey& k : mesh.active_elements())
      if (k.level < l_min) {
        mesh.refine(k);
        ++n;
        changed = true;
      }
  }
  return n;
}

/// Bottom-up replacement of fully-void sibling quads above l_void. The seed
/// set is collected on the pre-refinement mesh (flags protect the band,
/// solid and buffer zones).
int coarsen_void(HierarchicalMesh& mesh,
                 std::unordered_map<ElemKey, bool, ElemKeyHash> is_void, int l_void) {
  int n = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<ElemKey> parents;
    for (const auto& [k, v] : is_void) {
      (void)v;
      if (k.level > l_void && mesh.is_active(k)) parents.push_back(k.parent());
    }
    std::sort(parents.begin(), parents.end());
    parents.erase(std::unique(parents.begin(), parents.end()), parents.end());
    // Deepest parents first so stacked coarsening resolves in one sweep.
    std::sort(parents.begin(), parents.end(),
              [](const ElemKey& a, const ElemKey& b) { return b < a; });
    for (const ElemKey& p : parents) {
      bool ok = true;
      for (int b = 0; ok && b < 2; ++b)
        for (int a = 0; ok && a < 2; ++a) {
          const ElemKey ch = p.child(a, b);
          ok = mesh.is_active(ch) && is_void.count(ch) > 0 && ch.level > l_void;
        }
      if (!ok) continue;
      for (int b = 0; b < 2; ++b)
        for (int a = 0; a < 2; ++a) is_void.erase(p.child(a, b));
      mesh.coarsen_children(p);
      is_void[p] = true;
      ++n;
      changed = true;
    }
  }
  return n;
}

}  // namespace

RefineEvent refinement_step(HierarchicalMesh& mesh, const NodalField& phi, LevelSchedule& levels,
                            double phi_bw, double b_buffer) {
  RefineEvent ev;
  RefineFlags flags = flag_by_levelset(mesh, phi, levels, phi_bw);
  apply_buffer(mesh, flags, b_buffer);
  std::unordered_map<ElemKey, bool, ElemKeyHash> void_seed;
  for (const ElemKey& k : mesh.active_elements()) {
    auto it = flags.find(k);
    if (it != flags.end() && it->second != RefineFlag::None) continue;
    const auto c = phi.corners(mesh, k);
    if (std::min({c[0], c[1], c[2], c[3]}) > phi_bw) void_seed[k] = true;
  }
  for (const auto& [k, f] : flags)
    if (f == RefineFlag::Refine && mesh.is_active(k)) {
      mesh.refine(k);
      ++ev.n_refined;
    }
  ev.n_refined += enforce_min_level(mesh, levels.l_min);
  ev.n_coarsened = coarsen_void(mesh, std::move(void_seed), levels.l_void);
  ev.n_balance = mesh.balance();
  levels.bump();
  return ev;
}

RefineEvent maintain_intersected_uniformity(HierarchicalMesh& mesh,
                                            const std::function<double(double, double)>& phi_eval,
                                            const LevelSchedule& levels, double phi_bw,
                                            double b_buffer) {
  RefineEvent ev;
  for (int pass = 0; pass < 2 * HierarchicalMesh::kMaxLevel; ++pass) {
    const NodalField phi = sample_nodal(mesh, phi_eval);
    RefineFlags flags = flag_by_levelset(mesh, phi, levels, phi_bw);
    apply_buffer(mesh, flags, b_buffer);
    int n = 0;
    for (const auto& [k, f] : flags)
      if (f == RefineFlag::Refine && mesh.is_active(k)) {
        mesh.refine(k);
        ++n;
      }
    n += enforce_min_level(mesh, levels.l_min);
    ev.n_refined += n;
    if (n == 0) break;
  }
  ev.n_balance = mesh.balance();
  return ev;
}

NodalField sample_nodal(const HierarchicalMesh& mesh,
                        const std::function<double(double, double)>& f) {
  NodalField out;
  for (const ElemKey& k : mesh.active_elements())
    for (const NodeKey& n : mesh.corner_nodes(k))
      if (!out.values.count(n)) {
        auto [x, y] = mesh.node_coords(n);
        out.values[n] = f(x, y);
      }
  return out;
}

bool intersected_levels_uniform(const HierarchicalMesh& mesh, const NodalField& phi,
                                int* level_out) {
  int level = -1;
  for (const ElemKey& k : mesh.active_elements()) {
    if (classify_corners(phi.corners(mesh, k)) != PhaseClass::Cut) continue;
    if (level < 0) level = k.level;
    if (k.level != level) return false;
  }
  if (level_out) *level_out = level;
  return true;
}

}  // namespace lstop
