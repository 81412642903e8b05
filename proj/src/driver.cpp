#include "lstop/driver.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <cstdlib>
#include <iostream>

#include "lstop/vtk.hpp"

namespace lstop {

void OptHistory::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw Error("history: cannot open " + path);
  os << "iter,S,MA,Pp,Pphi,Pgrad,objective,constraint,dofs_xfem,dofs_fem_uniform,"
        "dofs_design,refined,rho_shift,w_s\n";
  os << std::setprecision(17);
  for (const IterRecord& r : rows)
    os << r.iter << ',' << r.S << ',' << r.MA << ',' << r.Pp << ',' << r.Pphi << ',' << r.Pgrad
       << ',' << r.objective << ',' << r.constraint << ',' << r.dofs_xfem << ','
       << r.dofs_fem_uniform << ',' << r.dofs_design << ',' << r.refined << ',' << r.rho_shift
       << ',' << r.w_s << '\n';
}

OptHistory OptHistory::read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("history: cannot open " + path);
  OptHistory h;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    IterRecord r;
    char c;
    ss >> r.iter >> c >> r.S >> c >> r.MA >> c >> r.Pp >> c >> r.Pphi >> c >> r.Pgrad >> c >>
        r.objective >> c >> r.constraint >> c >> r.dofs_xfem >> c >> r.dofs_fem_uniform >> c >>
        r.dofs_design >> c >> r.refined >> c >> r.rho_shift >> c >> r.w_s;
    if (ss.fail()) throw Error("history: malformed row in " + path);
    h.rows.push_back(r);
  }
  return h;
}

EfficiencyFactors efficiency_metrics(const OptHistory& adaptive, const OptHistory& uniform,
                                     double ns) {
  if (adaptive.rows.empty() || uniform.rows.empty())
    throw Error("efficiency_metrics: empty history");
  const std::size_t n = std::min(adaptive.rows.size(), uniform.rows.size());
  double sum_a = 0, sum_ux = 0, sum_uf = 0;
  double max_a = 0, max_ux = 0, max_uf = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double a = std::pow(double(adaptive.rows[k].dofs_xfem), ns);
    const double ux = std::pow(double(uniform.rows[k].dofs_xfem), ns);
    const double uf = std::pow(double(uniform.rows[k].dofs_fem_uniform), ns);
    sum_a += a;
    sum_ux += ux;
    sum_uf += uf;
    max_a = std::max(max_a, a);
    max_ux = std::max(max_ux, ux);
    max_uf = std::max(max_uf, uf);
  }
  return {sum_ux / sum_a, max_ux / max_a, sum_uf / sum_a, max_uf / max_a};
}

namespace {

std::vector<Rect> frozen_boxes(const RunConfig& cfg) {
  std::vector<Rect> out;
  if (!cfg.freeze_bc_regions) return out;
  const double d = cfg.freeze_depth_mult * cfg.h_init();
  out.push_back({0, 0, cfg.support_length + d, d});
  out.push_back(
      {cfg.domain_w - cfg.load_width - d, cfg.domain_h - d, cfg.domain_w, cfg.domain_h});
  return out;
}

bool support_intersects(const ThbBasis& basis, const HierFunction& fn, const Rect& box) {
  const HierarchicalMesh& m = basis.mesh();
  const int p = basis.degree();
  const double hx = m.hx(fn.level), hy = m.hy(fn.level);
  const Rect d = m.domain();
  const double x0 = d.x0 + fn.ai * hx, x1 = d.x0 + (fn.ai + p + 1) * hx;
  const double y0 = d.y0 + fn.aj * hy, y1 = d.y0 + (fn.aj + p + 1) * hy;
  return x0 < box.x1 && x1 > box.x0 && y0 < box.y1 && y1 > box.y0;
}

void design_bounds(const RunConfig& cfg, const ThbBasis& basis, const std::vector<Rect>& frozen,
                   Eigen::VectorXd& lb, Eigen::VectorXd& ub) {
  const int n = int(basis.size());
  if (cfg.scheme == DesignScheme::Combined) {
    lb = Eigen::VectorXd::Zero(n);
    ub = Eigen::VectorXd::Ones(n);
  } else {
    const double box = cfg.plain_box_mult * cfg.phi_target();
    lb = Eigen::VectorXd::Constant(n, -box);
    ub = Eigen::VectorXd::Constant(n, box);
  }
  for (int i = 0; i < n; ++i)
    for (const Rect& bx : frozen)
      if (support_intersects(basis, basis.functions()[i], bx)) {
        if (cfg.scheme == DesignScheme::Combined)
          lb[i] = 1.0 - 1e-6;
        else
          ub[i] = -0.5 * cfg.phi_target();
      }
}

std::string counter_name(const std::string& dir, const char* stem, int iter) {
  std::ostringstream ss;
  ss << dir << '/' << stem << '_' << std::setw(4) << std::setfill('0') << iter << ".vtk";
  return ss.str();
}

}  // namespace

RunResult run(const RunConfig& cfg, const std::string& out_dir, const IterObserver& obs) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  const int p = cfg.degree;
  const double b_buffer = std::max(double(p), cfg.b_buffer);
  const double phi_bw = cfg.phi_bw();

  HierarchicalMesh mesh(cfg.nx, cfg.ny, {0, 0, cfg.domain_w, cfg.domain_h});
  for (int l = 0; l < cfg.l0; ++l) mesh.refine_all();
  LevelSchedule sched = LevelSchedule::start_at(cfg.l0, cfg.l_ifc_max, cfg.l_solid_max, cfg.l_min);

  SchemeParams scheme;
  scheme.scheme = cfg.scheme;
  scheme.phi_scale = cfg.phi_scale();
  scheme.rho_shift = cfg.rho_shift0;
  scheme.rho0 = 1.0;
  scheme.E0 = cfg.E0;
  scheme.beta_simp = cfg.beta_simp;

  ElasticParams elastic;
  elastic.nu = cfg.nu;
  elastic.plane_stress = cfg.plane_stress;
  elastic.gammaN_mult = cfg.gammaN_mult;
  elastic.gammaG = cfg.gammaG;
  elastic.spring_scale = cfg.spring_scale;

  BCs bcs;
  bcs.dirichlet.push_back({0, 0, cfg.support_length, 0, false, true});
  if (cfg.symmetry_right)
    bcs.dirichlet.push_back({cfg.domain_w, 0, cfg.domain_w, cfg.domain_h, true, false});
  bcs.neumann.push_back({cfg.domain_w - cfg.load_width, cfg.domain_h, cfg.domain_w, cfg.domain_h,
                         0.0, -cfg.pressure});

  RegParams reg;
  reg.phi_target = cfg.phi_target();
  reg.grad_target = cfg.grad_target;
  reg.gamma_I = cfg.gamma_I;
  reg.I_max = cfg.I_max;
  reg.alpha1 = cfg.alpha1;
  reg.alpha2 = cfg.alpha2;
  reg.alpha3 = cfg.alpha3;

  FunctionalWeights weights;
  weights.w_s = cfg.w_s;
  weights.w_m = cfg.w_m;
  weights.c_p = cfg.c_p;
  weights.c_phi = cfg.c_phi;
  weights.c_m = cfg.c_m;
  weights.S0 = cfg.S0;
  weights.M0 = cfg.M0;
  weights.P0 = cfg.P0;
  weights.V_total = cfg.V_total;
  weights.report_factor = cfg.report_factor;

  ThbBasis design = ThbBasis::build(mesh, p, cfg.mode);
  ThbBasis state = ThbBasis::build(mesh, 1, cfg.mode);

  const std::vector<Rect> frozen = frozen_boxes(cfg);
  Eigen::VectorXd lb, ub;
  design_bounds(cfg, design, frozen, lb, ub);

  Eigen::VectorXd s;
  if (cfg.scheme == DesignScheme::Combined) {
    s = Eigen::VectorXd::Constant(design.size(), cfg.initial_s);
  } else if (cfg.holes.rows * cfg.holes.cols > 0) {
    s = seed_initial_holes(design, cfg.holes, cfg.phi_target());
  } else {
    s = Eigen::VectorXd::Constant(design.size(), -cfg.phi_target());
  }
  s = s.cwiseMax(lb).cwiseMin(ub);

  GcmmaOptimizer opt(lb, ub);
  double ws = cfg.w_s;
  double rho_shift = cfg.rho_shift0;

  const long long nfx = (std::int64_t(cfg.nx) << cfg.l_ifc_max) + 1;
  const long long nfy = (std::int64_t(cfg.ny) << cfg.l_ifc_max) + 1;
  const long long fem_dofs = 2 * nfx * nfy;

  RunResult res;
  std::vector<double> obj_hist;
  bool pending_refine_flag = false;

  auto rebuild = [&](const char*) {
    ThbBasis nd = ThbBasis::build(mesh, p, cfg.mode);
    ThbBasis ns = ThbBasis::build(mesh, 1, cfg.mode);
    Eigen::VectorXd s_new = nd.l2_project(design, s);

    // remap fidelity: away from coarsened regions the nested projection
    // must reproduce the field
    {
      const HierarchicalMesh& old_mesh = design.mesh();
      std::mt19937 rng(1234);
      std::uniform_real_distribution<double> Ux(0.0, cfg.domain_w), Uy(0.0, cfg.domain_h);
      int checked = 0;
      for (int t = 0; t < 400 && checked < 100; ++t) {
        const double x = Ux(rng), y = Uy(rng);
        const ElemKey en = nd.locate(x, y);
        if (old_mesh.cover(en) == HierarchicalMesh::Cover::Finer) continue;  // coarsened here
        const double margin = (p + 1) * mesh.edge(en.level);
        const Rect b = mesh.cell_bbox(en);
        bool near_coarsening = false;
        for (const ElemKey& nb : mesh.query_active(
                 {b.x0 - margin, b.y0 - margin, b.x1 + margin, b.y1 + margin}))
          if (old_mesh.cover(nb) == HierarchicalMesh::Cover::Finer) near_coarsening = true;
        if (near_coarsening) continue;
        const double before = design.eval(s, x, y);
        const double after = nd.eval(s_new, x, y);
        if (std::abs(after - before) > 1e-8)
          throw InvariantError("run: L2 remap drifted by " + std::to_string(after - before));
        ++checked;
      }
    }

    design = std::move(nd);
    state = std::move(ns);
    design_bounds(cfg, design, frozen, lb, ub);
    s = s_new.cwiseMax(lb).cwiseMin(ub);
    opt.rebind(lb, ub);
  };

  int iter = 0;
  for (iter = 1; iter <= cfg.max_iters; ++iter) {
    scheme.rho_shift = rho_shift;
    weights.w_s = ws;

    // interface-uniformity maintenance (refine only, schedule unchanged)
    bool mesh_changed = pending_refine_flag;
    pending_refine_flag = false;
    for (int pass = 0; pass < 8; ++pass) {
      const Eigen::VectorXd phi_c = material_phi_coeffs(scheme, s);
      auto phi_eval = [&](double x, double y) { return design.eval(phi_c, x, y); };
      const RefineEvent ev =
          maintain_intersected_uniformity(mesh, phi_eval, sched, phi_bw, b_buffer);
      if (!ev.changed()) break;
      mesh_changed = true;
      rebuild("maintenance");
    }

    const Eigen::VectorXd phi_c = material_phi_coeffs(scheme, s);
    NodalField phi = design.nodal_values(phi_c);
    snap_nodal(phi, scheme.snap_eps());
    const CutDecomposition dec = decompose_cut_elements(mesh, phi, scheme.snap_eps());
    const LonField lon = compute_lon(mesh, dec, cfg.I_max);
    const EnrichmentMap enr = build_enrichment(mesh, dec, state, bcs);
    const LinearSystem sys =
        assemble(mesh, design, s, scheme, elastic, bcs, dec, enr, state);
    const Eigen::VectorXd u = solve(sys);

    const FunctionalInputs fin{&mesh, &design, &state, &s,   scheme, elastic,
                               &bcs,  &dec,    &enr,   &lon, reg,    weights};
    GradientVector g = total_gradient(fin, sys, u);
    g.bd.dofs_fem_uniform = fem_dofs;

    IterRecord row;
    row.iter = iter;
    row.S = g.bd.S;
    row.MA = g.bd.MA;
    row.Pp = g.bd.Pp;
    row.Pphi = g.bd.Pphi;
    row.Pgrad = g.bd.Pgrad;
    row.objective = g.bd.objective;
    row.constraint = g.bd.g_mass;
    row.dofs_xfem = g.bd.dofs_xfem;
    row.dofs_fem_uniform = fem_dofs;
    row.dofs_design = long(design.size());
    row.refined = mesh_changed ? 1 : 0;
    row.rho_shift = rho_shift;
    row.w_s = ws;
    res.history.rows.push_back(row);
    obj_hist.push_back(g.bd.objective);
    res.final_bd = g.bd;

    if (obs) obs({iter, mesh, phi, dec, s, g.bd, mesh_changed});
    if (cfg.vtk_every > 0 && iter % cfg.vtk_every == 0) {
      write_mesh_vtk(counter_name(out_dir, "mesh", iter), mesh, dec);
      {
        const StressField sf{&design, &s, scheme, elastic};
        write_design_vtk(counter_name(out_dir, "design", iter), mesh, dec, &enr, &state, &u, &sf);
      }
    }

    const bool continuation_done =
        (cfg.scheme != DesignScheme::Combined || rho_shift >= 1.0) &&
        (cfg.ws_final <= 0 || iter >= cfg.ws_iters);
    if (continuation_done && check_convergence(obj_hist, g.bd.g_mass, cfg.conv_tol)) {
      res.converged = true;
      break;
    }

    // trial-point evaluator for the conservative inner iterations
    auto evaluator = [&](const Eigen::VectorXd& st) -> std::pair<double, double> {
      const Eigen::VectorXd pc = material_phi_coeffs(scheme, st);
      NodalField ph = design.nodal_values(pc);
      snap_nodal(ph, scheme.snap_eps());
      const CutDecomposition d2 = decompose_cut_elements(mesh, ph, scheme.snap_eps());
      const LonField l2 = compute_lon(mesh, d2, cfg.I_max);
      const EnrichmentMap e2 = build_enrichment(mesh, d2, state, bcs);
      const LinearSystem sy = assemble(mesh, design, st, scheme, elastic, bcs, d2, e2, state);
      const Eigen::VectorXd uu = solve(sy);
      const FunctionalInputs fi{&mesh, &design, &state, &st,  scheme, elastic,
                                &bcs,  &d2,     &e2,    &l2, reg,    weights};
      const ObjectiveBreakdown bd = eval_functionals(fi, sy, uu);
      return {bd.objective, bd.g_mass};
    };
    {
      const Eigen::VectorXd s_prev = s;
      s = opt.step(s, g.bd.objective, g.d_objective, g.bd.g_mass, g.d_gmass, evaluator);
      if (const char* dbg = std::getenv("LSTOP_DEBUG_MMA"); dbg && *dbg == '1')
        std::cerr << "[mma] it " << iter << " inner=" << opt.last_inner_count()
                  << (opt.last_hit_inner_cap() ? " CAP" : "")
                  << " step=" << (s - s_prev).lpNorm<Eigen::Infinity>() << "\n";
    }

    // scheduled refinement with L2 remap and optimizer restart
    if (cfg.refine_every > 0 && iter % cfg.refine_every == 0) {
      const Eigen::VectorXd pc = material_phi_coeffs(scheme, s);
      NodalField ph = design.nodal_values(pc);
      snap_nodal(ph, scheme.snap_eps());
      refinement_step(mesh, ph, sched, phi_bw, b_buffer);
      rebuild("scheduled");
      pending_refine_flag = true;
    }

    // continuation updates
    if (cfg.scheme == DesignScheme::Combined && cfg.rho_shift_every > 0 &&
        iter % cfg.rho_shift_every == 0 && rho_shift < 1.0) {
      rho_shift = 1.0 - 0.5 * (1.0 - rho_shift);
      if (1.0 - rho_shift < 1e-2) rho_shift = 1.0;
    }
    if (cfg.ws_final > 0 && cfg.ws_final != cfg.w_s) {
      const double frac = std::min(1.0, double(iter) / cfg.ws_iters);
      ws = cfg.w_s * std::pow(cfg.ws_final / cfg.w_s, frac);
    }
  }
  res.iterations = int(res.history.rows.size());

  res.history.write_csv(out_dir + "/history.csv");
  {
    const Eigen::VectorXd pc = material_phi_coeffs(scheme, s);
    NodalField ph = design.nodal_values(pc);
    snap_nodal(ph, scheme.snap_eps());
    const CutDecomposition dec = decompose_cut_elements(mesh, ph, scheme.snap_eps());
    write_mesh_vtk(out_dir + "/mesh_final.vtk", mesh, dec);
    write_design_vtk(out_dir + "/design_final.vtk", mesh, dec);
    std::ofstream os(out_dir + "/final_summary.txt");
    os << std::setprecision(10);
    os << "converged " << (res.converged ? 1 : 0) << "\niterations " << res.iterations
       << "\nS " << res.final_bd.S << "\nMA " << res.final_bd.MA << "\nPp " << res.final_bd.Pp
       << "\nPphi " << res.final_bd.Pphi << "\nPgrad " << res.final_bd.Pgrad << "\nobjective "
       << res.final_bd.objective << "\nmass_ratio " << res.final_bd.g_mass + cfg.c_m
       << "\ndofs_xfem " << res.final_bd.dofs_xfem << "\ndesign_dofs " << design.size() << "\n";
  }
  return res;
}

}  // namespace lstop
