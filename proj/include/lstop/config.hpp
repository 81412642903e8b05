#pragma once

#include <iosfwd>
#include <string>

#include "lstop/geom.hpp"

namespace lstop {

/// Run configuration. Defaults realize the 2D beam benchmark on its half
/// domain: simply supported at the outer bottom corner, symmetry plane on
/// the right edge, downward traction next to the symmetry plane with unit
/// total resultant on the full span.
struct RunConfig {
  // geometry of the modeled domain
  double domain_w = 3.0, domain_h = 1.0;
  int nx = 30, ny = 10;
  double support_length = 0.025;
  double load_width = 0.025;   // on the modeled half
  double pressure = 20.0;      // traction magnitude (resultant 0.5 per half)
  bool symmetry_right = true;

  // material
  double E0 = 1.0, nu = 0.3;
  bool plane_stress = true;

  // design scheme and discretization
  DesignScheme scheme = DesignScheme::Combined;
  int degree = 2;
  BasisMode mode = BasisMode::THB;
  double rho_shift0 = 0.2;
  double beta_simp = 2.0;
  double phi_scale_mult = 5.0;  // x h_init
  double initial_s = 0.6;
  HolePattern holes{0, 0, 0.0};  // plain scheme seeding
  double plain_box_mult = 2.0;   // design box +- mult*phi_target

  // mesh levels and adaptation schedule
  int l0 = 2, l_ifc_max = 2, l_solid_max = 2, l_min = 0;
  int refine_every = 0;  // 0 = no scheduled refinement
  double b_buffer = 0;   // raised to >= degree

  // continuation
  int rho_shift_every = 25;
  double ws_final = -1.0;  // < 0: no w_s continuation
  int ws_iters = 150;

  // objective weights and normalizers
  double w_s = 0.9, w_m = 0.0, c_p = 0.025, c_phi = 0.5, c_m = 0.4;
  double S0 = 59.12, M0 = 1.0, P0 = 6.0, V_total = 6.0;
  double report_factor = 2.0;

  // level set regularization
  double phi_target_mult = 1.5;  // x h_init
  double grad_target = 0.75;
  int I_max = 1;
  double gamma_I = 4.61;
  double alpha1 = 0.5, alpha2 = 0.5, alpha3 = 0.5;
  double phi_bw_mult = 1.5;  // x h_init

  // stabilization
  double gammaN_mult = 100.0, gammaG = 0.005;
  double spring_scale = 1.0;

  // run control
  int max_iters = 800;
  double conv_tol = 1e-5;
  int vtk_every = 0;
  bool freeze_bc_regions = true;
  double freeze_depth_mult = 2.0;  // x h_init

  double h_init() const { return std::max(domain_w / nx, domain_h / ny) / double(1 << l0); }
  double phi_scale() const { return phi_scale_mult * h_init(); }
  double phi_target() const { return phi_target_mult * h_init(); }
  double phi_bw() const { return phi_bw_mult * h_init(); }

  void validate() const;
};

/// Parse "key = value" lines ('#' comments); unknown keys are an error.
RunConfig parse_config(std::istream& is);
RunConfig load_config(const std::string& path);
void write_config_template(std::ostream& os);

}  // namespace lstop
