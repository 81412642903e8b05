#include "lstop/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace lstop {

void RunConfig::validate() const {
  if (nx < 1 || ny < 1 || domain_w <= 0 || domain_h <= 0)
    throw ConfigError("config: invalid background mesh");
  if (degree < 1 || degree > 3) throw ConfigError("config: degree must be 1, 2 or 3");
  if (l0 < l_min || l0 > std::min(l_ifc_max, l_solid_max))
    throw ConfigError("config: need l_min <= l0 <= min(l_ifc_max, l_solid_max)");
  if (l_solid_max > l_ifc_max) throw ConfigError("config: l_solid_max must not exceed l_ifc_max");
  if (scheme == DesignScheme::Plain && holes.rows * holes.cols > 0 && holes.radius <= 0)
    throw ConfigError("config: hole radius must be positive");
  if (gammaG < 0.0 || gammaG > 0.1)
    throw ConfigError("config: gammaG outside the stabilization range [0, 0.1]");
}

namespace {

template <class T>
void read_into(const std::string& v, T& out) {
  std::istringstream ss(v);
  ss >> out;
  if (ss.fail()) throw ConfigError("config: bad value '" + v + "'");
}

}  // namespace

RunConfig parse_config(std::istream& is) {
  RunConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");

    if (key == "domain_w") read_into(val, c.domain_w);
    else if (key == "domain_h") read_into(val, c.domain_h);
    else if (key == "nx") read_into(val, c.nx);
    else if (key == "ny") read_into(val, c.ny);
    else if (key == "support_length") read_into(val, c.support_length);
    else if (key == "load_width") read_into(val, c.load_width);
    else if (key == "pressure") read_into(val, c.pressure);
    else if (key == "symmetry_right") read_into(val, c.symmetry_right);
    else if (key == "E0") read_into(val, c.E0);
    else if (key == "nu") read_into(val, c.nu);
    else if (key == "plane_stress") read_into(val, c.plane_stress);
    else if (key == "scheme") {
      if (val == "combined") c.scheme = DesignScheme::Combined;
      else if (val == "plain") c.scheme = DesignScheme::Plain;
      else throw ConfigError("config: scheme must be 'combined' or 'plain'");
    } else if (key == "degree") read_into(val, c.degree);
    else if (key == "mode") {
      if (val == "thb") c.mode = BasisMode::THB;
      else if (val == "hb") c.mode = BasisMode::HB;
      else throw ConfigError("config: mode must be 'thb' or 'hb'");
    } else if (key == "rho_shift0") read_into(val, c.rho_shift0);
    else if (key == "beta_simp") read_into(val, c.beta_simp);
    else if (key == "phi_scale_mult") read_into(val, c.phi_scale_mult);
    else if (key == "initial_s") read_into(val, c.initial_s);
    else if (key == "hole_rows") read_into(val, c.holes.rows);
    else if (key == "hole_cols") read_into(val, c.holes.cols);
    else if (key == "hole_radius") read_into(val, c.holes.radius);
    else if (key == "plain_box_mult") read_into(val, c.plain_box_mult);
    else if (key == "l0") read_into(val, c.l0);
    else if (key == "l_ifc_max") read_into(val, c.l_ifc_max);
    else if (key == "l_solid_max") read_into(val, c.l_solid_max);
    else if (key == "l_min") read_into(val, c.l_min);
    else if (key == "refine_every") read_into(val, c.refine_every);
    else if (key == "b_buffer") read_into(val, c.b_buffer);
    else if (key == "rho_shift_every") read_into(val, c.rho_shift_every);
    else if (key == "ws_final") read_into(val, c.ws_final);
    else if (key == "ws_iters") read_into(val, c.ws_iters);
    else if (key == "w_s") read_into(val, c.w_s);
    else if (key == "w_m") read_into(val, c.w_m);
    else if (key == "c_p") read_into(val, c.c_p);
    else if (key == "c_phi") read_into(val, c.c_phi);
    else if (key == "c_m") read_into(val, c.c_m);
    else if (key == "S0") read_into(val, c.S0);
    else if (key == "M0") read_into(val, c.M0);
    else if (key == "P0") read_into(val, c.P0);
    else if (key == "V_total") read_into(val, c.V_total);
    else if (key == "report_factor") read_into(val, c.report_factor);
    else if (key == "phi_target_mult") read_into(val, c.phi_target_mult);
    else if (key == "grad_target") read_into(val, c.grad_target);
    else if (key == "I_max") read_into(val, c.I_max);
    else if (key == "gamma_I") read_into(val, c.gamma_I);
    else if (key == "alpha1") read_into(val, c.alpha1);
    else if (key == "alpha2") read_into(val, c.alpha2);
    else if (key == "alpha3") read_into(val, c.alpha3);
    else if (key == "phi_bw_mult") read_into(val, c.phi_bw_mult);
    else if (key == "gammaN_mult") read_into(val, c.gammaN_mult);
    else if (key == "gammaG") read_into(val, c.gammaG);
    else if (key == "spring_scale") read_into(val, c.spring_scale);
    else if (key == "max_iters") read_into(val, c.max_iters);
    else if (key == "conv_tol") read_into(val, c.conv_tol);
    else if (key == "vtk_every") read_into(val, c.vtk_every);
    else if (key == "freeze_bc_regions") read_into(val, c.freeze_bc_regions);
    else if (key == "freeze_depth_mult") read_into(val, c.freeze_depth_mult);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  return parse_config(f);
}

void write_config_template(std::ostream& os) {
  os << "# 2D beam, half domain, combined level set/density scheme\n"
        "domain_w = 3.0\ndomain_h = 1.0\nnx = 30\nny = 10\n"
        "support_length = 0.025\nload_width = 0.025\npressure = 20.0\nsymmetry_right = 1\n"
        "E0 = 1.0\nnu = 0.3\nplane_stress = 1\n"
        "scheme = combined\ndegree = 2\nmode = thb\n"
        "rho_shift0 = 0.2\nbeta_simp = 2.0\nphi_scale_mult = 5.0\ninitial_s = 0.6\n"
        "l0 = 2\nl_ifc_max = 2\nl_solid_max = 2\nl_min = 0\nrefine_every = 0\n"
        "rho_shift_every = 25\n"
        "w_s = 0.9\nw_m = 0.0\nc_p = 0.025\nc_phi = 0.5\nc_m = 0.4\n"
        "S0 = 59.12\nP0 = 6.0\nV_total = 6.0\nreport_factor = 2.0\n"
        "phi_target_mult = 1.5\ngrad_target = 0.75\nI_max = 1\ngamma_I = 4.61\n"
        "alpha1 = 0.5\nalpha2 = 0.5\nalpha3 = 0.5\nphi_bw_mult = 1.5\n"
        "gammaN_mult = 100.0\ngammaG = 0.005\n"
        "max_iters = 800\nconv_tol = 1e-5\nvtk_every = 0\n";
}

}  // namespace lstop
