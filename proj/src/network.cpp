#include "coidyn/network.hpp"

#include <algorithm>
#include <cmath>

#include "coidyn/errors.hpp"

namespace coidyn {

namespace {

void check_bus(int bus, int bus_count, const char* what) {
  if (bus < 0 || bus >= bus_count) {
    throw ValidationError(what, "bus index " + std::to_string(bus) +
                                    " outside 0.." + std::to_string(bus_count - 1));
  }
}

CMat take_block(const CMat& y, const std::vector<int>& rows,
                const std::vector<int>& cols) {
  CMat out(rows.size(), cols.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < cols.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          y(rows[i], cols[j]);
    }
  }
  return out;
}

}  // namespace

CMat assemble_admittance(const NetworkCase& net) {
  if (net.bus_count <= 0) {
    throw ValidationError("network.bus_count", "must be positive");
  }
  const int n_sg = static_cast<int>(net.sg_units.size());
  const int n = net.bus_count + n_sg;
  CMat y = CMat::Zero(n, n);

  for (const Branch& br : net.branches) {
    check_bus(br.from_bus, net.bus_count, "network.branches.from_bus");
    check_bus(br.to_bus, net.bus_count, "network.branches.to_bus");
    if (br.from_bus == br.to_bus) {
      throw ValidationError("network.branches", "branch endpoints coincide");
    }
    if (br.z_series == Complex(0.0, 0.0)) {
      throw ValidationError("network.branches", "branch impedance is zero");
    }
    const Complex y_se = 1.0 / br.z_series;
    y(br.from_bus, br.from_bus) += y_se + Complex(0.0, br.b_charging / 2.0);
    y(br.to_bus, br.to_bus) += y_se + Complex(0.0, br.b_charging / 2.0);
    y(br.from_bus, br.to_bus) -= y_se;
    y(br.to_bus, br.from_bus) -= y_se;
  }
  for (const ShuntLoad& ld : net.shunt_loads) {
    check_bus(ld.bus, net.bus_count, "network.loads.bus");
    y(ld.bus, ld.bus) += ld.y;
  }
  for (int k = 0; k < n_sg; ++k) {
    const SgTap& sg = net.sg_units[static_cast<size_t>(k)];
    check_bus(sg.bus, net.bus_count, "sg.bus");
    if (!(sg.x_dprime > 0.0)) {
      throw ValidationError("sg.x_dprime_pu", "must be positive");
    }
    const Complex y_x = 1.0 / Complex(0.0, sg.x_dprime);
    const int emf = net.bus_count + k;
    y(emf, emf) += y_x;
    y(sg.bus, sg.bus) += y_x;
    y(emf, sg.bus) -= y_x;
    y(sg.bus, emf) -= y_x;
  }
  return y;
}

PartitionedAdmittance build_partitioned_admittance(const NetworkCase& net) {
  const CMat y = assemble_admittance(net);
  const int n_sg = static_cast<int>(net.sg_units.size());

  PartitionedAdmittance p;
  for (int k = 0; k < n_sg; ++k) p.g_nodes.push_back(net.bus_count + k);

  std::vector<bool> is_f(static_cast<size_t>(net.bus_count), false);
  for (int bus : net.gfl_buses) {
    check_bus(bus, net.bus_count, "gfl.bus");
    if (is_f[static_cast<size_t>(bus)]) {
      throw ValidationError("gfl.bus", "duplicate GFL bus " + std::to_string(bus));
    }
    is_f[static_cast<size_t>(bus)] = true;
    p.f_nodes.push_back(bus);
  }
  for (const SgTap& sg : net.sg_units) {
    if (is_f[static_cast<size_t>(sg.bus)]) {
      throw ValidationError("sg.bus", "bus " + std::to_string(sg.bus) +
                                          " hosts both an SG and a GFL");
    }
  }
  for (int bus = 0; bus < net.bus_count; ++bus) {
    if (!is_f[static_cast<size_t>(bus)]) p.n_nodes.push_back(bus);
  }

  p.ygg = take_block(y, p.g_nodes, p.g_nodes);
  p.ygf = take_block(y, p.g_nodes, p.f_nodes);
  p.ygn = take_block(y, p.g_nodes, p.n_nodes);
  p.yfg = take_block(y, p.f_nodes, p.g_nodes);
  p.yff = take_block(y, p.f_nodes, p.f_nodes);
  p.yfn = take_block(y, p.f_nodes, p.n_nodes);
  p.yng = take_block(y, p.n_nodes, p.g_nodes);
  p.ynf = take_block(y, p.n_nodes, p.f_nodes);
  p.ynn = take_block(y, p.n_nodes, p.n_nodes);
  return p;
}

ReducedAdmittance kron_reduce(const PartitionedAdmittance& p) {
  ReducedAdmittance r;
  if (p.n_nodes.empty()) {
    r.gg = p.ygg;
    r.gf = p.ygf;
    r.fg = p.yfg;
    r.ff = p.yff;
    return r;
  }
  CheckedLu lu(p.ynn, "node elimination Y_NN");
  const CMat x_ng = lu.solve(p.yng);
  const CMat x_nf = lu.solve(p.ynf);
  r.gg = p.ygg - p.ygn * x_ng;
  r.gf = p.ygf - p.ygn * x_nf;
  r.fg = p.yfg - p.yfn * x_ng;
  r.ff = p.yff - p.yfn * x_nf;
  return r;
}

HybridInterfaceMatrix hybrid_interface(const ReducedAdmittance& r) {
  HybridInterfaceMatrix h;
  const Eigen::Index nf = r.ff.rows();
  if (nf == 0) {
    h.y_eq = r.gg;
    h.t_i = CMat(r.gg.rows(), 0);
    h.t_u = CMat(0, r.gg.rows());
    h.z = CMat(0, 0);
    return h;
  }
  CheckedLu lu(r.ff, "hybrid interface Y_FF");
  const CMat ff_inv_fg = lu.solve(r.fg);
  h.y_eq = r.gg - r.gf * ff_inv_fg;
  h.t_u = -ff_inv_fg;
  h.z = lu.solve(CMat(CMat::Identity(nf, nf)));
  // t_i = gf * ff^-1, computed through the transposed system so the
  // symmetry check against t_u stays a genuine cross-check.
  CheckedLu lu_t(CMat(r.ff.transpose()), "hybrid interface Y_FF^T");
  h.t_i = lu_t.solve(CMat(r.gf.transpose())).transpose();
  return h;
}

ReducedAdmittance collapse_sg_nodes(const ReducedAdmittance& r) {
  ReducedAdmittance c;
  const Eigen::Index ng = r.gg.rows();
  if (ng == 0) throw Error("cannot collapse a network with no SG nodes");
  c.gg = CMat::Constant(1, 1, r.gg.sum());
  c.gf = r.gf.colwise().sum();
  c.fg = r.fg.rowwise().sum();
  c.ff = r.ff;
  return c;
}

CoiInterfaceMatrix coi_interface(const ReducedAdmittance& r) {
  const HybridInterfaceMatrix h = hybrid_interface(collapse_sg_nodes(r));
  CoiInterfaceMatrix c;
  c.y_eq = h.y_eq(0, 0);
  c.t_i = h.t_i.row(0).transpose();
  c.t_u = h.t_u.col(0);
  c.z = h.z;
  return c;
}

double tie_power_sg_sg(double e_i, double delta_i, double e_j, double delta_j,
                       Complex y_ij) {
  const double d = delta_i - delta_j;
  return e_i * e_j * (y_ij.real() * std::cos(d) + y_ij.imag() * std::sin(d));
}

double local_power_sg(double e, Complex y_ii) { return e * e * y_ii.real(); }

double local_power_gfl(double i_mag, Complex z_ff) {
  return i_mag * i_mag * z_ff.real();
}

double tie_power_sg_gfl(double a_mag, double a_angle, double b_mag,
                        double b_angle, Complex t) {
  const double v = -t.real();
  const double w = t.imag();
  const double d = a_angle - b_angle;
  return a_mag * b_mag * (-v * std::cos(d) + w * std::sin(d));
}

double tie_power_sg_gfl_sg_side(double e, double delta, double i_mag,
                                double theta, Complex t) {
  return tie_power_sg_gfl(e, delta, i_mag, theta, t);
}

double tie_power_sg_gfl_gfl_side(double e, double delta, double i_mag,
                                 double theta, Complex t) {
  return -tie_power_sg_gfl(i_mag, theta, e, delta, t);
}

double tie_power_gfl_gfl(double i_f, double theta_f, double i_g,
                         double theta_g, Complex z_fg) {
  const double d = theta_f - theta_g;
  return i_f * i_g * (z_fg.real() * std::cos(d) - z_fg.imag() * std::sin(d));
}

}  // namespace coidyn
