#pragma once

#include <vector>

#include "coidyn/linalg.hpp"

namespace coidyn {

// One series element between two buses, specified by its impedance r + jx
// exactly as given; the admittance is derived at assembly. b_charging is
// the total line charging susceptance, split equally between the terminals.
struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  Complex z_series{0.0, 0.0};
  double b_charging = 0.0;
};

// Constant-admittance load in consuming convention: a load drawing
// P + jQ at 1 pu voltage contributes y = P - jQ.
struct ShuntLoad {
  int bus = 0;
  Complex y{0.0, 0.0};
};

// SG terminal bus plus the transient reactance behind which the EMF sits.
struct SgTap {
  int bus = 0;
  double x_dprime = 0.0;
};

// Pure network description. Bus indices are 0-based here; file ingestion
// converts from the 1-based case format.
struct NetworkCase {
  int bus_count = 0;
  std::vector<Branch> branches;
  std::vector<ShuntLoad> shunt_loads;
  std::vector<SgTap> sg_units;    // order fixes the EMF node order
  std::vector<int> gfl_buses;     // order fixes the F node order
};

// Node classes of the assembled matrix: G = SG internal EMF nodes
// (appended after the physical buses), F = GFL terminal buses,
// N = every remaining bus (eliminated by reduction).
struct PartitionedAdmittance {
  CMat ygg, ygf, ygn;
  CMat yfg, yff, yfn;
  CMat yng, ynf, ynn;
  std::vector<int> g_nodes, f_nodes, n_nodes;
};

// Network after eliminating the N class. Only generator interfaces remain.
struct ReducedAdmittance {
  CMat gg, gf;
  CMat fg, ff;
};

// Hybrid form: SG side keeps EMFs as inputs, GFL side keeps currents.
//   I_G = y_eq E + t_i I_F
//   U_F = t_u E + z I_F
struct HybridInterfaceMatrix {
  CMat y_eq;  // G x G
  CMat t_i;   // G x F
  CMat t_u;   // F x G, equals -t_i transposed for symmetric networks
  CMat z;     // F x F
};

// Hybrid form with all SG EMF nodes merged into a single COI node.
struct CoiInterfaceMatrix {
  Complex y_eq{0.0, 0.0};
  CVec t_i;  // F
  CVec t_u;  // F
  CMat z;    // F x F
};

// Full admittance matrix over buses + EMF nodes, loads and charging folded in.
CMat assemble_admittance(const NetworkCase& net);

PartitionedAdmittance build_partitioned_admittance(const NetworkCase& net);

// Eliminate the N class: reduced_AB = Y_AB - Y_AN (Y_NN)^-1 Y_NB.
ReducedAdmittance kron_reduce(const PartitionedAdmittance& p);

HybridInterfaceMatrix hybrid_interface(const ReducedAdmittance& r);

// Merge all G rows/columns into one node (EMFs tied together).
ReducedAdmittance collapse_sg_nodes(const ReducedAdmittance& r);

CoiInterfaceMatrix coi_interface(const ReducedAdmittance& r);

// Closed-form power terms. Angles in radians, magnitudes per-unit,
// powers per-unit on the system base.

// SG-SG tie: E_i E_j (G cos(d_i - d_j) + B sin(d_i - d_j)), y = G + jB.
double tie_power_sg_sg(double e_i, double delta_i, double e_j, double delta_j,
                       Complex y_ij);

// SG local: E^2 G from the diagonal element.
double local_power_sg(double e, Complex y_ii);

// GFL local: I^2 R from the diagonal impedance element.
double local_power_gfl(double i_mag, Complex z_ff);

// SG-GFL tie in the equivalent-source form with V = -Re(t), W = Im(t):
//   E I (-V cos(delta - theta) + W sin(delta - theta)).
// Evaluated with (e, delta) = SG EMF and (i, theta) = GFL current this is
// the SG-side received power; swapping the argument pairs gives the
// companion GFL-side expression, and the two always sum to
// -2 E I V cos(delta - theta).
double tie_power_sg_gfl(double a_mag, double a_angle, double b_mag,
                        double b_angle, Complex t);

// Per-side powers as the network actually delivers them; these are what
// the simulators book. The SG side coincides with tie_power_sg_gfl, the
// GFL side is its negation under swapped arguments.
double tie_power_sg_gfl_sg_side(double e, double delta, double i_mag,
                                double theta, Complex t);
double tie_power_sg_gfl_gfl_side(double e, double delta, double i_mag,
                                 double theta, Complex t);

// GFL-GFL tie via the impedance block: I_f I_g (R cos(th_f - th_g)
// - X sin(th_f - th_g)), z = R + jX, booked at converter f.
double tie_power_gfl_gfl(double i_f, double theta_f, double i_g,
                         double theta_g, Complex z_fg);

}  // namespace coidyn
