#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "coidyn/errors.hpp"
#include "coidyn/linalg.hpp"
#include "coidyn/network.hpp"

using namespace coidyn;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Connected random network: spanning tree plus extra chords. SG taps and
// GFL terminals land on disjoint buses, with at least one interior bus left.
NetworkCase random_network(std::mt19937_64& rng, int bus_count, int sg_count,
                           int gfl_count, bool lossless) {
  std::uniform_real_distribution<double> rr(0.005, 0.05), xx(0.02, 0.3);
  std::uniform_real_distribution<double> bb(0.0, 0.2), load(0.1, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  NetworkCase net;
  net.bus_count = bus_count;
  for (int b = 1; b < bus_count; ++b) {
    std::uniform_int_distribution<int> parent(0, b - 1);
    const double r = lossless ? 0.0 : rr(rng);
    net.branches.push_back(Branch{parent(rng), b, Complex(r, xx(rng)),
                                  u01(rng) < 0.4 ? bb(rng) : 0.0});
  }
  const int chords = bus_count / 3;
  for (int c = 0; c < chords; ++c) {
    std::uniform_int_distribution<int> pick(0, bus_count - 1);
    const int i = pick(rng), j = pick(rng);
    if (i == j) continue;
    const double r = lossless ? 0.0 : rr(rng);
    net.branches.push_back(Branch{i, j, Complex(r, xx(rng)), 0.0});
  }
  for (int b = 0; b < bus_count; ++b) {
    if (u01(rng) < 0.5) {
      const double p = lossless ? 0.0 : load(rng);
      net.shunt_loads.push_back(ShuntLoad{b, Complex(p, -load(rng) * 0.4)});
    }
  }

  std::vector<int> perm(static_cast<size_t>(bus_count));
  for (int b = 0; b < bus_count; ++b) perm[static_cast<size_t>(b)] = b;
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int g = 0; g < sg_count; ++g) {
    net.sg_units.push_back(SgTap{perm[static_cast<size_t>(g)], 0.05 + 0.2 * u01(rng)});
  }
  for (int f = 0; f < gfl_count; ++f) {
    net.gfl_buses.push_back(perm[static_cast<size_t>(sg_count + f)]);
  }
  return net;
}

CVec random_phasors(std::mt19937_64& rng, int n, double mag_lo, double mag_hi) {
  std::uniform_real_distribution<double> mag(mag_lo, mag_hi), ang(-kPi, kPi);
  CVec v(n);
  for (int i = 0; i < n; ++i) v(i) = std::polar(mag(rng), ang(rng));
  return v;
}

// Dense oracle: EMF nodes hold fixed voltages, GFL buses inject fixed
// currents, every other bus injects nothing. Solves the unreduced matrix
// for the bus voltages and reads the EMF-node currents back.
struct DenseSolution {
  CVec i_g;
  CVec u_f;
};

DenseSolution dense_boundary(const NetworkCase& net, const CVec& emf,
                             const CVec& i_f) {
  const CMat y = assemble_admittance(net);
  const int nb = net.bus_count;
  const int ng = static_cast<int>(net.sg_units.size());

  CMat y_bb = y.topLeftCorner(nb, nb);
  CMat y_bg = y.topRightCorner(nb, ng);
  CVec inj = CVec::Zero(nb);
  for (size_t k = 0; k < net.gfl_buses.size(); ++k) {
    inj(net.gfl_buses[k]) += i_f(static_cast<int>(k));
  }
  CheckedLu lu(y_bb, "dense oracle");
  const CVec rhs = inj - y_bg * emf;
  const CVec v_bus = lu.solve(rhs);

  DenseSolution sol;
  sol.i_g = y.bottomRightCorner(ng, ng) * emf + y.bottomLeftCorner(ng, nb) * v_bus;
  sol.u_f.resize(static_cast<int>(net.gfl_buses.size()));
  for (size_t k = 0; k < net.gfl_buses.size(); ++k) {
    sol.u_f(static_cast<int>(k)) = v_bus(net.gfl_buses[k]);
  }
  return sol;
}

double rel_norm(const CVec& got, const CVec& want) {
  const double scale = std::max(want.norm(), 1e-9);
  return (got - want).norm() / scale;
}

}  // namespace

TEST_CASE("assemble_admittance entries for a hand-built two-bus case") {
  // Branch 0-1 with charging, load at bus 1, one SG tap at bus 0.
  const Complex zs(0.02, 0.1);
  const Complex ys = 1.0 / zs;
  NetworkCase net;
  net.bus_count = 2;
  net.branches.push_back(Branch{0, 1, zs, 0.04});
  net.shunt_loads.push_back(ShuntLoad{1, Complex(0.5, -0.2)});
  net.sg_units.push_back(SgTap{0, 0.25});

  const CMat y = assemble_admittance(net);
  REQUIRE(y.rows() == 3);
  REQUIRE(y.cols() == 3);

  const Complex y_tap = 1.0 / Complex(0.0, 0.25);
  CHECK(std::abs(y(0, 0) - (ys + Complex(0.0, 0.02) + y_tap)) < 1e-14);
  CHECK(std::abs(y(1, 1) - (ys + Complex(0.0, 0.02) + Complex(0.5, -0.2))) < 1e-14);
  CHECK(std::abs(y(0, 1) + ys) < 1e-14);
  CHECK(std::abs(y(1, 0) + ys) < 1e-14);
  CHECK(std::abs(y(2, 2) - y_tap) < 1e-14);
  CHECK(std::abs(y(0, 2) + y_tap) < 1e-14);
  CHECK(std::abs(y(2, 0) + y_tap) < 1e-14);
  CHECK(std::abs(y(1, 2)) == 0.0);
}

TEST_CASE("partition classes cover every node exactly once") {
  std::mt19937_64 rng(42);
  const NetworkCase net = random_network(rng, 12, 3, 2, false);
  const PartitionedAdmittance p = build_partitioned_admittance(net);

  CHECK(p.g_nodes.size() == 3);
  CHECK(p.f_nodes.size() == 2);
  CHECK(p.n_nodes.size() == 12 - 2);
  CHECK(p.ygg.rows() == 3);
  CHECK(p.yff.rows() == 2);
  CHECK(p.ynn.rows() == 10);

  std::vector<int> all;
  all.insert(all.end(), p.g_nodes.begin(), p.g_nodes.end());
  all.insert(all.end(), p.f_nodes.begin(), p.f_nodes.end());
  all.insert(all.end(), p.n_nodes.begin(), p.n_nodes.end());
  std::sort(all.begin(), all.end());
  for (size_t i = 0; i < all.size(); ++i) {
    CHECK(all[i] == static_cast<int>(i));
  }
}

TEST_CASE("kron_reduce matches the Schur complement") {
  std::mt19937_64 rng(43);
  const NetworkCase net = random_network(rng, 9, 2, 1, false);
  const PartitionedAdmittance p = build_partitioned_admittance(net);
  const ReducedAdmittance r = kron_reduce(p);

  const Eigen::PartialPivLU<CMat> lu(p.ynn);
  const CMat gg = p.ygg - p.ygn * lu.solve(p.yng);
  const CMat gf = p.ygf - p.ygn * lu.solve(p.ynf);
  const CMat fg = p.yfg - p.yfn * lu.solve(p.yng);
  const CMat ff = p.yff - p.yfn * lu.solve(p.ynf);

  CHECK((r.gg - gg).norm() < 1e-11 * gg.norm());
  CHECK((r.gf - gf).norm() < 1e-11 * std::max(gf.norm(), 1.0));
  CHECK((r.fg - fg).norm() < 1e-11 * std::max(fg.norm(), 1.0));
  CHECK((r.ff - ff).norm() < 1e-11 * ff.norm());
}

TEST_CASE("reduced and hybrid forms reproduce dense boundary solutions") {
  std::mt19937_64 rng(1001);
  for (int trial = 0; trial < 25; ++trial) {
    std::uniform_int_distribution<int> buses(4, 16), sgs(1, 3), gfls(0, 2);
    const int nb = buses(rng);
    const int ng = std::min(sgs(rng), nb - 2);
    const int nf = std::min(gfls(rng), nb - ng - 1);
    const NetworkCase net = random_network(rng, nb, ng, nf, false);

    const CVec emf = random_phasors(rng, ng, 0.9, 1.2);
    const CVec i_f = random_phasors(rng, nf, 0.1, 0.8);
    const DenseSolution dense = dense_boundary(net, emf, i_f);

    const ReducedAdmittance r = kron_reduce(build_partitioned_admittance(net));
    CHECK(rel_norm(r.gg * emf + r.gf * dense.u_f, dense.i_g) < 1e-10);
    if (nf > 0) {
      CHECK(rel_norm(r.fg * emf + r.ff * dense.u_f, i_f) < 1e-10);
    }

    const HybridInterfaceMatrix h = hybrid_interface(r);
    CHECK(rel_norm(h.y_eq * emf + h.t_i * i_f, dense.i_g) < 1e-10);
    if (nf > 0) {
      CHECK(rel_norm(h.t_u * emf + h.z * i_f, dense.u_f) < 1e-10);
    }
  }
}

TEST_CASE("voltage and current tie blocks are negative transposes") {
  std::mt19937_64 rng(2002);
  for (int trial = 0; trial < 20; ++trial) {
    const NetworkCase net = random_network(rng, 10, 2, 2, trial % 2 == 0);
    const HybridInterfaceMatrix h =
        hybrid_interface(kron_reduce(build_partitioned_admittance(net)));
    CHECK((h.t_u + h.t_i.transpose()).norm() < 1e-12 * std::max(h.t_i.norm(), 1.0));
  }
}

TEST_CASE("machine tie powers cancel pairwise on lossless networks") {
  std::mt19937_64 rng(3003);
  std::uniform_real_distribution<double> mag(0.9, 1.2), ang(-kPi, kPi);
  int draws = 0;
  while (draws < 1000) {
    const NetworkCase net = random_network(rng, 8, 3, 0, true);
    const ReducedAdmittance r = kron_reduce(build_partitioned_admittance(net));
    // Reduction of a lossless network stays lossless.
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        CHECK(std::abs(r.gg(i, j).real()) < 1e-12);
      }
    }
    for (int rep = 0; rep < 50; ++rep, ++draws) {
      const double e1 = mag(rng), e2 = mag(rng), e3 = mag(rng);
      const double d1 = ang(rng), d2 = ang(rng), d3 = ang(rng);
      const double p12 = tie_power_sg_sg(e1, d1, e2, d2, r.gg(0, 1));
      const double p21 = tie_power_sg_sg(e2, d2, e1, d1, r.gg(1, 0));
      const double p13 = tie_power_sg_sg(e1, d1, e3, d3, r.gg(0, 2));
      const double p31 = tie_power_sg_sg(e3, d3, e1, d1, r.gg(2, 0));
      CHECK(std::abs(p12 + p21) < 1e-12);
      CHECK(std::abs(p13 + p31) < 1e-12);
    }
  }
}

TEST_CASE("machine-converter tie sides sum to the co-direction term") {
  std::mt19937_64 rng(4004);
  std::uniform_real_distribution<double> mag(0.2, 1.5), ang(-kPi, kPi);
  std::uniform_real_distribution<double> tre(-2.0, 2.0);
  for (int draw = 0; draw < 1000; ++draw) {
    const double e = mag(rng), delta = ang(rng);
    const double i = mag(rng), theta = ang(rng);
    const Complex t(tre(rng), tre(rng));
    const double v = -t.real();

    const double sg_side = tie_power_sg_gfl(e, delta, i, theta, t);
    const double swapped = tie_power_sg_gfl(i, theta, e, delta, t);
    const double want = -2.0 * e * i * v * std::cos(delta - theta);
    CHECK(std::abs(sg_side + swapped - want) < 1e-12 * std::max(std::abs(want), 1.0));

    // Booked per-side terms: SG side is the base form, converter side its
    // negation under swapped arguments, so the pair sums to zero.
    CHECK(std::abs(tie_power_sg_gfl_sg_side(e, delta, i, theta, t) - sg_side) < 1e-12);
    CHECK(std::abs(tie_power_sg_gfl_gfl_side(e, delta, i, theta, t) + swapped) < 1e-12);
  }
}

TEST_CASE("closed-form local and converter tie powers") {
  CHECK(local_power_sg(1.1, Complex(0.3, -0.8)) ==
        doctest::Approx(1.1 * 1.1 * 0.3).epsilon(1e-14));
  CHECK(local_power_gfl(0.4, Complex(0.05, 0.2)) ==
        doctest::Approx(0.4 * 0.4 * 0.05).epsilon(1e-14));

  const double i_f = 0.3, th_f = 0.4, i_g = 0.7, th_g = -0.9;
  const Complex z(0.02, 0.15);
  const double want = i_f * i_g * (z.real() * std::cos(th_f - th_g) -
                                   z.imag() * std::sin(th_f - th_g));
  CHECK(tie_power_gfl_gfl(i_f, th_f, i_g, th_g, z) ==
        doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("collapse_sg_nodes sums the machine blocks") {
  std::mt19937_64 rng(5005);
  const NetworkCase net = random_network(rng, 10, 3, 2, false);
  const ReducedAdmittance r = kron_reduce(build_partitioned_admittance(net));
  const ReducedAdmittance c = collapse_sg_nodes(r);

  REQUIRE(c.gg.rows() == 1);
  REQUIRE(c.gg.cols() == 1);
  CHECK(std::abs(c.gg(0, 0) - r.gg.sum()) < 1e-12);
  for (int f = 0; f < 2; ++f) {
    CHECK(std::abs(c.gf(0, f) - r.gf.col(f).sum()) < 1e-12);
    CHECK(std::abs(c.fg(f, 0) - r.fg.row(f).sum()) < 1e-12);
  }
  CHECK((c.ff - r.ff).norm() == 0.0);

  // Physically: equal EMFs at every machine node make the collapse exact.
  const Complex e = std::polar(1.05, 0.3);
  const CVec u_full = r.fg * CVec::Constant(3, e);
  const CVec u_coll = c.fg * CVec::Constant(1, e);
  CHECK((u_full - u_coll).norm() < 1e-12);
}

TEST_CASE("coi_interface matches the hybrid of the collapsed network") {
  std::mt19937_64 rng(6006);
  const NetworkCase net = random_network(rng, 11, 3, 2, false);
  const ReducedAdmittance r = kron_reduce(build_partitioned_admittance(net));
  const CoiInterfaceMatrix coi = coi_interface(r);
  const HybridInterfaceMatrix h = hybrid_interface(collapse_sg_nodes(r));

  CHECK(std::abs(coi.y_eq - h.y_eq(0, 0)) < 1e-12);
  for (int f = 0; f < 2; ++f) {
    CHECK(std::abs(coi.t_i(f) - h.t_i(0, f)) < 1e-12);
    CHECK(std::abs(coi.t_u(f) - h.t_u(f, 0)) < 1e-12);
  }
  CHECK((coi.z - h.z).norm() < 1e-12);
}

TEST_CASE("singular solves name the failing context") {
  CMat singular = CMat::Zero(2, 2);
  singular(0, 0) = Complex(1.0, 0.0);
  CHECK_THROWS_AS(CheckedLu(singular, "unit test"), SingularMatrixError);
  try {
    CheckedLu lu(singular, "unit test");
  } catch (const SingularMatrixError& e) {
    CHECK(std::string(e.what()).find("unit test") != std::string::npos);
  }
}
