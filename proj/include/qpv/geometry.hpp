#pragma once

// Spatial target regions.
//
// Frame: Vap at the origin, Vb at (d, 0, 0). With l_A, l_B the distances to
// the verifiers, the quantum region is
//     l_A <= R_A,  l_B <= R_B,  l_A + l_B <= M1,  l_A + l_B <= M2
// and the comparable classical region is the union of the two lenses
//     {l_A <= R_A, l_A + l_B <= M2}  and  {l_B <= R_B, l_A + l_B <= M1}.
// Every region is a solid of revolution about the axis, so it is described
// by the largest squared radius ρ²(x) at each axis coordinate. Ellipsoids
// {l_A + l_B <= M} are  b²(x - d/2)² + a²ρ² <= a²b²  with a = M/2,
// b² = a² - d²/4.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "qpv/core.hpp"
#include "qpv/protocol.hpp"
#include "qpv/rng.hpp"

namespace qpv {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kMetersPerNs = kSpeedOfLight * 1e-9;

struct TimingGeometry {
  double s_a_ns = 1291.0, s_a_sd = 0.5;
  double s_b_ns = 1429.1, s_b_sd = 0.6;
  double r_a_ns = 2340.3, r_a_sd = 0.5;
  double r_b_ns = 2207.7, r_b_sd = 0.6;
  double d_m = 195.1, d_sd = 0.3;

  void validate() const {
    if (!(s_a_ns <= r_a_ns && s_b_ns <= r_b_ns)) throw invalid_input("receive times must not precede send times");
    if (!(d_m > 0)) throw invalid_input("verifier separation must be positive");
    if (s_a_sd < 0 || s_b_sd < 0 || r_a_sd < 0 || r_b_sd < 0 || d_sd < 0) throw invalid_input("uncertainties must be >= 0");
  }

  /// Timings for which the quantum region is a single point.
  static TimingGeometry ideal(double d_m) {
    TimingGeometry t;
    const double half = d_m / kMetersPerNs / 2.0;
    t.s_a_ns = 0.0;
    t.s_b_ns = 0.0;
    t.r_a_ns = 2.0 * half;
    t.r_b_ns = 2.0 * half;
    t.d_m = d_m;
    t.s_a_sd = t.s_b_sd = t.r_a_sd = t.r_b_sd = t.d_sd = 0.0;
    return t;
  }
};

struct RegionSpec {
  double r_a = 0.0;  // sphere radius about Vap
  double r_b = 0.0;  // sphere radius about Vb
  double m1 = 0.0;   // l_A + l_B bound, c(r_b - s_a)
  double m2 = 0.0;   // l_A + l_B bound, c(r_a - s_b)
  double d = 1.0;    // verifier separation
};

inline RegionSpec region_spec(const TimingGeometry& tg) {
  tg.validate();
  return {kMetersPerNs * (tg.r_a_ns - tg.s_a_ns) / 2.0, kMetersPerNs * (tg.r_b_ns - tg.s_b_ns) / 2.0,
          kMetersPerNs * (tg.r_b_ns - tg.s_a_ns), kMetersPerNs * (tg.r_a_ns - tg.s_b_ns), tg.d_m};
}

using Point3 = std::array<double, 3>;

namespace detail {
inline std::pair<double, double> distances(const Point3& p, double d) {
  const double r2 = p[1] * p[1] + p[2] * p[2];
  return {std::sqrt(p[0] * p[0] + r2), std::sqrt((p[0] - d) * (p[0] - d) + r2)};
}
// Slack on l_A + l_B bounds so points on a flat ellipsoid (M = d) survive rounding.
inline double sum_slack(double d) { return 1e-12 * d; }
}  // namespace detail

inline bool point_in_quantum_region(const Point3& p, const RegionSpec& s) {
  auto [la, lb] = detail::distances(p, s.d);
  const double sum = la + lb - detail::sum_slack(s.d);
  return la <= s.r_a && lb <= s.r_b && sum <= s.m1 && sum <= s.m2;
}

inline bool point_in_classical_region(const Point3& p, const RegionSpec& s) {
  auto [la, lb] = detail::distances(p, s.d);
  const double sum = la + lb - detail::sum_slack(s.d);
  return (la <= s.r_a && sum <= s.m2) || (lb <= s.r_b && sum <= s.m1);
}

enum class RegionKind { quantum, classical, sphere_a };

inline bool point_in_region(RegionKind k, const Point3& p, const RegionSpec& s) {
  switch (k) {
    case RegionKind::quantum:
      return point_in_quantum_region(p, s);
    case RegionKind::classical:
      return point_in_classical_region(p, s);
    case RegionKind::sphere_a:
      return detail::distances(p, s.d).first <= s.r_a;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Radial profile ρ²(x) for the solids of revolution.

namespace detail {

struct Quadric {  // ρ² <= c0 + c1 x + c2 x² ; empty if `empty`
  double c0 = 0, c1 = 0, c2 = 0;
  bool empty = false;
  double operator()(double x) const { return empty ? -INFINITY : c0 + x * (c1 + x * c2); }
};

inline Quadric sphere(double center, double r) {
  if (r < 0) return {0, 0, 0, true};
  return {r * r - center * center, 2 * center, -1.0};
}

inline Quadric ellipsoid(double d, double m) {
  const double a = m / 2.0, b2 = a * a - d * d / 4.0;
  if (!(b2 > 0)) return {0, 0, 0, true};
  // ρ² <= b² (1 - (x - d/2)² / a²)
  const double c = d / 2.0, k = b2 / (a * a);
  return {b2 - k * c * c, 2 * k * c, -k};
}

struct Profile {
  Quadric sa, sb, e1, e2;
  explicit Profile(const RegionSpec& s)
      : sa(sphere(0.0, s.r_a)), sb(sphere(s.d, s.r_b)), e1(ellipsoid(s.d, s.m1)), e2(ellipsoid(s.d, s.m2)) {}

  double quantum(double x) const { return std::min(std::min(sa(x), sb(x)), std::min(e1(x), e2(x))); }
  double classical(double x) const { return std::max(std::min(sa(x), e2(x)), std::min(sb(x), e1(x))); }
  double sphere_a(double x) const { return sa(x); }
  double operator()(RegionKind k, double x) const {
    return k == RegionKind::quantum ? quantum(x) : k == RegionKind::classical ? classical(x) : sphere_a(x);
  }
};

inline void add_roots(const Quadric& q, std::vector<double>& out) {
  if (q.empty) return;
  if (std::abs(q.c2) < 1e-300) {
    if (std::abs(q.c1) > 0) out.push_back(-q.c0 / q.c1);
    return;
  }
  const double disc = q.c1 * q.c1 - 4 * q.c2 * q.c0;
  if (disc < 0) return;
  const double sq = std::sqrt(disc);
  out.push_back((-q.c1 + sq) / (2 * q.c2));
  out.push_back((-q.c1 - sq) / (2 * q.c2));
}

inline Quadric diff(const Quadric& a, const Quadric& b) { return {a.c0 - b.c0, a.c1 - b.c1, a.c2 - b.c2, a.empty || b.empty}; }

}  // namespace detail

/// Axis-aligned bounds (x range, max radius) enclosing the region, padded 1%.
struct RegionBox {
  double x0 = 0, x1 = 0, rho = 0;
  bool empty() const { return !(x1 > x0) || rho < 0; }  // rho = 0 still has an axis segment
};

inline RegionBox region_box(RegionKind k, const RegionSpec& s) {
  auto lens = [](double c, double r, double d, double m) {
    RegionBox b;
    const double a = m / 2.0, b2 = a * a - d * d / 4.0;
    if (r <= 0 || m < d) return RegionBox{0, 0, 0};
    b.x0 = std::max(c - r, d / 2.0 - a);
    b.x1 = std::min(c + r, d / 2.0 + a);
    b.rho = std::min(r, std::sqrt(std::max(0.0, b2)));
    return b;
  };
  RegionBox b;
  switch (k) {
    case RegionKind::sphere_a:
      b = {-s.r_a, s.r_a, s.r_a};
      break;
    case RegionKind::quantum: {
      // Smaller sphere pair intersection, clipped by both ellipsoids.
      const auto la = lens(0.0, s.r_a, s.d, std::min(s.m1, s.m2));
      const auto lb = lens(s.d, s.r_b, s.d, std::min(s.m1, s.m2));
      b = {std::max(la.x0, lb.x0), std::min(la.x1, lb.x1), std::min(la.rho, lb.rho)};
      break;
    }
    case RegionKind::classical: {
      const auto la = lens(0.0, s.r_a, s.d, s.m2);
      const auto lb = lens(s.d, s.r_b, s.d, s.m1);
      if (la.empty()) {
        b = lb;
      } else if (lb.empty()) {
        b = la;
      } else {
        b = {std::min(la.x0, lb.x0), std::max(la.x1, lb.x1), std::max(la.rho, lb.rho)};
      }
      break;
    }
  }
  if (b.empty()) return {0, 0, 0};
  const double pad = 0.01 * std::max(b.x1 - b.x0, b.rho);
  return {b.x0 - pad, b.x1 + pad, b.rho + pad};
}

/// Length on the axis (dim 1), area of the axial half-plane section doubled
/// (dim 2) or volume (dim 3), by adaptive quadrature of the radial profile.
inline double region_size_exact(RegionKind k, const RegionSpec& s, int dim) {
  if (dim < 1 || dim > 3) throw invalid_input("dimension must be 1, 2 or 3");
  const detail::Profile prof(s);
  const auto box = region_box(k, s);
  if (!(box.x1 > box.x0)) return 0.0;
  if (dim == 1) {
    // On the axis the boundaries are explicit; this also covers flat ellipsoids.
    std::vector<double> cuts{box.x0, box.x1, -s.r_a, s.r_a, s.d - s.r_b, s.d + s.r_b};
    for (double m : {s.m1, s.m2}) cuts.insert(cuts.end(), {(s.d - m) / 2, (s.d + m) / 2});
    std::sort(cuts.begin(), cuts.end());
    double len = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double lo = std::max(cuts[i], box.x0), hi = std::min(cuts[i + 1], box.x1);
      if (hi - lo > 1e-9 * (s.d + s.r_a + s.r_b) && point_in_region(k, {0.5 * (lo + hi), 0, 0}, s)) len += hi - lo;
    }
    return len;
  }
  std::vector<double> cuts{box.x0, box.x1};
  const std::array<detail::Quadric, 4> qs{prof.sa, prof.sb, prof.e1, prof.e2};
  for (std::size_t i = 0; i < qs.size(); ++i) {
    detail::add_roots(qs[i], cuts);
    for (std::size_t j = i + 1; j < qs.size(); ++j) detail::add_roots(detail::diff(qs[i], qs[j]), cuts);
  }
  std::sort(cuts.begin(), cuts.end());
  boost::math::quadrature::tanh_sinh<double> integrator;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = std::max(cuts[i], box.x0), hi = std::min(cuts[i + 1], box.x1);
    // Slivers below rounding resolution contribute nothing and upset the quadrature.
    if (!(hi - lo > 1e-9 * (s.d + s.r_a + s.r_b))) continue;
    if (!(prof(k, 0.5 * (lo + hi)) >= 0)) continue;
    if (dim == 1) {
      total += hi - lo;
    } else if (dim == 2) {
      total += 2.0 * integrator.integrate([&](double x) { return std::sqrt(std::max(0.0, prof(k, x))); }, lo, hi);
    } else {
      total += std::numbers::pi * integrator.integrate([&](double x) { return std::max(0.0, prof(k, x)); }, lo, hi);
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Monte Carlo sizes

struct SizeEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  std::uint64_t hits = 0;
  std::uint64_t samples = 0;
};

/// Unit-square points shared across evaluations; each estimate applies a
/// uniform random shift modulo 1, which keeps every estimate unbiased.
/// `pseudo_random` draws Philox points; `kronecker` uses the additive
/// recurrence with the plastic-number generator (low discrepancy in 2D).
enum class PointSet { pseudo_random, kronecker };

struct UnitPoints {
  std::vector<double> u, v;

  UnitPoints() = default;
  UnitPoints(std::size_t n, std::uint64_t seed, PointSet kind = PointSet::pseudo_random) : u(n), v(n) {
    if (kind == PointSet::kronecker) {
      constexpr double g = 1.32471795724474602596;  // x^3 = x + 1
      const double a1 = 1.0 / g, a2 = 1.0 / (g * g);
      for (std::size_t i = 0; i < n; ++i) {
        const double k = static_cast<double>(i) + 0.5;
        u[i] = k * a1 - std::floor(k * a1);
        v[i] = k * a2 - std::floor(k * a2);
      }
      return;
    }
    PhiloxEngine rng(seed, 0x5EED);
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = rng.uniform();
      v[i] = rng.uniform();
    }
  }
  std::size_t size() const { return u.size(); }
};

namespace detail {

/// Coefficients of the four profile quadrics in a form that avoids branches.
struct Kernel {
  std::array<double, 4> c0, c1, c2;
  std::array<bool, 4> empty;
  explicit Kernel(const Profile& p) {
    const std::array<const Quadric*, 4> q{&p.sa, &p.sb, &p.e1, &p.e2};
    for (int i = 0; i < 4; ++i) {
      c0[static_cast<std::size_t>(i)] = q[static_cast<std::size_t>(i)]->c0;
      c1[static_cast<std::size_t>(i)] = q[static_cast<std::size_t>(i)]->c1;
      c2[static_cast<std::size_t>(i)] = q[static_cast<std::size_t>(i)]->c2;
      empty[static_cast<std::size_t>(i)] = q[static_cast<std::size_t>(i)]->empty;
      if (empty[static_cast<std::size_t>(i)]) {
        c0[static_cast<std::size_t>(i)] = -1.0;
        c1[static_cast<std::size_t>(i)] = 0.0;
        c2[static_cast<std::size_t>(i)] = 0.0;
      }
    }
  }
};

/// Counts points with ρ² <= profile(x), x = x0 + (u + su mod 1) w, ρ² = g(v + sv mod 1).
/// `radial` selects ρ² = (v h)² (planar section) or ρ² = v h² (volume).
template <bool Classical, bool Volume>
std::uint64_t count_hits(const Kernel& k, const UnitPoints& pts, double su, double sv, double x0, double w, double h) {
  const std::size_t n = pts.size();
  const double* u = pts.u.data();
  const double* v = pts.v.data();
  const double a0 = k.c0[0], a1 = k.c1[0], a2 = k.c2[0];
  const double b0 = k.c0[1], b1 = k.c1[1], b2 = k.c2[1];
  const double e0 = k.c0[2], e1 = k.c1[2], e2 = k.c2[2];
  const double f0 = k.c0[3], f1 = k.c1[3], f2 = k.c2[3];
  const double h2 = h * h;
  std::uint64_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double uu = u[i] + su;
    uu -= uu >= 1.0 ? 1.0 : 0.0;
    double vv = v[i] + sv;
    vv -= vv >= 1.0 ? 1.0 : 0.0;
    const double x = x0 + uu * w;
    const double r2 = Volume ? vv * h2 : vv * vv * h2;
    const bool in_a = r2 <= a0 + x * (a1 + x * a2);
    const bool in_b = r2 <= b0 + x * (b1 + x * b2);
    const bool in_1 = r2 <= e0 + x * (e1 + x * e2);
    const bool in_2 = r2 <= f0 + x * (f1 + x * f2);
    if constexpr (Classical)
      hits += static_cast<std::uint64_t>((in_a & in_2) | (in_b & in_1));
    else
      hits += static_cast<std::uint64_t>(in_a & in_b & in_1 & in_2);
  }
  return hits;
}

/// 1D: points on the axis, exact distance sums (valid for degenerate ellipsoids).
template <bool Classical>
std::uint64_t count_hits_axis(const RegionSpec& s, const UnitPoints& pts, double su, double x0, double w) {
  std::uint64_t hits = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double uu = pts.u[i] + su;
    uu -= uu >= 1.0 ? 1.0 : 0.0;
    const double x = x0 + uu * w;
    const double la = std::abs(x), lb = std::abs(x - s.d), sum = la + lb - sum_slack(s.d);
    bool in;
    if constexpr (Classical)
      in = (la <= s.r_a && sum <= s.m2) || (lb <= s.r_b && sum <= s.m1);
    else
      in = la <= s.r_a && lb <= s.r_b && sum <= s.m1 && sum <= s.m2;
    hits += in;
  }
  return hits;
}

}  // namespace detail

/// Monte Carlo size with a given shift of the shared point set.
inline SizeEstimate region_size_shifted(RegionKind k, const RegionSpec& s, int dim, const UnitPoints& pts, double su,
                                        double sv) {
  if (dim < 1 || dim > 3) throw invalid_input("dimension must be 1, 2 or 3");
  SizeEstimate e;
  e.samples = pts.size();
  const auto box = region_box(k, s);
  if (!(box.x1 > box.x0) || pts.size() == 0) return e;
  const double w = box.x1 - box.x0;
  double measure;
  if (dim == 1) {
    e.hits = k == RegionKind::classical ? detail::count_hits_axis<true>(s, pts, su, box.x0, w)
                                        : detail::count_hits_axis<false>(s, pts, su, box.x0, w);
    if (k == RegionKind::sphere_a) {
      e.hits = 0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        double uu = pts.u[i] + su;
        uu -= uu >= 1.0 ? 1.0 : 0.0;
        e.hits += std::abs(box.x0 + uu * w) <= s.r_a;
      }
    }
    measure = w;
  } else {
    detail::Profile prof(s);
    if (k == RegionKind::sphere_a) {
      prof.sb = prof.sa;
      prof.e1 = prof.e2 = detail::Quadric{1e300, 0, 0, false};
    }
    const detail::Kernel ker(prof);
    const bool cl = k == RegionKind::classical;
    if (dim == 2) {
      e.hits = cl ? detail::count_hits<true, false>(ker, pts, su, sv, box.x0, w, box.rho)
                  : detail::count_hits<false, false>(ker, pts, su, sv, box.x0, w, box.rho);
      measure = 2.0 * w * box.rho;
    } else {
      e.hits = cl ? detail::count_hits<true, true>(ker, pts, su, sv, box.x0, w, box.rho)
                  : detail::count_hits<false, true>(ker, pts, su, sv, box.x0, w, box.rho);
      measure = std::numbers::pi * box.rho * box.rho * w;
    }
  }
  const double p = static_cast<double>(e.hits) / static_cast<double>(e.samples);
  e.value = p * measure;
  e.stderr_ = std::sqrt(p * (1.0 - p) / static_cast<double>(e.samples)) * measure;
  return e;
}

/// Monte Carlo size of a region: dim 1 = length on the verifier axis,
/// 2 = area of a plane containing the axis, 3 = volume.
inline SizeEstimate region_size(RegionKind k, const RegionSpec& s, int dim, std::size_t samples, std::uint64_t seed) {
  const UnitPoints pts(samples, seed);
  return region_size_shifted(k, s, dim, pts, 0.0, 0.0);
}

/// Direct Monte Carlo in a 3D box using the exact point predicates.
inline SizeEstimate region_volume_direct(RegionKind k, const RegionSpec& s, std::size_t samples, std::uint64_t seed) {
  SizeEstimate e;
  e.samples = samples;
  const auto box = region_box(k, s);
  if (!(box.x1 > box.x0)) return e;
  PhiloxEngine rng(seed, 0xD1);
  for (std::size_t i = 0; i < samples; ++i) {
    const Point3 p{box.x0 + rng.uniform() * (box.x1 - box.x0), (2 * rng.uniform() - 1) * box.rho,
                   (2 * rng.uniform() - 1) * box.rho};
    e.hits += point_in_region(k, p, s);
  }
  const double measure = (box.x1 - box.x0) * 4 * box.rho * box.rho;
  const double p = static_cast<double>(e.hits) / static_cast<double>(samples);
  e.value = p * measure;
  e.stderr_ = std::sqrt(p * (1 - p) / static_cast<double>(samples)) * measure;
  return e;
}

/// Quantum and classical sizes in all three dimensions from one pass over
/// the classical bounding box (the quantum region lies inside it).
struct FusedSizes {
  std::array<double, 4> quantum{};    // index = dim
  std::array<double, 4> classical{};
};

inline FusedSizes region_sizes_fused(const RegionSpec& s, const UnitPoints& pts, double su, double sv) {
  FusedSizes out;
  const auto box = region_box(RegionKind::classical, s);
  if (box.empty() || pts.size() == 0) return out;
  const detail::Kernel k{detail::Profile(s)};
  const double x0 = box.x0, w = box.x1 - box.x0, h2 = box.rho * box.rho;
  std::uint64_t q1 = 0, c1 = 0, q2 = 0, c2 = 0, q3 = 0, c3 = 0;
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) {
    double uu = pts.u[i] + su;
    if (uu >= 1.0) uu -= 1.0;
    double vv = pts.v[i] + sv;
    if (vv >= 1.0) vv -= 1.0;
    const double x = x0 + uu * w;
    const double pa = k.c0[0] + x * (k.c1[0] + x * k.c2[0]);
    const double pb = k.c0[1] + x * (k.c1[1] + x * k.c2[1]);
    const double p1 = k.c0[2] + x * (k.c1[2] + x * k.c2[2]);
    const double p2 = k.c0[3] + x * (k.c1[3] + x * k.c2[3]);
    const double la = std::min(pa, p2), lb = std::min(pb, p1);
    const double cl = std::max(la, lb);
    if (cl < 0) continue;
    ++c1;
    const double r3 = vv * h2, r2 = vv * r3;
    c2 += r2 <= cl;
    c3 += r3 <= cl;
    const double qu = std::min(la, lb);
    if (qu < 0) continue;
    ++q1;
    q2 += r2 <= qu;
    q3 += r3 <= qu;
  }
  const double N = static_cast<double>(n);
  const std::array<double, 4> measure{0.0, w, 2.0 * w * box.rho, std::numbers::pi * h2 * w};
  out.quantum = {0.0, q1 / N * measure[1], q2 / N * measure[2], q3 / N * measure[3]};
  out.classical = {0.0, c1 / N * measure[1], c2 / N * measure[2], c3 / N * measure[3]};
  return out;
}

// ---------------------------------------------------------------------------
// Quantum advantage

enum class Comparator { ideal, comparable };

struct AdvantageSpec {
  int dim = 1;
  Comparator comparator = Comparator::comparable;
};

struct AdvantageResult {
  AdvantageSpec spec;
  double mean = 0.0;
  double sd = 0.0;
  double nominal = 0.0;  // ratio of exact sizes at the central timing values
  std::size_t samples = 0;
  std::size_t empty = 0;  // outer samples with an empty quantum region
  std::vector<double> ratios;
};

inline TimingGeometry perturb(const TimingGeometry& tg, PhiloxEngine& rng) {
  auto gauss = [&]() {
    // Box-Muller; two uniforms per draw keeps the stream layout fixed.
    const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  };
  TimingGeometry t = tg;
  t.s_a_ns += tg.s_a_sd * gauss();
  t.s_b_ns += tg.s_b_sd * gauss();
  t.r_a_ns += tg.r_a_sd * gauss();
  t.r_b_ns += tg.r_b_sd * gauss();
  t.d_m += tg.d_sd * gauss();
  return t;
}

/// Ratio of classical to quantum region size for each requested comparison,
/// with the timing/distance inputs drawn from their Gaussian uncertainties.
/// All comparisons share the outer draws; each outer draw shifts one shared
/// inner point set.
inline std::vector<AdvantageResult> quantum_advantage(const TimingGeometry& tg, const std::vector<AdvantageSpec>& specs,
                                                      std::size_t outer, std::size_t inner, std::uint64_t seed,
                                                      unsigned threads = 0, double max_empty_fraction = 0.01) {
  tg.validate();
  const UnitPoints pts(inner, splitmix64(seed), PointSet::kronecker);
  std::vector<AdvantageResult> res(specs.size());
  for (const auto& sp : specs)
    if (sp.dim < 1 || sp.dim > 3) throw invalid_input("dimension must be 1, 2 or 3");
  for (std::size_t j = 0; j < specs.size(); ++j) {
    res[j].spec = specs[j];
    res[j].ratios.assign(outer, NAN);
    res[j].samples = outer;
    const auto s0 = region_spec(tg);
    const double q = region_size_exact(RegionKind::quantum, s0, specs[j].dim);
    const double c = specs[j].comparator == Comparator::ideal ? (specs[j].dim == 1 ? s0.d : 0.0)
                                                              : region_size_exact(RegionKind::classical, s0, specs[j].dim);
    res[j].nominal = q > 0 ? c / q : INFINITY;
  }
  std::vector<char> empty(outer, 0);
  parallel_for(outer, threads, [&](std::size_t k) {
    PhiloxEngine rng(seed, k + 1);
    const auto t = perturb(tg, rng);
    const double su = rng.uniform(), sv = rng.uniform();
    if (!(t.s_a_ns <= t.r_a_ns && t.s_b_ns <= t.r_b_ns && t.d_m > 0)) {
      empty[k] = 1;
      return;
    }
    const auto s = region_spec(t);
    const auto sz = region_sizes_fused(s, pts, su, sv);
    for (std::size_t j = 0; j < specs.size(); ++j) {
      const auto dim = static_cast<std::size_t>(specs[j].dim);
      const double q = sz.quantum[dim];
      const double c = specs[j].comparator == Comparator::ideal ? (dim == 1 ? s.d : 0.0) : sz.classical[dim];
      if (q > 0)
        res[j].ratios[k] = c / q;
      else
        empty[k] = 1;
    }
  });
  std::size_t n_empty = 0;
  for (char e : empty) n_empty += e;
  if (outer > 0 && static_cast<double>(n_empty) > max_empty_fraction * static_cast<double>(outer))
    throw degenerate_input("quantum region empty in " + std::to_string(n_empty) + " of " + std::to_string(outer) +
                           " outer samples");
  for (auto& r : res) {
    r.empty = n_empty;
    KahanSum s;
    std::size_t m = 0;
    for (double v : r.ratios)
      if (std::isfinite(v)) {
        s.add(v);
        ++m;
      }
    r.mean = m ? s.value() / static_cast<double>(m) : NAN;
    KahanSum s2;
    for (double v : r.ratios)
      if (std::isfinite(v)) s2.add((v - r.mean) * (v - r.mean));
    r.sd = m > 1 ? std::sqrt(s2.value() / static_cast<double>(m - 1)) : 0.0;
  }
  return res;
}

inline AdvantageResult quantum_advantage(const TimingGeometry& tg, int dim, Comparator cmp, std::size_t outer,
                                         std::size_t inner, std::uint64_t seed, unsigned threads = 0) {
  return quantum_advantage(tg, {AdvantageSpec{dim, cmp}}, outer, inner, seed, threads).front();
}

struct Histogram {
  std::vector<double> edges;
  std::vector<double> frequency;  // relative frequencies, sum to 1
};

inline Histogram histogram(const std::vector<double>& values, std::size_t bins) {
  Histogram h;
  double lo = INFINITY, hi = -INFINITY;
  std::size_t n = 0;
  for (double v : values)
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ++n;
    }
  if (n == 0 || bins == 0) return h;
  if (!(hi > lo)) hi = lo + 1e-12;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  h.frequency.assign(bins, 0.0);
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    auto i = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    h.frequency[std::min(i, bins - 1)] += 1.0 / static_cast<double>(n);
  }
  return h;
}

}  // namespace qpv
