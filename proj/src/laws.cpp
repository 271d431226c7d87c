#include "brw/laws.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "brw/errors.hpp"

namespace brw {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// log E exp(-theta X) and its derivatives for a single displacement.
LogLaplace displacement_log_mgf(const DisplacementFamily& family, double theta) {
  return std::visit(
      Overloaded{
          [theta](const Gaussian& g) {
            return LogLaplace{-theta * g.mean + 0.5 * theta * theta * g.variance,
                              -g.mean + theta * g.variance, g.variance};
          },
          [theta](const TwoPoint& tp) {
            const double ea = std::log(tp.p) - theta * tp.a;
            const double eb = std::log1p(-tp.p) - theta * tp.b;
            const double top = std::max(ea, eb);
            const double lse = top + std::log(std::exp(ea - top) + std::exp(eb - top));
            const double qa = std::exp(ea - lse);
            const double qb = std::exp(eb - lse);
            const double gap = tp.a - tp.b;
            return LogLaplace{lse, -(qa * tp.a + qb * tp.b), qa * qb * gap * gap};
          },
          [theta](const UniformInterval& u) {
            // X = c + (L/2) S with S uniform on [-1, 1]; E e^{-theta X} = e^{-theta c} sinh(t)/t.
            const double half = 0.5 * (u.hi - u.lo);
            const double c = 0.5 * (u.hi + u.lo);
            const double t = theta * half;
            const double at = std::fabs(t);
            double log_shape;  // log(sinh t / t)
            double coth_term;  // coth t - 1/t
            double csch_term;  // 1/t^2 - 1/sinh^2 t
            if (at < 0.05) {
              const double t2 = t * t;
              log_shape = t2 * (1.0 / 6 + t2 * (-1.0 / 180 + t2 / 2835));
              coth_term = t * (1.0 / 3 + t2 * (-1.0 / 45 + t2 * (2.0 / 945 - t2 / 4725)));
              csch_term = 1.0 / 3 + t2 * (-1.0 / 15 + t2 * (2.0 / 189 - t2 / 675));
            } else {
              log_shape = at - std::log(2.0) + std::log1p(-std::exp(-2.0 * at)) - std::log(at);
              coth_term = (at > 20.0 ? std::copysign(1.0, t) : 1.0 / std::tanh(t)) - 1.0 / t;
              const double sh = at > 350.0 ? std::numeric_limits<double>::infinity() : std::sinh(at);
              csch_term = 1.0 / (t * t) - 1.0 / (sh * sh);
            }
            return LogLaplace{-theta * c + log_shape, -c + half * coth_term,
                              half * half * csch_term};
          },
      },
      family);
}

double count_mean(const CountLaw& count) {
  return std::visit(Overloaded{[](const DeterministicCount& d) { return double(d.k); },
                               [](const PoissonCount& p) { return p.lambda; }},
                    count);
}

void validate(const DisplacementFamily& family) {
  std::visit(Overloaded{
                 [](const Gaussian& g) {
                   if (!std::isfinite(g.mean) || !(g.variance > 0.0) || !std::isfinite(g.variance))
                     throw InvalidLaw("gaussian: variance must be positive and finite");
                 },
                 [](const TwoPoint& tp) {
                   if (!std::isfinite(tp.a) || !std::isfinite(tp.b) || tp.a == tp.b)
                     throw InvalidLaw("two-point: a and b must be finite and distinct");
                   if (!(tp.p > 0.0 && tp.p < 1.0))
                     throw InvalidLaw("two-point: p must lie strictly between 0 and 1");
                 },
                 [](const UniformInterval& u) {
                   if (!std::isfinite(u.lo) || !std::isfinite(u.hi) || !(u.lo < u.hi))
                     throw InvalidLaw("uniform: requires lo < hi");
                 },
             },
             family);
}

void validate(const CountLaw& count) {
  if (const auto* p = std::get_if<PoissonCount>(&count)) {
    if (!(p->lambda >= 0.0) || !std::isfinite(p->lambda))
      throw InvalidLaw("poisson: lambda must be finite and >= 0");
  }
}

double real_gcd(double a, double b, double tol) {
  while (b > tol) {
    double r = std::fmod(a, b);
    if (b - r <= tol) r = 0.0;
    a = b;
    b = r;
  }
  return a;
}

std::string fmt_num(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

OffspringLaw::OffspringLaw(Form form) : form_(std::move(form)) { build_cumulative(); }

OffspringLaw OffspringLaw::iid(CountLaw count, DisplacementFamily displacement) {
  validate(count);
  validate(displacement);
  return OffspringLaw(IidBranch{count, displacement});
}

OffspringLaw OffspringLaw::explicit_atoms(std::vector<Atom> atoms) {
  if (atoms.empty()) throw InvalidLaw("explicit: at least one atom is required");
  double total = 0.0;
  for (const auto& atom : atoms) {
    if (!(atom.probability > 0.0)) throw InvalidLaw("explicit: atom probabilities must be positive");
    for (double c : atom.children)
      if (!std::isfinite(c)) throw InvalidLaw("explicit: child positions must be finite");
    total += atom.probability;
  }
  if (std::fabs(total - 1.0) > 1e-12) {
    throw InvalidLaw("explicit: atom probabilities sum to " + fmt_num(total) +
                     ", must equal 1 within 1e-12");
  }
  return OffspringLaw(ExplicitLaw{std::move(atoms)});
}

void OffspringLaw::build_cumulative() {
  cumulative_.clear();
  if (const auto* ex = std::get_if<ExplicitLaw>(&form_)) {
    double acc = 0.0;
    for (const auto& atom : ex->atoms) {
      acc += atom.probability;
      cumulative_.push_back(acc);
    }
    cumulative_.back() = std::numeric_limits<double>::infinity();
  }
}

double OffspringLaw::mean_count() const {
  return std::visit(Overloaded{[](const IidBranch& b) { return count_mean(b.count); },
                               [](const ExplicitLaw& ex) {
                                 double m = 0.0;
                                 for (const auto& a : ex.atoms)
                                   m += a.probability * double(a.children.size());
                                 return m;
                               }},
                    form_);
}

LogLaplace OffspringLaw::log_laplace(double theta) const {
  if (!std::isfinite(theta)) throw DomainError("log_laplace: theta must be finite");
  return std::visit(
      Overloaded{
          [theta](const IidBranch& b) {
            const double m = count_mean(b.count);
            if (!(m > 0.0)) throw DomainError("log_laplace: expected offspring count is zero");
            LogLaplace ll = displacement_log_mgf(b.displacement, theta);
            ll.value += std::log(m);
            return ll;
          },
          [theta](const ExplicitLaw& ex) {
            // log-sum-exp over every (atom, child) term log p - theta c.
            double top = -std::numeric_limits<double>::infinity();
            for (const auto& a : ex.atoms)
              for (double c : a.children) top = std::max(top, std::log(a.probability) - theta * c);
            if (!std::isfinite(top)) throw DomainError("log_laplace: law has no children");
            double s0 = 0.0, s1 = 0.0;
            for (const auto& a : ex.atoms)
              for (double c : a.children) {
                const double w = std::exp(std::log(a.probability) - theta * c - top);
                s0 += w;
                s1 += w * c;
              }
            const double mean = s1 / s0;
            double var = 0.0;
            for (const auto& a : ex.atoms)
              for (double c : a.children) {
                const double w = std::exp(std::log(a.probability) - theta * c - top);
                var += w * (c - mean) * (c - mean);
              }
            return LogLaplace{top + std::log(s0), -mean, var / s0};
          },
      },
      form_);
}

OffspringLaw OffspringLaw::affine(double scale, double shift) const {
  if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(shift))
    throw InvalidLaw("affine: scale must be positive and shift finite");
  return std::visit(
      Overloaded{
          [&](const IidBranch& b) {
            DisplacementFamily mapped = std::visit(
                Overloaded{
                    [&](const Gaussian& g) -> DisplacementFamily {
                      return Gaussian{scale * g.mean + shift, scale * scale * g.variance};
                    },
                    [&](const TwoPoint& tp) -> DisplacementFamily {
                      return TwoPoint{scale * tp.a + shift, scale * tp.b + shift, tp.p};
                    },
                    [&](const UniformInterval& u) -> DisplacementFamily {
                      return UniformInterval{scale * u.lo + shift, scale * u.hi + shift};
                    },
                },
                b.displacement);
            return OffspringLaw::iid(b.count, mapped);
          },
          [&](const ExplicitLaw& ex) {
            std::vector<Atom> atoms = ex.atoms;
            for (auto& a : atoms)
              for (double& c : a.children) c = scale * c + shift;
            return OffspringLaw(ExplicitLaw{std::move(atoms)});
          },
      },
      form_);
}

bool OffspringLaw::degenerate() const {
  const auto* ex = std::get_if<ExplicitLaw>(&form_);
  if (ex == nullptr) return false;
  std::vector<double> values;
  for (const auto& a : ex->atoms) values.insert(values.end(), a.children.begin(), a.children.end());
  return std::adjacent_find(values.begin(), values.end(), std::not_equal_to<>()) == values.end();
}

bool OffspringLaw::lattice() const {
  if (const auto* b = std::get_if<IidBranch>(&form_))
    return std::holds_alternative<TwoPoint>(b->displacement);
  const auto& ex = std::get<ExplicitLaw>(form_);
  std::vector<double> values;
  for (const auto& a : ex.atoms) values.insert(values.end(), a.children.begin(), a.children.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  if (values.size() <= 2) return true;
  const double span = values.back() - values.front();
  const double tol = 1e-9 * std::max(1.0, span);
  double g = values[1] - values[0];
  for (std::size_t i = 2; i < values.size(); ++i) {
    const double d = values[i] - values[0];
    g = d > g ? real_gcd(d, g, tol) : real_gcd(g, d, tol);
  }
  return g >= 1e-6 * span;
}

void OffspringLaw::sample(RandomStream& rng, std::vector<double>& out) const {
  if (const auto* b = std::get_if<IidBranch>(&form_)) {
    const std::uint64_t n = std::visit(
        Overloaded{[](const DeterministicCount& d) { return std::uint64_t(d.k); },
                   [&rng](const PoissonCount& p) {
                     return p.lambda > 0.0 ? rng.poisson(p.lambda) : std::uint64_t(0);
                   }},
        b->count);
    std::visit(Overloaded{
                   [&](const Gaussian& g) {
                     const double sd = std::sqrt(g.variance);
                     for (std::uint64_t i = 0; i < n; ++i) out.push_back(g.mean + sd * rng.normal());
                   },
                   [&](const TwoPoint& tp) {
                     for (std::uint64_t i = 0; i < n; ++i)
                       out.push_back(rng.uniform() < tp.p ? tp.a : tp.b);
                   },
                   [&](const UniformInterval& u) {
                     for (std::uint64_t i = 0; i < n; ++i)
                       out.push_back(u.lo + (u.hi - u.lo) * rng.uniform());
                   },
               },
               b->displacement);
    return;
  }
  const auto& ex = std::get<ExplicitLaw>(form_);
  std::size_t pick = 0;
  if (ex.atoms.size() > 1) {
    const double u = rng.uniform();
    pick = std::size_t(std::upper_bound(cumulative_.begin(), cumulative_.end(), u) -
                       cumulative_.begin());
  }
  const auto& children = ex.atoms[pick].children;
  out.insert(out.end(), children.begin(), children.end());
}

std::string OffspringLaw::describe() const {
  std::ostringstream os;
  os.precision(17);
  std::visit(
      Overloaded{
          [&](const IidBranch& b) {
            os << "iid(";
            std::visit(Overloaded{[&](const DeterministicCount& d) { os << "deterministic " << d.k; },
                                  [&](const PoissonCount& p) { os << "poisson " << p.lambda; }},
                       b.count);
            os << ", ";
            std::visit(Overloaded{
                           [&](const Gaussian& g) {
                             os << "gaussian(" << g.mean << ", " << g.variance << ")";
                           },
                           [&](const TwoPoint& tp) {
                             os << "two-point(" << tp.a << ", " << tp.b << ", " << tp.p << ")";
                           },
                           [&](const UniformInterval& u) {
                             os << "uniform(" << u.lo << ", " << u.hi << ")";
                           },
                       },
                       b.displacement);
            os << ")";
          },
          [&](const ExplicitLaw& ex) {
            os << "explicit(";
            for (std::size_t i = 0; i < ex.atoms.size(); ++i) {
              if (i) os << "; ";
              os << ex.atoms[i].probability << ": [";
              for (std::size_t j = 0; j < ex.atoms[i].children.size(); ++j)
                os << (j ? ", " : "") << ex.atoms[i].children[j];
              os << "]";
            }
            os << ")";
          },
      },
      form_);
  return os.str();
}

std::vector<double> sample_offspring(const OffspringLaw& law, RandomStream& rng) {
  std::vector<double> out;
  law.sample(rng, out);
  return out;
}

LogLaplace log_laplace(const OffspringLaw& law, double theta) { return law.log_laplace(theta); }

OffspringLaw canonical_law() {
  const double two_ln2 = 2.0 * std::log(2.0);
  return OffspringLaw::iid(DeterministicCount{2}, Gaussian{two_ln2, two_ln2});
}

LawMoments law_moments(const OffspringLaw& law, double tol) {
  if (!(tol > 0.0)) throw InvalidLaw("law_moments: tol must be positive");
  const LogLaplace ll = law.log_laplace(1.0);
  LawMoments m;
  m.mean_count = law.mean_count();
  m.w1 = std::exp(ll.value);
  m.z1 = -ll.d1 * m.w1;
  m.sigma2 = m.w1 * (ll.d2 + ll.d1 * ll.d1);
  m.boundary_ok = m.mean_count > 1.0 && std::fabs(m.w1 - 1.0) <= tol && std::fabs(m.z1) <= tol &&
                  m.sigma2 > 0.0 && std::isfinite(m.sigma2);
  // Every offered family has light tails (and explicit laws finitely many
  // atoms), so the log-squared integrability moment is finite.
  m.integrability_ok = true;
  m.integrability_rationale = "light-tailed family";
  return m;
}

Reduction boundary_reduce(const OffspringLaw& law, double tol) {
  if (!(tol > 0.0)) throw InvalidLaw("boundary_reduce: tol must be positive");
  if (law.degenerate())
    throw Degenerate("boundary_reduce: Lambda is affine (all children share one displacement)");
  if (!(law.mean_count() > 1.0))
    throw NoRoot("boundary_reduce: law is not supercritical (mean offspring <= 1)");

  auto residual = [&law](double theta) {
    const LogLaplace ll = law.log_laplace(theta);
    return theta * ll.d1 - ll.value;
  };

  constexpr double kLo = 1e-6;
  constexpr double kHi = 50.0;
  double lo = kLo;
  double f_lo = residual(lo);
  if (f_lo >= 0.0) throw NoRoot("boundary_reduce: no sign change on [1e-6, 50]");
  double hi = lo;
  double f_hi = f_lo;
  for (double theta = 1e-2; f_hi < 0.0; theta = std::min(kHi, theta * 1.25)) {
    lo = hi;
    f_lo = f_hi;
    hi = theta;
    f_hi = residual(hi);
    if (f_hi < 0.0 && theta >= kHi) throw NoRoot("boundary_reduce: no sign change on [1e-6, 50]");
  }

  double x = hi;
  double fx = f_hi;
  for (int iter = 0; iter < 200 && std::fabs(fx) > tol; ++iter) {
    const LogLaplace ll = law.log_laplace(x);
    const double slope = x * ll.d2;
    double next = slope > 0.0 ? x - fx / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == x) break;
    x = next;
    fx = residual(x);
    (fx < 0.0 ? lo : hi) = x;
  }

  const double shift = law.log_laplace(x).value;
  return Reduction{x, shift, fx, law.affine(x, shift)};
}

}  // namespace brw
