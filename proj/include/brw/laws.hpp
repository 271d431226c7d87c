#pragma once

// Reproduction point processes of a branching random walk and their
// log-Laplace functionals.
//
// A law describes where one individual's children land relative to the
// parent. Every law here has light tails, so all moments exist and the
// functional Lambda(theta) = log E sum_{|u|=1} exp(-theta V(u)) is finite on
// the whole real line whenever the expected offspring count is positive.

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "brw/random.hpp"

namespace brw {

struct Gaussian {
  double mean = 0.0;
  double variance = 1.0;
};

/// X = a with probability p, b otherwise.
struct TwoPoint {
  double a = 0.0;
  double b = 1.0;
  double p = 0.5;
};

struct UniformInterval {
  double lo = 0.0;
  double hi = 1.0;
};

using DisplacementFamily = std::variant<Gaussian, TwoPoint, UniformInterval>;

struct DeterministicCount {
  std::uint32_t k = 2;
};

struct PoissonCount {
  double lambda = 1.0;
};

using CountLaw = std::variant<DeterministicCount, PoissonCount>;

/// Count drawn from `count`, then i.i.d. displacements.
struct IidBranch {
  CountLaw count;
  DisplacementFamily displacement;
};

struct Atom {
  double probability = 1.0;
  std::vector<double> children;
};

/// Finitely many atoms, each an explicit list of child positions.
struct ExplicitLaw {
  std::vector<Atom> atoms;
};

/// Lambda(theta) and its first two derivatives in theta.
struct LogLaplace {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

class OffspringLaw {
 public:
  using Form = std::variant<IidBranch, ExplicitLaw>;

  /// Throws InvalidLaw on parameters outside the family's domain.
  static OffspringLaw iid(CountLaw count, DisplacementFamily displacement);
  /// Throws InvalidLaw unless probabilities are positive and sum to 1 within 1e-12.
  static OffspringLaw explicit_atoms(std::vector<Atom> atoms);

  [[nodiscard]] const Form& form() const noexcept { return form_; }
  [[nodiscard]] bool is_explicit() const noexcept {
    return std::holds_alternative<ExplicitLaw>(form_);
  }

  /// E sum_{|u|=1} 1.
  [[nodiscard]] double mean_count() const;

  /// Closed form per family; direct summation for explicit laws.
  /// Throws DomainError when the law has no children in expectation.
  [[nodiscard]] LogLaplace log_laplace(double theta) const;

  /// Law of the point process after X -> scale * X + shift on every child.
  /// Requires scale > 0.
  [[nodiscard]] OffspringLaw affine(double scale, double shift) const;

  /// True when Lambda is affine in theta, i.e. every child sits at one
  /// common displacement with probability one.
  [[nodiscard]] bool degenerate() const;

  /// True when all displacements lie on a common arithmetic progression.
  /// The limit theorems assume a non-lattice law; this is a warning only.
  [[nodiscard]] bool lattice() const;

  /// Appends one individual's child displacements to `out`.
  void sample(RandomStream& rng, std::vector<double>& out) const;

  /// Human-readable one-liner, e.g. "iid(deterministic 2, gaussian(0, 1))".
  [[nodiscard]] std::string describe() const;

 private:
  explicit OffspringLaw(Form form);
  void build_cumulative();

  Form form_;
  std::vector<double> cumulative_;  // explicit laws: atom CDF
};

/// Convenience wrapper returning a fresh vector.
std::vector<double> sample_offspring(const OffspringLaw& law, RandomStream& rng);

LogLaplace log_laplace(const OffspringLaw& law, double theta);

/// Deterministic(2) children with Gaussian(2 ln 2, 2 ln 2) displacements: the
/// boundary-case image of binary branching with standard normal steps.
OffspringLaw canonical_law();

struct LawMoments {
  double mean_count = 0.0;
  double w1 = 0.0;      // E sum e^{-V}
  double z1 = 0.0;      // E sum V e^{-V}
  double sigma2 = 0.0;  // E sum V^2 e^{-V}
  bool boundary_ok = false;
  bool integrability_ok = false;
  std::string integrability_rationale;
};

inline constexpr double kDefaultBoundaryTol = 1e-9;

/// Throws DomainError if Lambda(1) is undefined.
LawMoments law_moments(const OffspringLaw& law, double tol = kDefaultBoundaryTol);

struct Reduction {
  double theta_star = 1.0;
  double shift = 0.0;
  double residual = 0.0;  // theta* Lambda'(theta*) - Lambda(theta*)
  OffspringLaw transformed;
};

/// Maps a supercritical law to the boundary case by X -> theta* X + Lambda(theta*),
/// with theta* > 0 the root of theta Lambda'(theta) = Lambda(theta).
///
/// The root is bracketed on [1e-6, 50] by a sign change and refined by Newton
/// steps, falling back to bisection whenever a step leaves the bracket.
/// Throws Degenerate for affine Lambda and NoRoot when there is no sign change
/// (including laws with mean offspring <= 1).
Reduction boundary_reduce(const OffspringLaw& law, double tol = 1e-12);

}  // namespace brw
