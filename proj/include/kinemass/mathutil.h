#pragma once
#include <cstdint>
#include <functional>
#include <vector>

namespace kinemass {
namespace math {

inline constexpr double PI = 3.14159265358979323846;

/// nodes and weights of a quadrature rule
struct QuadRule {
    std::vector<double> x;
    std::vector<double> w;
};

/// Gauss-Legendre rule on [-1, 1], computed by Newton iteration on P_n
QuadRule gaussLegendre(int n);

/// Gauss-Legendre rule mapped to [a, b]
QuadRule gaussLegendre(int n, double a, double b);

/// Gauss-Hermite rule for integrals of the form int exp(-t^2) f(t) dt
QuadRule gaussHermite(int n);

/**
    Adaptive Simpson integration of f over [a, b] to a relative tolerance
    (with an absolute floor for integrals near zero). Throws NumericalError
    when maxDepth halvings do not reach the tolerance.
*/
double adaptiveSimpson(const std::function<double(double)>& f, double a, double b,
                       double relTol, double absFloor = 1e-300, int maxDepth = 24);

/**
    Bisection for a root of f in [a, b]; f(a) and f(b) must have opposite signs.
    Converges to relative interval width relTol (absolute width absTol near zero).
*/
double bisect(const std::function<double(double)>& f, double a, double b,
              double relTol, int maxIter = 200);

/**
    Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a),
    by the usual series / continued-fraction split at x = a + 1. The
    chi-squared tail probability with k degrees of freedom is Q(k/2, x/2).
*/
double gammaQ(double a, double x);

/**
    Kolmogorov tail function Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2),
    the asymptotic p-value of a scaled Kolmogorov-Smirnov statistic.
*/
double kolmogorovQ(double lambda);

/// FNV-1a over a byte buffer, used for config hashing in run manifests
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 1469598103934665603ull);

}  // namespace math
}  // namespace kinemass
