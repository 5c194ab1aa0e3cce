#include "kinemass/mathutil.h"

#include <cmath>
#include <cstring>

#include "kinemass/errors.h"

namespace kinemass {
namespace math {

QuadRule gaussLegendre(int n) {
    if (n < 1)
        throw NumericalError("gaussLegendre: order must be positive");
    QuadRule rule;
    rule.x.resize(n);
    rule.w.resize(n);
    // roots of P_n by Newton from the Chebyshev-like initial guess
    for (int i = 0; i < (n + 1) / 2; i++) {
        double x = std::cos(PI * (i + 0.75) / (n + 0.5));
        double pp = 0;
        for (int it = 0; it < 100; it++) {
            double p0 = 1, p1 = 0;
            for (int j = 0; j < n; j++) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) * x * p1 - j * p2) / (j + 1);
            }
            pp = n * (x * p0 - p1) / (x * x - 1);
            double dx = p0 / pp;
            x -= dx;
            if (std::fabs(dx) < 1e-15)
                break;
        }
        rule.x[i] = -x;
        rule.x[n - 1 - i] = x;
        rule.w[i] = rule.w[n - 1 - i] = 2.0 / ((1 - x * x) * pp * pp);
    }
    if (n % 2 == 1)
        rule.x[n / 2] = 0;  // exact symmetry for the central node
    return rule;
}

QuadRule gaussLegendre(int n, double a, double b) {
    QuadRule rule = gaussLegendre(n);
    double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int i = 0; i < n; i++) {
        rule.x[i] = mid + half * rule.x[i];
        rule.w[i] *= half;
    }
    return rule;
}

QuadRule gaussHermite(int n) {
    if (n < 1)
        throw NumericalError("gaussHermite: order must be positive");
    QuadRule rule;
    rule.x.resize(n);
    rule.w.resize(n);
    const double sqrtPi = std::sqrt(PI);
    // physicists' Hermite polynomials, Newton on scaled recurrence to avoid overflow
    for (int i = 0; i < (n + 1) / 2; i++) {
        double x;
        if (i == 0)
            x = std::sqrt(2.0 * n + 1) - 1.85575 * std::pow(2.0 * n + 1, -1.0 / 6.0);
        else if (i == 1)
            x = rule.x[n - 1] - 1.14 * std::pow(double(n), 0.426) / rule.x[n - 1];
        else
            x = 2 * rule.x[n - i] - rule.x[n - i + 1];
        double ppScaled = 0;
        for (int it = 0; it < 200; it++) {
            // orthonormal recurrence: h_{j+1} = x sqrt(2/(j+1)) h_j - sqrt(j/(j+1)) h_{j-1}
            double h0 = 1.0 / std::sqrt(sqrtPi), h1 = 0;
            for (int j = 0; j < n; j++) {
                double h2 = h1;
                h1 = h0;
                h0 = x * std::sqrt(2.0 / (j + 1)) * h1 - std::sqrt(double(j) / (j + 1)) * h2;
            }
            ppScaled = std::sqrt(2.0 * n) * h1;  // derivative of the orthonormal h_n
            double dx = h0 / ppScaled;
            x -= dx;
            if (std::fabs(dx) < 1e-14 * (1 + std::fabs(x)))
                break;
        }
        rule.x[n - 1 - i] = x;
        rule.x[i] = -x;
        rule.w[n - 1 - i] = rule.w[i] = 2.0 / (ppScaled * ppScaled);
    }
    if (n % 2 == 1)
        rule.x[n / 2] = 0;
    return rule;
}

namespace {

struct SimpsonPanel {
    double fa, fm, fb;
    double estimate(double a, double b) const { return (b - a) / 6.0 * (fa + 4 * fm + fb); }
};

double simpsonRecurse(const std::function<double(double)>& f, double a, double b,
                      const SimpsonPanel& panel, double whole, double tol, double absFloor,
                      int depth, int maxDepth) {
    double m = 0.5 * (a + b);
    SimpsonPanel left{panel.fa, f(0.5 * (a + m)), panel.fm};
    SimpsonPanel right{panel.fm, f(0.5 * (m + b)), panel.fb};
    double lv = left.estimate(a, m);
    double rv = right.estimate(m, b);
    double err = lv + rv - whole;
    if (std::fabs(err) <= 15.0 * std::max(tol * std::fabs(lv + rv), absFloor))
        return lv + rv + err / 15.0;
    if (depth >= maxDepth)
        throw NumericalError("adaptiveSimpson: no convergence at depth " + std::to_string(depth) +
                             ", interval [" + std::to_string(a) + ", " + std::to_string(b) +
                             "], residual " + std::to_string(err));
    // the relative tolerance stays fixed down the recursion: the panel-local
    // criterion already bounds the total error by tol * int |f| (each accepted
    // panel is 15 times better than its estimate), and when the integrand is
    // itself computed by quadrature its evaluation noise scales with the panel
    // too, so tightening tol with depth would chase noise that shrinks exactly
    // as fast as the allowance and never terminate. Only the absolute floor
    // halves, keeping its global contribution bounded by 30 * absFloor.
    return simpsonRecurse(f, a, m, left, lv, tol, 0.5 * absFloor, depth + 1, maxDepth) +
           simpsonRecurse(f, m, b, right, rv, tol, 0.5 * absFloor, depth + 1, maxDepth);
}

}  // namespace

double adaptiveSimpson(const std::function<double(double)>& f, double a, double b, double relTol,
                       double absFloor, int maxDepth) {
    if (!(b > a))
        return 0;
    SimpsonPanel panel{f(a), f(0.5 * (a + b)), f(b)};
    double whole = panel.estimate(a, b);
    return simpsonRecurse(f, a, b, panel, whole, relTol, absFloor, 0, maxDepth);
}

double bisect(const std::function<double(double)>& f, double a, double b, double relTol,
              int maxIter) {
    double fa = f(a), fb = f(b);
    if (fa == 0)
        return a;
    if (fb == 0)
        return b;
    if ((fa > 0) == (fb > 0))
        throw NumericalError("bisect: no sign change on bracket");
    for (int i = 0; i < maxIter; i++) {
        double m = 0.5 * (a + b);
        double fm = f(m);
        if (fm == 0)
            return m;
        if ((fm > 0) == (fa > 0)) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if (b - a <= relTol * std::max(1.0, std::fabs(a)))
            break;
    }
    return 0.5 * (a + b);
}

double gammaQ(double a, double x) {
    if (!(a > 0) || !(x >= 0) || !std::isfinite(a) || !std::isfinite(x))
        throw NumericalError("gammaQ: requires a > 0 and finite x >= 0");
    if (x == 0)
        return 1;
    double lgam = std::lgamma(a);
    if (x < a + 1) {
        // P(a, x) by the ascending series, Q = 1 - P
        double term = 1.0 / a;
        double sum = term;
        for (int n = 1; n < 500; n++) {
            term *= x / (a + n);
            sum += term;
            if (std::fabs(term) < std::fabs(sum) * 1e-16)
                break;
        }
        return 1 - sum * std::exp(-x + a * std::log(x) - lgam);
    }
    // Q(a, x) by the Lentz continued fraction
    const double tiny = 1e-300;
    double b = x + 1 - a;
    double c = 1 / tiny;
    double d = 1 / b;
    double h = d;
    for (int i = 1; i < 500; i++) {
        double an = -i * (i - a);
        b += 2;
        d = an * d + b;
        if (std::fabs(d) < tiny)
            d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny)
            c = tiny;
        d = 1 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1) < 1e-16)
            break;
    }
    return h * std::exp(-x + a * std::log(x) - lgam);
}

double kolmogorovQ(double lambda) {
    if (!(lambda >= 0) || !std::isfinite(lambda))
        throw NumericalError("kolmogorovQ: requires finite lambda >= 0");
    if (lambda < 1e-3)
        return 1;  // the series needs thousands of terms and the answer is 1 anyway
    double sum = 0, sign = 1;
    for (int j = 1; j <= 200; j++) {
        double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
        sum += term;
        if (std::fabs(term) < 1e-14 * std::max(std::fabs(sum), 1e-30))
            break;
        sign = -sign;
    }
    return std::min(1.0, std::max(0.0, 2 * sum));
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; i++) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace math
}  // namespace kinemass
