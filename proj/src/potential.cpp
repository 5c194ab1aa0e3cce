#include "kinemass/potential.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kinemass/errors.h"
#include "kinemass/mathutil.h"

namespace kinemass {

void RadialGrid::validate() const {
    if (!(rMin >= 0) || !(deltaR > 0) || nX < 1)
        throw std::invalid_argument("RadialGrid: need rMin >= 0, deltaR > 0, nX >= 1");
}

void DensityProfile::validate() const {
    grid.validate();
    if (int(rho.size()) != grid.nX)
        throw std::invalid_argument("DensityProfile: rho size does not match grid");
    double scale = rho.empty() ? 0.0 : std::fabs(rho[0]);
    for (int b = 0; b < grid.nX; b++) {
        if (!std::isfinite(rho[b]) || rho[b] < 0)
            throw std::invalid_argument("DensityProfile: negative or non-finite density in bin " +
                                        std::to_string(b));
        double next = (b + 1 < grid.nX) ? rho[b + 1] : 0.0;  // rho beyond the grid is zero
        if (rho[b] < next - 1e-13 * std::max(1.0, scale))
            throw std::invalid_argument("DensityProfile: density increases at bin " +
                                        std::to_string(b));
    }
}

double DensityProfile::totalMass() const {
    double m = 0;
    for (int b = 0; b < grid.nX; b++) {
        double a = grid.edge(b), c = grid.edge(b + 1);
        m += 4 * math::PI / 3 * rho[b] * (c * c * c - a * a * a);
    }
    return m;
}

PotentialTable PotentialTable::solve(const DensityProfile& profile, double rOut, int nTable) {
    profile.validate();
    if (!(rOut >= profile.grid.outerEdge()))
        throw std::invalid_argument("solve_potential: rOut must reach past the density grid");
    if (nTable < 2)
        throw std::invalid_argument("solve_potential: need at least two table nodes");

    PotentialTable pot;
    pot.hasGrid_ = true;
    pot.grid_ = profile.grid;
    pot.rho_ = profile.rho;
    pot.rOut_ = rOut;

    const int n = profile.grid.nX;
    pot.massAtEdge_.assign(n + 1, 0.0);
    for (int b = 0; b < n; b++) {
        double a = profile.grid.edge(b), c = profile.grid.edge(b + 1);
        pot.massAtEdge_[b + 1] =
            pot.massAtEdge_[b] + 4 * math::PI / 3 * profile.rho[b] * (c * c * c - a * a * a);
    }
    pot.mTotal_ = pot.massAtEdge_[n];

    // outward surface-density-like sums S(r) = int_r^inf rho r' dr', tabulated at edges
    std::vector<double> sAtEdge(n + 1, 0.0);
    for (int b = n - 1; b >= 0; b--) {
        double a = profile.grid.edge(b), c = profile.grid.edge(b + 1);
        sAtEdge[b] = sAtEdge[b + 1] + 0.5 * profile.rho[b] * (c * c - a * a);
    }

    auto phiExact = [&](double r) -> double {
        const RadialGrid& g = profile.grid;
        if (r >= g.outerEdge())
            return pot.mTotal_ == 0 ? 0.0 : -pot.mTotal_ / r;
        double mOverR, s;
        if (r <= g.rMin) {
            mOverR = 0;  // no mass inside the innermost edge
            s = sAtEdge[0];
        } else {
            int b = std::min(int((r - g.rMin) / g.deltaR), n - 1);
            double a = g.edge(b);
            double m = pot.massAtEdge_[b] + 4 * math::PI / 3 * profile.rho[b] * (r * r * r - a * a * a);
            mOverR = m / r;
            double c = g.edge(b + 1);
            s = sAtEdge[b + 1] + 0.5 * profile.rho[b] * (c * c - r * r);
        }
        return -(mOverR + 4 * math::PI * s);
    };
    pot.buildTable(phiExact,
                   [&pot](double r) { return r <= 0 ? 0.0 : pot.massEnclosed(r) / (r * r); },
                   nTable);
    return pot;
}

PotentialTable PotentialTable::fromFunction(std::function<double(double)> phi,
                                            std::function<double(double)> dphi, double rOut,
                                            int nTable, double mTotal) {
    if (nTable < 2)
        throw std::invalid_argument("PotentialTable: need at least two table nodes");
    PotentialTable pot;
    pot.hasGrid_ = false;
    pot.rOut_ = rOut;
    pot.mTotal_ = mTotal;
    pot.dphiFn_ = dphi;
    pot.buildTable(phi, dphi, nTable);
    return pot;
}

void PotentialTable::buildTable(const std::function<double(double)>& phiExact,
                                const std::function<double(double)>& dphiExact, int nTable) {
    h_ = rOut_ / (nTable - 1);
    invH_ = 1.0 / h_;
    y_.resize(nTable);
    d_.resize(nTable);
    for (int i = 0; i < nTable; i++) {
        double r = i * h_;
        y_[i] = phiExact(r);
        d_[i] = dphiExact(r);
    }
    phi0_ = y_[0];
    // Fritsch-Carlson limiting keeps the cubic monotone between nodes
    for (int i = 0; i + 1 < nTable; i++) {
        double sec = (y_[i + 1] - y_[i]) * invH_;
        if (sec <= 0) {
            if (sec == 0) {
                d_[i] = 0;
                d_[i + 1] = 0;
            }
            continue;
        }
        double alpha = d_[i] / sec, beta = d_[i + 1] / sec;
        double norm2 = alpha * alpha + beta * beta;
        if (norm2 > 9.0) {
            double tau = 3.0 / std::sqrt(norm2);
            d_[i] = tau * alpha * sec;
            d_[i + 1] = tau * beta * sec;
        }
    }
}

double PotentialTable::phi(double r) const {
    if (r >= rOut_)
        return mTotal_ == 0 ? 0.0 : -mTotal_ / r;
    if (r < 0)
        throw std::invalid_argument("phi: negative radius");
    double x = r * invH_;
    int i = std::min(int(x), int(y_.size()) - 2);
    double t = x - i;
    double y0 = y_[i], y1 = y_[i + 1];
    double m0 = d_[i] * h_, m1 = d_[i + 1] * h_;
    double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * y1 +
           (t3 - t2) * m1;
}

double PotentialTable::dphi(double r) const {
    if (r <= 0)
        return 0;
    if (hasGrid_)
        return massEnclosed(r) / (r * r);
    if (r >= rOut_)
        return mTotal_ / (r * r);
    return dphiFn_(r);
}

double PotentialTable::massEnclosed(double r) const {
    const RadialGrid& g = grid_;
    if (r <= g.rMin)
        return 0;
    if (r >= g.outerEdge())
        return mTotal_;
    int b = std::min(int((r - g.rMin) / g.deltaR), g.nX - 1);
    double a = g.edge(b);
    return massAtEdge_[b] + 4 * math::PI / 3 * rho_[b] * (r * r * r - a * a * a);
}

double energyOf(const PhasePoint& p, const PotentialTable& pot) {
    if (!(pot.phi0() < 0))
        throw std::invalid_argument("energyOf: potential well has zero depth");
    double r = std::sqrt(p.s[0] * p.s[0] + p.s[1] * p.s[1] + p.s[2] * p.s[2]);
    double v2 = p.v[0] * p.v[0] + p.v[1] * p.v[1] + p.v[2] * p.v[2];
    return (pot.phi(r) + 0.5 * v2) / (-pot.phi0());
}

double angularMomentum(const PhasePoint& p) {
    double lx = p.s[1] * p.v[2] - p.s[2] * p.v[1];
    double ly = p.s[2] * p.v[0] - p.s[0] * p.v[2];
    double lz = p.s[0] * p.v[1] - p.s[1] * p.v[0];
    return std::sqrt(lx * lx + ly * ly + lz * lz);
}

CircularOrbit lmaxAndRc(double epsNorm, const PotentialTable& pot) {
    if (epsNorm < -1 - 1e-12)
        throw std::invalid_argument("lmaxAndRc: energy below the potential minimum");
    epsNorm = std::max(epsNorm, -1.0);
    double epsU = epsNorm * (-pot.phi0());

    auto h = [&](double r) { return 2 * r * r * (epsU - pot.phi(r)); };
    auto g = [&](double r) { return 2 * (epsU - pot.phi(r)) - r * pot.dphi(r); };

    const double rOut = pot.rOut();
    const int nScan = 256;
    double bestH = h(rOut), bestR = rOut;
    double rPrev = rOut * std::pow(1.0 / nScan, 1.5);
    double gPrev = g(rPrev);
    for (int i = 2; i <= nScan; i++) {
        double r = rOut * std::pow(double(i) / nScan, 1.5);
        double gCur = g(r);
        if ((gPrev > 0) != (gCur > 0)) {
            double root = math::bisect(g, rPrev, r, 1e-10, 200);
            double val = h(root);
            if (val > bestH) {
                bestH = val;
                bestR = root;
            }
        }
        rPrev = r;
        gPrev = gCur;
    }
    if (bestH <= 0)
        return CircularOrbit{0.0, 0.0};
    return CircularOrbit{std::sqrt(bestH), bestR};
}

}  // namespace kinemass
