#pragma once
#include <array>
#include <functional>
#include <vector>

namespace kinemass {

/// uniform radial binning; bin b (0-based) covers [rMin + b*deltaR, rMin + (b+1)*deltaR)
struct RadialGrid {
    double rMin = 0;
    double deltaR = 1;
    int nX = 1;

    double edge(int b) const { return rMin + b * deltaR; }
    double center(int b) const { return rMin + (b + 0.5) * deltaR; }
    double outerEdge() const { return rMin + nX * deltaR; }
    /// bin index containing r, or -1 outside the grid (outer edge exclusive)
    int binOf(double r) const {
        if (r < rMin || r >= outerEdge())
            return -1;
        int b = int((r - rMin) / deltaR);
        return b >= nX ? nX - 1 : b;
    }
    void validate() const;
};

/// binned mass density, non-negative and non-increasing outward
struct DensityProfile {
    RadialGrid grid;
    std::vector<double> rho;

    void validate() const;
    double totalMass() const;
};

/**
    Gravitational potential of a piecewise-constant spherical density.
    Built once, then immutable; phi() interpolates a dense uniform table with
    a monotone cubic and switches to the exact -G M_total / r tail beyond the
    table, dphi() evaluates G M(<r) / r^2 from the closed-form enclosed mass.
    G = 1 throughout.
*/
class PotentialTable {
public:
    /// solve the spherical Poisson problem for a binned profile
    static PotentialTable solve(const DensityProfile& profile, double rOut, int nTable);

    /// build from analytic phi / dphi (test and synthetic-model support)
    static PotentialTable fromFunction(std::function<double(double)> phi,
                                       std::function<double(double)> dphi, double rOut,
                                       int nTable, double mTotal);

    double phi(double r) const;
    double dphi(double r) const;
    double phi0() const { return phi0_; }
    double rOut() const { return rOut_; }
    double mTotal() const { return mTotal_; }

private:
    PotentialTable() = default;
    void buildTable(const std::function<double(double)>& phiExact,
                    const std::function<double(double)>& dphiExact, int nTable);

    double rOut_ = 0;
    double h_ = 0;       // table spacing
    double invH_ = 0;
    double phi0_ = 0;
    double mTotal_ = 0;
    std::vector<double> y_;   // phi at nodes
    std::vector<double> d_;   // monotonicity-limited node derivatives for interpolation

    // closed-form mass bookkeeping (empty for fromFunction tables)
    bool hasGrid_ = false;
    RadialGrid grid_;
    std::vector<double> rho_;
    std::vector<double> massAtEdge_;  // enclosed mass at each bin edge, size nX+1
    std::function<double(double)> dphiFn_;  // analytic derivative for fromFunction tables

    double massEnclosed(double r) const;
};

/// position and velocity of a tracer in 3D
struct PhasePoint {
    std::array<double, 3> s;
    std::array<double, 3> v;
};

/// specific energy normalized by -phi(0), in [-1, 0] for bound states
double energyOf(const PhasePoint& p, const PotentialTable& pot);

/// |s x v|, unnormalized
double angularMomentum(const PhasePoint& p);

struct CircularOrbit {
    double lmax;  // largest angular momentum attainable at this energy
    double rc;    // radius of the circular orbit achieving it
};

/**
    Maximizes 2 r^2 (eps_unnorm - phi(r)) over (0, rOut]. epsNorm is the
    normalized energy in [-1, 0]; the returned lmax is unnormalized.
*/
CircularOrbit lmaxAndRc(double epsNorm, const PotentialTable& pot);

}  // namespace kinemass
