#pragma once
#include <vector>

#include "kinemass/potential.h"

namespace kinemass {

struct CellBounds {
    double epsLo, epsHi;  // normalized energy range of the cell
    double ellLo, ellHi;  // normalized momentum range of the cell
};

/**
    Uniform grid over the normalized (E, L) rectangle [-1, 0] x [0, 1].
    Energies are normalized by -phi(0) and momenta by lmax(0), so the grid is
    fixed in these coordinates while its physical meaning follows the current
    density profile. Cells are 0-indexed; edges are computed as k/n so that
    shared edges are bitwise identical and the outer edges land exactly on the
    range boundaries.
*/
struct PhaseGrid {
    int nEps = 1;
    int nEll = 1;

    double deltaEps() const { return 1.0 / nEps; }
    double deltaEll() const { return 1.0 / nEll; }
    double epsEdge(int k) const { return -1.0 + double(k) / nEps; }
    double ellEdge(int k) const { return double(k) / nEll; }
    CellBounds cellBounds(int c, int d) const;
    int cells() const { return nEps * nEll; }
};

/// discretized pdf over the phase grid; rows non-increasing toward eps = 0, top row zero
struct PdfMatrix {
    PhaseGrid grid;
    std::vector<double> f;  // row-major [c * nEll + d]

    explicit PdfMatrix(PhaseGrid g) : grid(g), f(std::size_t(g.nEps) * g.nEll, 0.0) {}

    double& at(int c, int d) { return f[std::size_t(c) * grid.nEll + d]; }
    double at(int c, int d) const { return f[std::size_t(c) * grid.nEll + d]; }

    /// rebuild from the non-negative decrement matrix: f[c][d] = f[c+1][d] + gamma[c][d]
    static PdfMatrix fromGamma(PhaseGrid g, const std::vector<double>& gamma);

    /// throws on negative entries, broken row monotonicity, or a nonzero top row
    void validate() const;
};

/// pdf value of the cell containing (eps, ellFrac); boundaries go to the lower-index cell
double lookup(const PdfMatrix& pdf, double eps, double ellFrac);

/// catalog extremes feeding the E-resolution formula
struct CatalogStats {
    double rMinProj = 0;  // smallest projected radius
    double rMaxProj = 0;  // largest projected radius
    double v3AbsMax = 0;  // largest |line-of-sight velocity|
};

/**
    Least-bound unnormalized energy the binning must resolve:
    phi(r_max) + v3max^2/2 + [n_ell * lmax0]^2 / (2 r_min^2).
*/
double epsMaxForBinning(const CatalogStats& stats, const PotentialTable& pot, int nEll,
                        double lmax0);

/**
    Data-driven E-bin count, max(1, int(phi(0) / (2 eps_max))). Throws
    NumericalError("unbound binning ...") when eps_max >= 0, in which case the
    caller must shrink n_ell, flag outlier data, or fall back to a cap.
*/
int computeNEps(const CatalogStats& stats, const PotentialTable& pot, int nEll, double lmax0);

/// re-dimension a (nEps-1) x nEll gamma block to (newNEps-1) rows: copy overlap, zero-fill new top rows
std::vector<double> resizeGammaRows(const std::vector<double>& gamma, int nEps, int newNEps,
                                    int nEll);

/// re-dimension the column count: copy overlapping columns, zero-fill new high-L columns
std::vector<double> resizeGammaCols(const std::vector<double>& gamma, int nEps, int nEll,
                                    int newNEll);

}  // namespace kinemass
