#include "kinemass/elgrid.h"

#include <cmath>
#include <stdexcept>

#include "kinemass/errors.h"

namespace kinemass {

CellBounds PhaseGrid::cellBounds(int c, int d) const {
    if (c < 0 || c >= nEps || d < 0 || d >= nEll)
        throw std::out_of_range("PhaseGrid::cellBounds: cell index out of range");
    return CellBounds{epsEdge(c), epsEdge(c + 1), ellEdge(d), ellEdge(d + 1)};
}

PdfMatrix PdfMatrix::fromGamma(PhaseGrid g, const std::vector<double>& gamma) {
    if (int(gamma.size()) != (g.nEps - 1) * g.nEll)
        throw std::invalid_argument("PdfMatrix::fromGamma: gamma size mismatch");
    PdfMatrix pdf(g);
    for (int c = g.nEps - 2; c >= 0; c--)
        for (int d = 0; d < g.nEll; d++) {
            double inc = gamma[std::size_t(c) * g.nEll + d];
            if (!(inc >= 0))
                throw std::invalid_argument("PdfMatrix::fromGamma: negative decrement");
            pdf.at(c, d) = pdf.at(c + 1, d) + inc;
        }
    return pdf;
}

void PdfMatrix::validate() const {
    for (int d = 0; d < grid.nEll; d++) {
        if (at(grid.nEps - 1, d) != 0.0)
            throw std::invalid_argument("PdfMatrix: top-energy row must be zero");
        for (int c = 0; c < grid.nEps; c++) {
            double v = at(c, d);
            if (!std::isfinite(v) || v < 0)
                throw std::invalid_argument("PdfMatrix: negative or non-finite value");
            if (c + 1 < grid.nEps && v < at(c + 1, d))
                throw std::invalid_argument("PdfMatrix: row not monotone non-increasing");
        }
    }
}

double lookup(const PdfMatrix& pdf, double eps, double ellFrac) {
    const PhaseGrid& g = pdf.grid;
    if (eps < -1.0 || eps > 0.0 || ellFrac < 0.0 || ellFrac > 1.0)
        throw std::out_of_range("lookup: normalized coordinates out of range");
    // boundary points belong to the lower-index cell
    int c = int(std::ceil((eps + 1.0) * g.nEps)) - 1;
    int d = int(std::ceil(ellFrac * g.nEll)) - 1;
    c = std::min(std::max(c, 0), g.nEps - 1);
    d = std::min(std::max(d, 0), g.nEll - 1);
    return pdf.at(c, d);
}

double epsMaxForBinning(const CatalogStats& stats, const PotentialTable& pot, int nEll,
                        double lmax0) {
    if (!(stats.rMinProj > 0) || !(stats.rMaxProj >= stats.rMinProj))
        throw std::invalid_argument("epsMaxForBinning: bad catalog extremes");
    if (nEll < 1)
        throw std::invalid_argument("epsMaxForBinning: nEll must be positive");
    double momentum = nEll * lmax0;
    return pot.phi(stats.rMaxProj) + 0.5 * stats.v3AbsMax * stats.v3AbsMax +
           momentum * momentum / (2 * stats.rMinProj * stats.rMinProj);
}

int computeNEps(const CatalogStats& stats, const PotentialTable& pot, int nEll, double lmax0) {
    double epsMax = epsMaxForBinning(stats, pot, nEll, lmax0);
    if (epsMax >= 0)
        throw NumericalError(
            "unbound binning: least-bound required energy is non-negative; shrink n_ell or flag "
            "outlier data");
    return std::max(1, int(pot.phi0() / (2 * epsMax)));
}

std::vector<double> resizeGammaRows(const std::vector<double>& gamma, int nEps, int newNEps,
                                    int nEll) {
    std::vector<double> out(std::size_t(newNEps - 1) * nEll, 0.0);
    int keep = std::min(nEps - 1, newNEps - 1);
    for (int c = 0; c < keep; c++)
        for (int d = 0; d < nEll; d++)
            out[std::size_t(c) * nEll + d] = gamma[std::size_t(c) * nEll + d];
    return out;
}

std::vector<double> resizeGammaCols(const std::vector<double>& gamma, int nEps, int nEll,
                                    int newNEll) {
    std::vector<double> out(std::size_t(nEps - 1) * newNEll, 0.0);
    int keep = std::min(nEll, newNEll);
    for (int c = 0; c < nEps - 1; c++)
        for (int d = 0; d < keep; d++)
            out[std::size_t(c) * newNEll + d] = gamma[std::size_t(c) * nEll + d];
    return out;
}

}  // namespace kinemass
