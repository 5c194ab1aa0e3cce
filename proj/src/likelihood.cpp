#include "kinemass/likelihood.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <vector>

#include "kinemass/errors.h"
#include "kinemass/mathutil.h"

namespace kinemass {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kSqrtPi = std::sqrt(math::PI);
const double kSqrt2 = std::sqrt(2.0);

/// unnormalized observable density at one reduced datum, summing pdf values
/// against projected cell volumes; skips empty cells, so sparse matrices
/// (single-cell tests, fresh chains) cost almost nothing
double nuViaCells(const DatumFrame& frame, const PdfMatrix& pdf, const VolumeContext& ctx) {
    const PhaseGrid& g = pdf.grid;
    double nu = 0;
    for (int c = 0; c < g.nEps; c++)
        for (int d = 0; d < g.nEll; d++) {
            double f = pdf.at(c, d);
            if (f != 0)
                nu += f * cellVolume(0, c, d, frame, ctx).value;
        }
    return nu;
}

/// window normalization on a tensor-product rule; the marginal density is
/// even in v3, so only the positive half of a symmetric zero-free velocity
/// rule is evaluated, with doubled weights
double windowNorm(const PdfMatrix& pdf, const VolumeContext& ctx, const PotentialTable& pot,
                  const LikelihoodConfig& cfg) {
    math::QuadRule qr = math::gaussLegendre(cfg.zRadialNodes, cfg.rMin, cfg.rMax);
    math::QuadRule qv = math::gaussLegendre(cfg.zVelocityNodes);
    double z = 0;
    for (int i = 0; i < cfg.zRadialNodes; i++) {
        double R = qr.x[i];
        double vescSq = -2 * pot.phi(R);
        if (!(vescSq > 0))
            continue;
        double vesc = std::sqrt(vescSq);
        double slab = 0;
        for (int j = 0; j < cfg.zVelocityNodes; j++) {
            if (qv.x[j] <= 0)
                continue;
            slab += 2 * vesc * qv.w[j] * nuViaCells(DatumFrame{R, vesc * qv.x[j]}, pdf, ctx);
        }
        z += qr.w[i] * 2 * math::PI * R * slab;
    }
    return z;
}

/// error-kernel application by Gauss-Hermite quadrature, without the window
/// normalization; exact short-circuit for error-free data
double convolvedNu(const KinematicDatum& k, const PdfMatrix& pdf, const VolumeContext& ctx,
                   const LikelihoodConfig& cfg) {
    if (k.sigmaV3 == 0)
        return nuViaCells(DatumFrame{k.rp(), k.v3}, pdf, ctx);
    math::QuadRule gh = math::gaussHermite(cfg.hermiteNodes);
    double acc = 0;
    for (int h = 0; h < cfg.hermiteNodes; h++)
        acc += gh.w[h] *
               nuViaCells(DatumFrame{k.rp(), k.v3 - kSqrt2 * k.sigmaV3 * gh.x[h]}, pdf, ctx);
    return acc / kSqrtPi;
}

bool profileWithinConstraints(const DensityProfile& p) {
    if (p.rho.size() != std::size_t(p.grid.nX))
        return false;
    double prev = std::numeric_limits<double>::infinity();
    for (double v : p.rho) {
        if (!std::isfinite(v) || v < 0 || v > prev)
            return false;
        prev = v;
    }
    return true;
}

bool pdfWithinConstraints(const PdfMatrix& pdf) {
    const PhaseGrid& g = pdf.grid;
    if (pdf.f.size() != std::size_t(g.nEps) * std::size_t(g.nEll))
        return false;
    for (int d = 0; d < g.nEll; d++) {
        if (pdf.at(g.nEps - 1, d) != 0.0)
            return false;
        for (int c = 0; c + 1 < g.nEps; c++) {
            double lo = pdf.at(c, d), hi = pdf.at(c + 1, d);
            if (!(lo >= 0) || !(lo >= hi))
                return false;
        }
    }
    return true;
}

/// flat prior terms and hard constraints; -infinity marks a state the
/// posterior assigns zero mass, which the samplers treat as a plain reject
double priorLogTerm(const ModelState& state, const PriorSpec& priors) {
    if (!profileWithinConstraints(state.profile) || !pdfWithinConstraints(state.pdf))
        return kNegInf;
    double lp = priors.logNEllPrior(state.pdf.grid.nEll);
    if (lp == kNegInf)
        return lp;
    for (int b = 0; b < state.profile.grid.nX; b++) {
        double r = state.profile.grid.center(b);
        double rho = state.profile.rho[std::size_t(b)];
        if (rho < priors.envelopeLo(r) || rho > priors.envelopeHi(r))
            return kNegInf;
    }
    return lp;
}

/// shared tail of both posterior routes: per-datum log densities minus the
/// window normalization, on top of the prior terms
double composeLogPosterior(double priorLp, const std::vector<double>& nuConv, double z,
                           std::size_t n) {
    if (!(z > 0))
        throw DataError(
            "log posterior: the distribution places no probability in the observable window "
            "but the catalog is non-empty");
    double lp = priorLp;
    for (double nu : nuConv) {
        if (!(nu > 0))
            return kNegInf;
        lp += std::log(nu);
    }
    return lp - double(n) * std::log(z);
}

struct SweepUnit {
    double rp = 0, v3 = 0, weight = 1;
    int datum = -1;  ///< index into the catalog, -1 for normalization nodes
};

/**
    Fused marginalization at one reduced datum: integrate the pdf over
    (s3, v1, v2) directly. The line of sight is truncated where the local
    escape speed falls to |v3|; the transverse speed is capped by both escape
    and the momentum normalization. Both outer directions use sine-mapped
    Gauss-Legendre nodes, which cluster towards the vanishing boundary. The
    innermost direction needs no quadrature at all: at fixed (s3, v1) the pdf
    is piecewise constant in v2, with energy-cell edges at |v2| = sqrt(Q_c)
    and momentum-cell edges where the tangential speed crosses sqrt(P_d), so
    the integral is an exact sum of cell values times segment lengths between
    the merged edge positions.
*/
double sweptNu(const PotentialTable& pot, const PdfMatrix& pdf, double lmax0, double rp,
               double v3, const math::QuadRule& qs, const math::QuadRule& qt) {
    double rOut = pot.rOut();
    if (!(rp > 0) || rp >= rOut)
        return 0;
    double halfV3Sq = 0.5 * v3 * v3;
    if (!(-pot.phi(rp) > halfV3Sq))
        return 0;
    double s3b;
    if (-pot.phi(rOut) > halfV3Sq) {
        s3b = std::sqrt(rOut * rOut - rp * rp);
    } else {
        double rEsc =
            math::bisect([&](double r) { return -pot.phi(r) - halfV3Sq; }, rp, rOut, 1e-12);
        s3b = std::sqrt(std::max(rEsc * rEsc - rp * rp, 0.0));
    }
    if (!(s3b > 0))
        return 0;

    const PhaseGrid& g = pdf.grid;
    int nE = g.nEps, nL = g.nEll;
    double negPhi0 = -pot.phi0();
    std::vector<double> qsq(std::size_t(nE) + 1);  // v1^2 + v2^2 at energy edges
    std::vector<double> psq(std::size_t(nL) + 1);  // v1^2 + w^2 at momentum edges
    std::vector<double> bp;
    bp.reserve(2 * std::size_t(nE + nL) + 2);

    double total = 0;
    for (std::size_t a = 0; a < qs.x.size(); a++) {
        double s3 = s3b * std::sin(qs.x[a]);
        double wS3 = qs.w[a] * s3b * std::cos(qs.x[a]);
        double r = std::sqrt(rp * rp + s3 * s3);
        double phiR = pot.phi(r);
        double vtSq = -2 * phiR - v3 * v3;
        if (!(vtSq > 0))
            continue;
        for (int c = 0; c <= nE; c++)
            qsq[std::size_t(c)] = 2 * g.epsEdge(c) * negPhi0 - 2 * phiR - v3 * v3;
        double lamScale = lmax0 / r;
        for (int d = 0; d <= nL; d++) {
            double lam = g.ellEdge(d) * lamScale;
            psq[std::size_t(d)] = lam * lam;
        }
        double cosg = s3 / r, sing = rp / r;
        double off = v3 * sing;
        // nothing bound carries more than the escape-energy momentum, so the
        // momentum cap also bounds v1 and no mass is lost to the min
        double v1Top = std::min(std::sqrt(vtSq), lamScale);

        double plane = 0;
        for (std::size_t b = 0; b < qt.x.size(); b++) {
            double v1 = v1Top * std::sin(qt.x[b]);
            double wV1 = 2 * qt.w[b] * v1Top * std::cos(qt.x[b]);  // mirror v1 < 0
            double v1sq = v1 * v1;
            double qTopSq = qsq[std::size_t(nE)] - v1sq;
            double pTopSq = psq[std::size_t(nL)] - v1sq;
            if (!(qTopSq > 0) || !(pTopSq > 0))
                continue;
            double qTop = std::sqrt(qTopSq);
            double pTop = std::sqrt(pTopSq);
            double lo = std::max(-qTop, (-pTop + off) / cosg);
            double hi = std::min(qTop, (pTop + off) / cosg);
            if (!(hi > lo))
                continue;
            bp.clear();
            bp.push_back(lo);
            bp.push_back(hi);
            for (int c = 1; c < nE; c++) {
                double e2 = qsq[std::size_t(c)] - v1sq;
                if (e2 > 0) {
                    double q = std::sqrt(e2);
                    if (-q > lo && -q < hi)
                        bp.push_back(-q);
                    if (q > lo && q < hi)
                        bp.push_back(q);
                }
            }
            for (int d = 1; d < nL; d++) {
                double e2 = psq[std::size_t(d)] - v1sq;
                if (e2 > 0) {
                    double p = std::sqrt(e2);
                    double xLo = (-p + off) / cosg, xHi = (p + off) / cosg;
                    if (xLo > lo && xLo < hi)
                        bp.push_back(xLo);
                    if (xHi > lo && xHi < hi)
                        bp.push_back(xHi);
                }
            }
            std::sort(bp.begin(), bp.end());
            double line = 0;
            for (std::size_t s = 0; s + 1 < bp.size(); s++) {
                double len = bp[s + 1] - bp[s];
                if (!(len > 0))
                    continue;
                double mid = 0.5 * (bp[s] + bp[s + 1]);
                double rad = v1sq + mid * mid;
                int c = int(std::upper_bound(qsq.begin(), qsq.end(), rad) - qsq.begin()) - 1;
                if (c < 0 || c >= nE)
                    continue;  // rounding at the window edge
                double w = mid * cosg - v3 * sing;
                double tan2 = v1sq + w * w;
                int d = int(std::upper_bound(psq.begin(), psq.end(), tan2) - psq.begin()) - 1;
                if (d < 0 || d >= nL)
                    continue;
                line += pdf.at(c, d) * len;
            }
            plane += wV1 * line;
        }
        total += wS3 * plane;
    }
    return total;
}

}  // namespace

void KinematicDatum::validate() const {
    if (!std::isfinite(x1) || !std::isfinite(x2) || !std::isfinite(v3) ||
        !std::isfinite(sigmaV3))
        throw DataError("datum: non-finite field");
    if (sigmaV3 < 0)
        throw DataError("datum: negative velocity error");
    if (!(rp() > 0))
        throw DataError("datum: zero projected radius is not representable");
}

void LikelihoodConfig::validate() const {
    overlap.validate();
    if (zRadialNodes < 2 || zVelocityNodes < 2 || sweepS3Nodes < 2 || sweepV1Nodes < 2)
        throw ConfigError("likelihood config: too few quadrature nodes");
    if (zVelocityNodes % 2)
        throw ConfigError(
            "likelihood config: velocity node count must be even (symmetric zero-free rule)");
    if (hermiteNodes < 1)
        throw ConfigError("likelihood config: error kernel needs at least one node");
    if (!(rOutFactor >= 1) || !std::isfinite(rOutFactor))
        throw ConfigError("likelihood config: outer reach factor must be at least 1");
    if (potentialTableSize < 16)
        throw ConfigError("likelihood config: potential table too small");
    if (!(epsMargin > 0) || !std::isfinite(epsMargin))
        throw ConfigError("likelihood config: escape clearance must be positive");
    if (nEpsMin < 1 || nEpsCap < nEpsMin)
        throw ConfigError("likelihood config: energy bin bounds out of order");
}

void LikelihoodConfig::validateWindow() const {
    if (!(rMin > 0) || !(rMax > rMin) || !std::isfinite(rMax))
        throw ConfigError("likelihood config: observable window needs 0 < rMin < rMax");
}

void PriorSpec::validate() const {
    if (!(nfwSpanDecades >= 0) || !std::isfinite(nfwSpanDecades))
        throw ConfigError("prior: envelope span must be non-negative");
    if (nEllLo < 1 || nEllHi < nEllLo)
        throw ConfigError("prior: momentum bin support out of order");
    if (!(rsLo > 0) || !(rsHi >= rsLo) || !std::isfinite(rsHi))
        throw ConfigError("prior: scale radius interval out of order");
    if (!(rho0Lo > 0) || !(rho0Hi >= rho0Lo) || !std::isfinite(rho0Hi))
        throw ConfigError("prior: density scale interval out of order");
}

double nfwDensity(double r, double rs, double rho0) {
    double x = r / rs;
    return rho0 / (x * (1 + x) * (1 + x));
}

// the reference value is increasing in rs and linear in rho0, so the
// extremes over the whole reference box sit at two of its corners
double PriorSpec::envelopeLo(double r) const {
    return std::pow(10.0, -nfwSpanDecades) * nfwDensity(r, rsLo, rho0Lo);
}

double PriorSpec::envelopeHi(double r) const {
    return std::pow(10.0, nfwSpanDecades) * nfwDensity(r, rsHi, rho0Hi);
}

double PriorSpec::logNEllPrior(int nEll) const {
    if (nEll < nEllLo || nEll > nEllHi)
        return kNegInf;
    return -std::log(double(nEllHi - nEllLo + 1));
}

CatalogStats catalogStats(const std::vector<KinematicDatum>& data) {
    if (data.empty())
        throw DataError("catalog: no data");
    CatalogStats s;
    s.rMinProj = std::numeric_limits<double>::infinity();
    s.rMaxProj = 0;
    s.v3AbsMax = 0;
    for (const KinematicDatum& k : data) {
        k.validate();
        double rp = k.rp();
        s.rMinProj = std::min(s.rMinProj, rp);
        s.rMaxProj = std::max(s.rMaxProj, rp);
        s.v3AbsMax = std::max(s.v3AbsMax, std::fabs(k.v3));
    }
    return s;
}

ModelState buildModelState(const DensityProfile& profile, const std::vector<double>& gamma,
                           int nEll, const std::vector<KinematicDatum>& data,
                           const LikelihoodConfig& cfg) {
    cfg.validate();
    profile.validate();
    if (nEll < 1)
        throw ConfigError("model: momentum bin count must be positive");
    if (!gamma.empty() && int(gamma.size()) % nEll != 0)
        throw ConfigError("model: decrement matrix size is not a multiple of the bin count");

    CatalogStats stats;
    double rOut;
    if (data.empty()) {
        rOut = cfg.rOutFactor * profile.grid.outerEdge();
    } else {
        stats = catalogStats(data);
        rOut = std::max(cfg.rOutFactor * stats.rMaxProj, profile.grid.outerEdge());
    }
    PotentialTable pot = PotentialTable::solve(profile, rOut, cfg.potentialTableSize);
    double lmax0 = lmaxAndRc(0.0, pot).lmax;
    if (!(lmax0 > 0))
        throw NumericalError("model: massless density profile supports no bound orbits");

    int nEps = cfg.nEpsMin;
    if (!data.empty()) {
        try {
            nEps = computeNEps(stats, pot, nEll, lmax0);
        } catch (const NumericalError&) {
            // the counting rule rejects any catalog whose circular momentum
            // at the innermost radius exceeds the well depth there; fall back
            // to granting the least bound datum epsMargin bins of clearance
            // below the escape edge
            double clearance = 1;
            for (const KinematicDatum& k : data) {
                double depth = -(pot.phi(k.rp()) + 0.5 * k.v3 * k.v3) / (-pot.phi0());
                clearance = std::min(clearance, depth);
            }
            if (clearance > 0) {
                double want = cfg.epsMargin / clearance;
                nEps = want >= double(cfg.nEpsCap) ? cfg.nEpsCap : int(std::ceil(want));
            } else {
                nEps = cfg.nEpsCap;  // unbound data; flagged downstream
            }
        }
        nEps = std::min(std::max(nEps, cfg.nEpsMin), cfg.nEpsCap);
    }

    int oldNEps = gamma.empty() ? 1 : int(gamma.size()) / nEll + 1;
    std::vector<double> migrated = resizeGammaRows(gamma, oldNEps, nEps, nEll);
    PhaseGrid grid{nEps, nEll};
    return ModelState{profile, std::move(pot), lmax0, PdfMatrix::fromGamma(grid, migrated)};
}

double marginalDensity(const KinematicDatum& k, const ModelState& state,
                       const LikelihoodConfig& cfg) {
    cfg.validate();
    k.validate();
    VolumeContext ctx(state.potential, state.pdf.grid, state.lmax0, cfg.overlap);
    return nuViaCells(DatumFrame{k.rp(), k.v3}, state.pdf, ctx);
}

double normalizationConstant(const ModelState& state, const LikelihoodConfig& cfg) {
    cfg.validate();
    cfg.validateWindow();
    VolumeContext ctx(state.potential, state.pdf.grid, state.lmax0, cfg.overlap);
    return windowNorm(state.pdf, ctx, state.potential, cfg);
}

double convolvedDensity(const KinematicDatum& k, const ModelState& state,
                        const LikelihoodConfig& cfg) {
    cfg.validate();
    cfg.validateWindow();
    k.validate();
    VolumeContext ctx(state.potential, state.pdf.grid, state.lmax0, cfg.overlap);
    double z = windowNorm(state.pdf, ctx, state.potential, cfg);
    if (!(z > 0))
        throw DataError("convolved density: window normalization is zero");
    return convolvedNu(k, state.pdf, ctx, cfg) / z;
}

double logPosterior(const ModelState& state, const std::vector<KinematicDatum>& data,
                    const PriorSpec& priors, const LikelihoodConfig& cfg) {
    cfg.validate();
    priors.validate();
    double lp = priorLogTerm(state, priors);
    if (lp == kNegInf || data.empty())
        return lp;
    cfg.validateWindow();
    for (const KinematicDatum& k : data)
        k.validate();
    VolumeContext ctx(state.potential, state.pdf.grid, state.lmax0, cfg.overlap);
    double z = windowNorm(state.pdf, ctx, state.potential, cfg);
    std::vector<double> nu(data.size(), 0.0);
    std::exception_ptr fail = nullptr;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long i = 0; i < long(data.size()); i++) {
        try {
            nu[std::size_t(i)] = convolvedNu(data[std::size_t(i)], state.pdf, ctx, cfg);
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
            {
                if (!fail)
                    fail = std::current_exception();
            }
        }
    }
    if (fail)
        std::rethrow_exception(fail);
    return composeLogPosterior(lp, nu, z, data.size());
}

MarginalSet sweepMarginals(const ModelState& state, const std::vector<KinematicDatum>& data,
                           const LikelihoodConfig& cfg) {
    cfg.validate();
    cfg.validateWindow();
    const PotentialTable& pot = state.potential;

    std::vector<SweepUnit> units;
    math::QuadRule gh = math::gaussHermite(cfg.hermiteNodes);
    for (std::size_t i = 0; i < data.size(); i++) {
        const KinematicDatum& k = data[i];
        k.validate();
        if (k.sigmaV3 == 0) {
            units.push_back({k.rp(), k.v3, 1.0, int(i)});
        } else {
            for (int h = 0; h < cfg.hermiteNodes; h++)
                units.push_back({k.rp(), k.v3 - kSqrt2 * k.sigmaV3 * gh.x[std::size_t(h)],
                                 gh.w[std::size_t(h)] / kSqrtPi, int(i)});
        }
    }
    math::QuadRule qr = math::gaussLegendre(cfg.zRadialNodes, cfg.rMin, cfg.rMax);
    math::QuadRule qv = math::gaussLegendre(cfg.zVelocityNodes);
    for (int i = 0; i < cfg.zRadialNodes; i++) {
        double R = qr.x[std::size_t(i)];
        double vescSq = -2 * pot.phi(R);
        if (!(vescSq > 0))
            continue;
        double vesc = std::sqrt(vescSq);
        for (int j = 0; j < cfg.zVelocityNodes; j++) {
            if (qv.x[std::size_t(j)] <= 0)
                continue;  // even integrand in v3: double the positive half
            units.push_back({R, vesc * qv.x[std::size_t(j)],
                             qr.w[std::size_t(i)] * 2 * math::PI * R * 2 * vesc *
                                 qv.w[std::size_t(j)],
                             -1});
        }
    }

    math::QuadRule qs = math::gaussLegendre(cfg.sweepS3Nodes, 0.0, 0.5 * math::PI);
    math::QuadRule qt = math::gaussLegendre(cfg.sweepV1Nodes, 0.0, 0.5 * math::PI);
    std::vector<double> vals(units.size(), 0.0);
    std::exception_ptr fail = nullptr;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long n = 0; n < long(units.size()); n++) {
        try {
            const SweepUnit& u = units[std::size_t(n)];
            vals[std::size_t(n)] = sweptNu(pot, state.pdf, state.lmax0, u.rp, u.v3, qs, qt);
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
            {
                if (!fail)
                    fail = std::current_exception();
            }
        }
    }
    if (fail)
        std::rethrow_exception(fail);

    MarginalSet out;
    out.nu.assign(data.size(), 0.0);
    for (std::size_t n = 0; n < units.size(); n++) {
        if (units[n].datum < 0)
            out.z += units[n].weight * vals[n];
        else
            out.nu[std::size_t(units[n].datum)] += units[n].weight * vals[n];
    }
    return out;
}

double logPosteriorSwept(const ModelState& state, const std::vector<KinematicDatum>& data,
                         const PriorSpec& priors, const LikelihoodConfig& cfg) {
    cfg.validate();
    priors.validate();
    double lp = priorLogTerm(state, priors);
    if (lp == kNegInf || data.empty())
        return lp;
    MarginalSet set = sweepMarginals(state, data, cfg);
    return composeLogPosterior(lp, set.nu, set.z, data.size());
}

}  // namespace kinemass
