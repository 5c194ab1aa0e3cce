#pragma once
#include <cmath>
#include <vector>

#include "kinemass/elgrid.h"
#include "kinemass/potential.h"
#include "kinemass/projection.h"

namespace kinemass {

/// one observed tracer: projected position, line-of-sight velocity, and the
/// per-datum Gaussian velocity error
struct KinematicDatum {
    double x1 = 0, x2 = 0;  ///< projected sky position
    double v3 = 0;          ///< line-of-sight velocity
    double sigmaV3 = 0;     ///< standard deviation of the v3 measurement

    double rp() const { return std::hypot(x1, x2); }
    void validate() const;
};

/**
    Quadrature and model-building knobs for likelihood evaluation.

    The window [rMin, rMax] is the projected-radius range over which the
    observable density is normalized; callers fill it from the catalog or the
    radial binning before evaluating anything that needs the normalization.
    validate() checks only the knob ranges, so model construction works on a
    config whose window has not been chosen yet.
*/
struct LikelihoodConfig {
    OverlapConfig overlap;    ///< per-cell strip quadrature (reference route)
    int zRadialNodes = 16;    ///< normalization: Gauss-Legendre nodes in R
    int zVelocityNodes = 10;  ///< normalization: nodes in v3, must be even
    int hermiteNodes = 7;     ///< Gauss-Hermite nodes of the error convolution
    int sweepS3Nodes = 12;    ///< fused sweep route: line-of-sight nodes
    int sweepV1Nodes = 32;    ///< fused sweep route: transverse-speed nodes
    double rMin = 0, rMax = 0;  ///< observable window in projected radius

    double rOutFactor = 3;  ///< outer model reach as a multiple of max R_p
    int potentialTableSize = 512;
    double epsMargin = 1.25;  ///< escape clearance of the least-bound datum, in bins
    int nEpsMin = 4;
    int nEpsCap = 40;

    void validate() const;
    void validateWindow() const;
};

/**
    Flat priors of the inference: a log-density box around a reference NFW
    profile, and a discrete uniform law on the momentum bin count. The
    reference (rs, rho0) may itself range over an interval; the envelope at
    radius r is the extreme reference value shifted by nfwSpanDecades decades.
    Point intervals (lo == hi) reproduce a fixed-reference band.
*/
struct PriorSpec {
    double nfwSpanDecades = 3;
    int nEllLo = 5, nEllHi = 10;
    double rsLo = 1, rsHi = 1;
    double rho0Lo = 1, rho0Hi = 1;

    void validate() const;
    double envelopeLo(double r) const;
    double envelopeHi(double r) const;
    /// log 1/(nEllHi-nEllLo+1) inside the support, -infinity outside
    double logNEllPrior(int nEll) const;
};

/// rho0 / [(r/rs)(1 + r/rs)^2]
double nfwDensity(double r, double rs, double rho0);

/**
    Full model snapshot: the binned density, the pdf over the phase grid, and
    the derived quantities both routes need (potential table, momentum
    normalization). Built by buildModelState so the members stay consistent;
    the likelihood operations treat it as read-only.
*/
struct ModelState {
    DensityProfile profile;
    PotentialTable potential;
    double lmax0 = 0;
    PdfMatrix pdf;
};

/// catalog extremes over a datum list; validates every datum
CatalogStats catalogStats(const std::vector<KinematicDatum>& data);

/**
    Assemble a consistent ModelState from a density profile and a decrement
    matrix. Solves the potential out to rOutFactor times the outermost datum
    (never closer than the density grid edge), normalizes momenta by the
    circular value at the escape energy, and picks the energy resolution from
    the catalog: the counting rule based on the least-bound representable
    orbit when it applies, otherwise enough bins that the least-bound datum
    keeps epsMargin bins of clearance below escape. Either result is clamped
    to [nEpsMin, nEpsCap]. gamma rows from a previous resolution are migrated
    (truncate or zero-fill at the escape end); an empty gamma gives the
    all-zero pdf.
*/
ModelState buildModelState(const DensityProfile& profile, const std::vector<double>& gamma,
                           int nEll, const std::vector<KinematicDatum>& data,
                           const LikelihoodConfig& cfg);

/// unnormalized observable density of one datum: sum over phase cells of
/// pdf value times projected cell volume (exactly linear in the pdf)
double marginalDensity(const KinematicDatum& k, const ModelState& state,
                       const LikelihoodConfig& cfg);

/// integral of the marginal density over the observable window, 2 pi R dR
/// times the local escape interval in v3, by tensor-product Gauss-Legendre;
/// zero when the pdf places no mass in the window
double normalizationConstant(const ModelState& state, const LikelihoodConfig& cfg);

/// window-normalized observable density convolved with the datum's Gaussian
/// velocity error by Gauss-Hermite quadrature; sigmaV3 == 0 short-circuits
/// to the unconvolved value
double convolvedDensity(const KinematicDatum& k, const ModelState& state,
                        const LikelihoodConfig& cfg);

/// joint unnormalized log posterior over (profile, pdf, nEll): sum of log
/// convolved densities plus the flat priors. Constraint or prior violations
/// give -infinity rather than an error; a pdf invisible from a non-empty
/// catalog (zero normalization) throws DataError.
double logPosterior(const ModelState& state, const std::vector<KinematicDatum>& data,
                    const PriorSpec& priors, const LikelihoodConfig& cfg);

/// per-datum convolved (unnormalized) marginals plus the normalization
struct MarginalSet {
    std::vector<double> nu;  ///< one entry per datum, error kernel applied
    double z = 0;
};

/**
    Throughput route used by the sampler: integrates the pdf directly over
    (s3, v1, v2) with cosine-clustered fixed nodes, resolving the phase-cell
    decomposition by one merged boundary sweep in v2 per (s3, v1) node
    instead of per-cell strip quadrature. Matches the reference route to the
    accuracy of its node counts and is exactly linear in the pdf.
*/
MarginalSet sweepMarginals(const ModelState& state, const std::vector<KinematicDatum>& data,
                           const LikelihoodConfig& cfg);

/// logPosterior evaluated through sweepMarginals; same prior handling, same
/// error contract, different quadrature
double logPosteriorSwept(const ModelState& state, const std::vector<KinematicDatum>& data,
                         const PriorSpec& priors, const LikelihoodConfig& cfg);

}  // namespace kinemass
