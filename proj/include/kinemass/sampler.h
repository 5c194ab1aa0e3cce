#pragma once
#include <functional>
#include <iosfwd>
#include <vector>

#include "kinemass/likelihood.h"
#include "kinemass/rng.h"

namespace kinemass {

/**
    The chain lives in increment coordinates: the density is carried as the
    non-negative bin-to-bin decrements delta[b] = rho[b] - rho[b+1] (with
    rho[nX] = 0) and the pdf as the non-negative row decrements
    gamma[c][d] = f[c][d] - f[c+1][d] (top row f[nEps-1][*] = 0 implied).
    Any non-negative (delta, gamma) therefore reconstructs a profile and a pdf
    that satisfy the monotonicity constraints by construction, so proposals
    never have to be repaired or reflected against them.
*/
/// density reconstructed from its decrements, rho[b] = rho[b+1] + delta[b]
std::vector<double> rhoFromDelta(const std::vector<double>& delta);

struct ChainState {
    std::vector<double> delta;  ///< nX density decrements, outermost last
    std::vector<double> gamma;  ///< (nEps-1) x nEll pdf decrements, row-major
    int nEps = 2;               ///< pdf rows implied by gamma (rows + 1)
    int nEll = 1;
    double logPost = 0;
    long iter = 0;

    /// rho reconstructed by suffix sums, rho[b] = rho[b+1] + delta[b]
    std::vector<double> rhoValues() const;
    /// structural consistency: sizes, non-negativity, finite entries
    void validate() const;
};

/**
    Log-density seam between the chain driver and the model. The production
    implementation rebuilds the model snapshot per call; tests drive the same
    sampler against closed-form targets. logDensity may canonicalize the
    state in place (re-dimension gamma rows when the model's energy
    resolution changed with the profile) so that the recorded state is
    exactly the one that was evaluated.
*/
class Posterior {
public:
    virtual ~Posterior() = default;
    virtual double logDensity(ChainState& s) = 0;
};

/// full inference target: window-normalized kinematic likelihood (swept
/// route) plus the flat priors; priorOnly drops the data term entirely
class KinematicPosterior : public Posterior {
public:
    KinematicPosterior(RadialGrid grid, std::vector<KinematicDatum> data, PriorSpec priors,
                       LikelihoodConfig cfg, bool priorOnly = false);

    double logDensity(ChainState& s) override;

    /// starting point: rho from the NFW reference at the midpoint of the
    /// prior's (rs, rho0) intervals, gamma uniformly equal to gamma0
    ChainState initialState(int nEll0, double gamma0 = 1.0) const;

    const RadialGrid& grid() const { return grid_; }
    bool priorOnly() const { return priorOnly_; }

private:
    RadialGrid grid_;
    std::vector<KinematicDatum> data_;
    PriorSpec priors_;
    LikelihoodConfig cfg_;
    bool priorOnly_;
};

/// candidate = |z|, z ~ Normal(current, variance); non-negative by folding
double proposeFolded(double current, double variance, Rng& rng);

/// folded-normal density in the two-exponential sum form, symmetric under
/// swapping x and mean; never used in the acceptance computation (the
/// Hastings correction is identically one), shipped for validation
double foldedNormalDensity(double x, double mean, double variance);

/// symmetric-proposal Metropolis decision on a log-posterior difference;
/// consumes exactly one uniform draw, rejects non-finite candidates
bool acceptMove(double lpCurrent, double lpCandidate, Rng& rng);

/**
    Per-coordinate proposal variances adapted from the running first and
    second moments of the chain since iteration n0. Before two observations
    arrive a coordinate uses its initial variance; afterwards the two-moment
    empirical variance, clamped below by floorVariance either way. The
    coordinate layout of the gamma block follows the chain's re-dimensioning
    moves, migrating history cell by cell.
*/
struct AdaptState {
    double floorVariance = 1e-12;
    std::vector<double> cnt;  ///< observations per coordinate (doubles so the
                              ///< gamma-block resize helpers apply unchanged)
    std::vector<double> sum;
    std::vector<double> sumSq;
    std::vector<double> initVar;

    /// fresh state with every coordinate at its initial variance
    static AdaptState init(const std::vector<double>& initialVariance, double floorVariance);

    void observe(const std::vector<double>& coords);
    double variance(std::size_t i) const;
    std::size_t size() const { return cnt.size(); }
};

/// driver knobs; the N_ell move proposes from the discrete uniform law on
/// [nEllLo, nEllHi], which defaults to the prior support
struct SamplerConfig {
    long nIter = 100000;
    long n0 = 1000;              ///< adaptation start iteration
    double floorVariance = 1e-12;
    double initSdFrac = 0.05;    ///< initial proposal sd as a fraction of the coordinate
    int nellPeriod = 10;         ///< attempt an N_ell move every this many iterations; 0 = never
    int nEllLo = 5;
    int nEllHi = 10;
    long adaptStop = -1;         ///< freeze adaptation after this iteration; -1 = never
    long thin = 1;               ///< record every thin-th iteration
    long checkpointEvery = 0;    ///< emit a checkpoint every this many iterations; 0 = never

    void validate() const;
};

/// one thinned chain record
struct ChainRecordEntry {
    long iter = 0;
    double logPost = 0;
    int nEps = 2;
    int nEll = 1;
    std::vector<double> delta;
    std::vector<double> gamma;
};

/// everything needed to continue a run exactly: chain state, adaptation
/// moments, rng stream, and the driver's bookkeeping counters
struct Checkpoint {
    int version = 1;
    ChainState state;
    AdaptState adaptDelta;
    AdaptState adaptGamma;
    std::string rngState;
    long acceptMain = 0, totalMain = 0;
    long acceptNEll = 0, totalNEll = 0;
    long recorded = 0;

    /// self-describing text format; doubles round-trip bitwise via hexfloat
    void save(std::ostream& os) const;
    static Checkpoint load(std::istream& is);
};

struct ChainSinks {
    std::function<void(const ChainRecordEntry&)> record;    ///< thinned states
    std::function<void(const Checkpoint&)> checkpoint;      ///< periodic snapshots
};

struct ChainSummary {
    long iterations = 0;
    long recorded = 0;
    long acceptMain = 0, totalMain = 0;  ///< iterations without an N_ell component
    long acceptNEll = 0, totalNEll = 0;  ///< iterations with one
    /// post-decision nEll at each N_ell-attempt iteration, indexed from
    /// cfg.nEllLo (occupancy input for the prior-recovery check)
    std::vector<long> nEllCounts;
    ChainState last;

    double mainRate() const { return totalMain > 0 ? double(acceptMain) / totalMain : 0.0; }
    double nEllRate() const { return totalNEll > 0 ? double(acceptNEll) / totalNEll : 0.0; }
};

/**
    Adaptive Metropolis-Hastings driver. Each iteration proposes the whole
    delta block and the whole gamma block from per-coordinate folded normals
    centred on the current values (symmetric, so acceptance reduces to the
    posterior ratio), plus a discrete-uniform N_ell draw every nellPeriod
    iterations; the joint candidate is accepted or rejected in one decision.
    Proposal variances follow the empirical variance of the chain since n0.
    In prior-only mode adaptation stays frozen at the initial variances: a
    flat target gives the empirical-variance feedback loop nothing to
    converge to, and the proposal scale would run away exponentially.
*/
class Sampler {
public:
    Sampler(SamplerConfig cfg, Posterior& post, ChainState init, Rng rng,
            bool freezeAdaptation = false);
    Sampler(SamplerConfig cfg, Posterior& post, const Checkpoint& ck,
            bool freezeAdaptation = false);

    /// one MH iteration; returns whether the candidate was accepted
    bool step();
    /// advance to cfg.nIter, feeding sinks; the initial state is recorded once
    ChainSummary run(const ChainSinks& sinks);

    const ChainState& state() const { return state_; }
    const AdaptState& adaptDelta() const { return adaptDelta_; }
    const AdaptState& adaptGamma() const { return adaptGamma_; }
    Checkpoint checkpoint() const;

private:
    void syncAdaptDims(int rowsBefore, int colsBefore, const ChainState& accepted);
    void observeIfAdapting();
    ChainRecordEntry entryOf(const ChainState& s) const;

    SamplerConfig cfg_;
    Posterior* post_;
    ChainState state_;
    AdaptState adaptDelta_;
    AdaptState adaptGamma_;
    Rng rng_;
    bool frozen_ = false;
    long acceptMain_ = 0, totalMain_ = 0;
    long acceptNEll_ = 0, totalNEll_ = 0;
    long recorded_ = 0;
    std::vector<long> nEllCounts_;
};

}  // namespace kinemass
