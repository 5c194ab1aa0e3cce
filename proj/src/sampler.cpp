#include "kinemass/sampler.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <utility>

#include "kinemass/errors.h"
#include "kinemass/mathutil.h"

namespace kinemass {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// initial proposal variances: sd = frac times the coordinate, with zero
/// coordinates anchored to the block mean of the nonzero ones (unit scale
/// when the whole block is zero) so they are not pinned at the floor
std::vector<double> initialVariances(const std::vector<double>& coords, double frac,
                                     double floorVar) {
    double mean = 0;
    long npos = 0;
    for (double c : coords)
        if (c > 0) {
            mean += c;
            npos++;
        }
    double anchor = frac * (npos > 0 ? mean / npos : 1.0);
    std::vector<double> v(coords.size());
    for (std::size_t i = 0; i < coords.size(); i++) {
        double sd = coords[i] > 0 ? frac * coords[i] : anchor;
        v[i] = std::max(sd * sd, floorVar);
    }
    return v;
}

}  // namespace

std::vector<double> rhoFromDelta(const std::vector<double>& delta) {
    std::vector<double> rho(delta.size(), 0.0);
    double acc = 0;
    for (std::size_t b = delta.size(); b-- > 0;) {
        acc += delta[b];
        rho[b] = acc;
    }
    return rho;
}

std::vector<double> ChainState::rhoValues() const { return rhoFromDelta(delta); }

void ChainState::validate() const {
    if (nEps < 1 || nEll < 1)
        throw ConfigError("chain state: bin counts must be positive");
    if (gamma.size() != std::size_t(nEps - 1) * std::size_t(nEll))
        throw ConfigError("chain state: decrement matrix size does not match the bin counts");
    for (double d : delta)
        if (!(d >= 0) || !std::isfinite(d))
            throw ConfigError("chain state: density decrements must be finite and non-negative");
    for (double g : gamma)
        if (!(g >= 0) || !std::isfinite(g))
            throw ConfigError("chain state: pdf decrements must be finite and non-negative");
}

KinematicPosterior::KinematicPosterior(RadialGrid grid, std::vector<KinematicDatum> data,
                                       PriorSpec priors, LikelihoodConfig cfg, bool priorOnly)
    : grid_(std::move(grid)),
      data_(priorOnly ? std::vector<KinematicDatum>{} : std::move(data)),
      priors_(priors),
      cfg_(cfg),
      priorOnly_(priorOnly) {
    grid_.validate();
    priors_.validate();
    cfg_.validate();
    if (!data_.empty()) {
        cfg_.validateWindow();
        catalogStats(data_);  // validates every datum once, up front
    }
}

double KinematicPosterior::logDensity(ChainState& s) {
    s.validate();
    bool massless = std::all_of(s.delta.begin(), s.delta.end(), [](double d) { return d == 0; });
    if (massless)
        return kNegInf;  // no potential well, so no bound orbits at all
    ModelState m = buildModelState(DensityProfile{grid_, s.rhoValues()}, s.gamma, s.nEll, data_,
                                   cfg_);
    if (m.pdf.grid.nEps != s.nEps) {
        // the model picked a different energy resolution for this profile;
        // repeat the model's own row migration so the recorded increments
        // are exactly the ones that were evaluated
        s.gamma = resizeGammaRows(s.gamma, s.nEps, m.pdf.grid.nEps, s.nEll);
        s.nEps = m.pdf.grid.nEps;
    }
    try {
        return logPosteriorSwept(m, data_, priors_, cfg_);
    } catch (const DataError&) {
        // the candidate pdf places no probability in the observable window:
        // a rejectable state, not a broken run (the catalog was validated at
        // construction, so no other data failure reaches this point)
        return kNegInf;
    }
}

ChainState KinematicPosterior::initialState(int nEll0, double gamma0) const {
    if (nEll0 < 1)
        throw ConfigError("sampler: initial momentum bin count must be positive");
    if (!(gamma0 > 0) || !std::isfinite(gamma0))
        throw ConfigError("sampler: initial pdf decrement must be positive and finite");
    // geometric midpoints, since the reference intervals are scale parameters
    double rs = std::sqrt(priors_.rsLo * priors_.rsHi);
    double rho0 = std::sqrt(priors_.rho0Lo * priors_.rho0Hi);
    ChainState s;
    s.delta.assign(std::size_t(grid_.nX), 0.0);
    double prev = 0;  // build from the outside in; NFW decreasing makes each step non-negative
    for (int b = grid_.nX - 1; b >= 0; b--) {
        double rho = nfwDensity(grid_.center(b), rs, rho0);
        s.delta[std::size_t(b)] = rho - prev;
        prev = rho;
    }
    s.nEll = nEll0;
    ModelState m = buildModelState(DensityProfile{grid_, s.rhoValues()}, {}, nEll0, data_, cfg_);
    s.nEps = m.pdf.grid.nEps;
    s.gamma.assign(std::size_t(s.nEps - 1) * std::size_t(nEll0), gamma0);
    return s;
}

double proposeFolded(double current, double variance, Rng& rng) {
    if (!(variance > 0) || !std::isfinite(variance))
        throw NumericalError("proposal: variance must be positive and finite");
    return std::fabs(rng.normal(current, std::sqrt(variance)));
}

double foldedNormalDensity(double x, double mean, double variance) {
    if (!(variance > 0) || !std::isfinite(variance))
        throw NumericalError("proposal: variance must be positive and finite");
    if (x < 0)
        return 0;
    double sd = std::sqrt(variance);
    double a = (x - mean) / sd;
    double b = (x + mean) / sd;
    return (std::exp(-0.5 * a * a) + std::exp(-0.5 * b * b)) / (sd * std::sqrt(2 * math::PI));
}

bool acceptMove(double lpCurrent, double lpCandidate, Rng& rng) {
    double u = rng.uniform();  // drawn unconditionally to keep the stream aligned
    return std::isfinite(lpCandidate) && u < std::exp(lpCandidate - lpCurrent);
}

AdaptState AdaptState::init(const std::vector<double>& initialVariance, double floorVariance) {
    AdaptState a;
    a.floorVariance = floorVariance;
    a.cnt.assign(initialVariance.size(), 0.0);
    a.sum.assign(initialVariance.size(), 0.0);
    a.sumSq.assign(initialVariance.size(), 0.0);
    a.initVar = initialVariance;
    return a;
}

void AdaptState::observe(const std::vector<double>& coords) {
    if (coords.size() != cnt.size())
        throw NumericalError("adaptation: coordinate count changed without a dimension sync");
    for (std::size_t i = 0; i < coords.size(); i++) {
        cnt[i] += 1;
        sum[i] += coords[i];
        sumSq[i] += coords[i] * coords[i];
    }
}

double AdaptState::variance(std::size_t i) const {
    if (cnt[i] < 2)
        return std::max(initVar[i], floorVariance);
    double m = sum[i] / cnt[i];
    double v = sumSq[i] / cnt[i] - m * m;
    return std::max(v, floorVariance);
}

void SamplerConfig::validate() const {
    if (nIter < 0)
        throw ConfigError("sampler config: iteration count must be non-negative");
    if (n0 < 1)
        throw ConfigError("sampler config: adaptation start must be positive");
    if (!(floorVariance > 0) || !std::isfinite(floorVariance))
        throw ConfigError("sampler config: variance floor must be positive");
    if (!(initSdFrac > 0) || !std::isfinite(initSdFrac))
        throw ConfigError("sampler config: initial proposal fraction must be positive");
    if (nellPeriod < 0)
        throw ConfigError("sampler config: momentum move period must be non-negative");
    if (nEllLo < 1 || nEllHi < nEllLo)
        throw ConfigError("sampler config: momentum bin support out of order");
    if (adaptStop < -1)
        throw ConfigError("sampler config: adaptation stop must be -1 or an iteration");
    if (thin < 1)
        throw ConfigError("sampler config: thinning stride must be positive");
    if (checkpointEvery < 0)
        throw ConfigError("sampler config: checkpoint period must be non-negative");
}

namespace {

// checkpoint payload doubles go through printf hexfloat, which round-trips
// every finite value bitwise and stays greppable in the file

void putDouble(std::ostream& os, double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%a", v);
    os << buf;
}

std::string nextToken(std::istream& is) {
    std::string t;
    if (!(is >> t))
        throw DataError("checkpoint: truncated stream");
    return t;
}

void expectTag(std::istream& is, const char* tag) {
    std::string t = nextToken(is);
    if (t != tag)
        throw DataError(std::string("checkpoint: expected field '") + tag + "', found '" + t +
                        "'");
}

double parseDouble(const std::string& tok) {
    const char* s = tok.c_str();
    char* end = nullptr;
    double v = std::strtod(s, &end);
    if (end == s || *end != '\0')
        throw DataError("checkpoint: malformed numeric field '" + tok + "'");
    return v;
}

long parseLong(const std::string& tok) {
    const char* s = tok.c_str();
    char* end = nullptr;
    long v = std::strtol(s, &end, 10);
    if (end == s || *end != '\0')
        throw DataError("checkpoint: malformed integer field '" + tok + "'");
    return v;
}

double getDouble(std::istream& is, const char* tag) {
    expectTag(is, tag);
    return parseDouble(nextToken(is));
}

long getLong(std::istream& is, const char* tag) {
    expectTag(is, tag);
    return parseLong(nextToken(is));
}

void putVec(std::ostream& os, const char* tag, const std::vector<double>& v) {
    os << tag << ' ' << v.size();
    for (double x : v) {
        os << ' ';
        putDouble(os, x);
    }
    os << '\n';
}

std::vector<double> getVec(std::istream& is, const char* tag) {
    expectTag(is, tag);
    long n = parseLong(nextToken(is));
    if (n < 0)
        throw DataError("checkpoint: negative vector length");
    std::vector<double> v(std::size_t(n), 0.0);
    for (double& x : v)
        x = parseDouble(nextToken(is));
    return v;
}

void putAdapt(std::ostream& os, const char* prefix, const AdaptState& a) {
    std::string p(prefix);
    os << p << "-floor ";
    putDouble(os, a.floorVariance);
    os << '\n';
    putVec(os, (p + "-cnt").c_str(), a.cnt);
    putVec(os, (p + "-sum").c_str(), a.sum);
    putVec(os, (p + "-sumsq").c_str(), a.sumSq);
    putVec(os, (p + "-initvar").c_str(), a.initVar);
}

AdaptState getAdapt(std::istream& is, const char* prefix) {
    std::string p(prefix);
    AdaptState a;
    a.floorVariance = getDouble(is, (p + "-floor").c_str());
    a.cnt = getVec(is, (p + "-cnt").c_str());
    a.sum = getVec(is, (p + "-sum").c_str());
    a.sumSq = getVec(is, (p + "-sumsq").c_str());
    a.initVar = getVec(is, (p + "-initvar").c_str());
    if (a.sum.size() != a.cnt.size() || a.sumSq.size() != a.cnt.size() ||
        a.initVar.size() != a.cnt.size())
        throw DataError("checkpoint: adaptation moment vectors disagree in length");
    if (!(a.floorVariance > 0))
        throw DataError("checkpoint: adaptation floor must be positive");
    return a;
}

}  // namespace

void Checkpoint::save(std::ostream& os) const {
    os << "kinemass-checkpoint " << version << '\n';
    os << "iter " << state.iter << '\n';
    os << "neps " << state.nEps << '\n';
    os << "nell " << state.nEll << '\n';
    os << "logpost ";
    putDouble(os, state.logPost);
    os << '\n';
    putVec(os, "delta", state.delta);
    putVec(os, "gamma", state.gamma);
    putAdapt(os, "adelta", adaptDelta);
    putAdapt(os, "agamma", adaptGamma);
    os << "accept-main " << acceptMain << ' ' << totalMain << '\n';
    os << "accept-nell " << acceptNEll << ' ' << totalNEll << '\n';
    os << "recorded " << recorded << '\n';
    os << "rng " << rngState << '\n';
    if (!os)
        throw DataError("checkpoint: write failed");
}

Checkpoint Checkpoint::load(std::istream& is) {
    expectTag(is, "kinemass-checkpoint");
    Checkpoint ck;
    ck.version = int(parseLong(nextToken(is)));
    if (ck.version != 1)
        throw DataError("checkpoint: unsupported version");
    ck.state.iter = getLong(is, "iter");
    ck.state.nEps = int(getLong(is, "neps"));
    ck.state.nEll = int(getLong(is, "nell"));
    ck.state.logPost = getDouble(is, "logpost");
    ck.state.delta = getVec(is, "delta");
    ck.state.gamma = getVec(is, "gamma");
    ck.adaptDelta = getAdapt(is, "adelta");
    ck.adaptGamma = getAdapt(is, "agamma");
    expectTag(is, "accept-main");
    ck.acceptMain = parseLong(nextToken(is));
    ck.totalMain = parseLong(nextToken(is));
    expectTag(is, "accept-nell");
    ck.acceptNEll = parseLong(nextToken(is));
    ck.totalNEll = parseLong(nextToken(is));
    ck.recorded = getLong(is, "recorded");
    expectTag(is, "rng");
    std::getline(is, ck.rngState);
    while (!ck.rngState.empty() && ck.rngState.front() == ' ')
        ck.rngState.erase(ck.rngState.begin());
    if (ck.rngState.empty())
        throw DataError("checkpoint: missing generator state");
    ck.state.validate();
    if (ck.adaptDelta.size() != ck.state.delta.size() ||
        ck.adaptGamma.size() != ck.state.gamma.size())
        throw DataError("checkpoint: adaptation state does not match the chain dimensions");
    return ck;
}

Sampler::Sampler(SamplerConfig cfg, Posterior& post, ChainState init, Rng rng,
                 bool freezeAdaptation)
    : cfg_(cfg), post_(&post), state_(std::move(init)), rng_(rng), frozen_(freezeAdaptation) {
    cfg_.validate();
    state_.validate();
    state_.logPost = post_->logDensity(state_);
    if (!std::isfinite(state_.logPost))
        throw ConfigError(
            "sampler: the initial state has zero posterior probability; check for unbound "
            "tracers or widen the density prior");
    adaptDelta_ = AdaptState::init(
        initialVariances(state_.delta, cfg_.initSdFrac, cfg_.floorVariance), cfg_.floorVariance);
    adaptGamma_ = AdaptState::init(
        initialVariances(state_.gamma, cfg_.initSdFrac, cfg_.floorVariance), cfg_.floorVariance);
    nEllCounts_.assign(std::size_t(cfg_.nEllHi - cfg_.nEllLo + 1), 0);
}

Sampler::Sampler(SamplerConfig cfg, Posterior& post, const Checkpoint& ck, bool freezeAdaptation)
    : cfg_(cfg),
      post_(&post),
      state_(ck.state),
      adaptDelta_(ck.adaptDelta),
      adaptGamma_(ck.adaptGamma),
      frozen_(freezeAdaptation),
      acceptMain_(ck.acceptMain),
      totalMain_(ck.totalMain),
      acceptNEll_(ck.acceptNEll),
      totalNEll_(ck.totalNEll),
      recorded_(ck.recorded) {
    cfg_.validate();
    state_.validate();
    if (!std::isfinite(state_.logPost))
        throw DataError("checkpoint: non-finite log posterior");
    rng_.loadState(ck.rngState);
    nEllCounts_.assign(std::size_t(cfg_.nEllHi - cfg_.nEllLo + 1), 0);
}

bool Sampler::step() {
    long n = state_.iter + 1;
    ChainState cand;
    cand.delta.resize(state_.delta.size());
    cand.gamma.resize(state_.gamma.size());
    cand.nEps = state_.nEps;
    cand.nEll = state_.nEll;
    cand.iter = n;
    // fixed draw order (delta block, gamma block, momentum move, decision)
    // so a resumed stream reproduces the original run exactly
    for (std::size_t b = 0; b < state_.delta.size(); b++)
        cand.delta[b] = proposeFolded(state_.delta[b], adaptDelta_.variance(b), rng_);
    for (std::size_t i = 0; i < state_.gamma.size(); i++)
        cand.gamma[i] = proposeFolded(state_.gamma[i], adaptGamma_.variance(i), rng_);
    bool nellAttempt = cfg_.nellPeriod > 0 && n % cfg_.nellPeriod == 0;
    if (nellAttempt) {
        int z = int(rng_.uniformInt(cfg_.nEllLo, cfg_.nEllHi));
        if (z != cand.nEll) {
            cand.gamma = resizeGammaCols(cand.gamma, cand.nEps, cand.nEll, z);
            cand.nEll = z;
        }
    }
    cand.logPost = post_->logDensity(cand);
    bool ok = acceptMove(state_.logPost, cand.logPost, rng_);
    int rowsBefore = state_.nEps;
    int colsBefore = state_.nEll;
    if (ok) {
        state_ = std::move(cand);
        syncAdaptDims(rowsBefore, colsBefore, state_);
    } else {
        state_.iter = n;
    }
    if (nellAttempt) {
        totalNEll_++;
        acceptNEll_ += ok ? 1 : 0;
        int k = state_.nEll - cfg_.nEllLo;
        if (k >= 0 && k < int(nEllCounts_.size()))
            nEllCounts_[std::size_t(k)]++;
    } else {
        totalMain_++;
        acceptMain_ += ok ? 1 : 0;
    }
    observeIfAdapting();
    return ok;
}

void Sampler::syncAdaptDims(int rowsBefore, int colsBefore, const ChainState& accepted) {
    if (accepted.nEll == colsBefore && accepted.nEps == rowsBefore)
        return;
    // mirror the accepted state's own migration path: columns at the old row
    // count, then rows at the new column count
    auto migrate = [&](std::vector<double>& v) {
        if (accepted.nEll != colsBefore)
            v = resizeGammaCols(v, rowsBefore, colsBefore, accepted.nEll);
        if (accepted.nEps != rowsBefore)
            v = resizeGammaRows(v, rowsBefore, accepted.nEps, accepted.nEll);
    };
    migrate(adaptGamma_.cnt);
    migrate(adaptGamma_.sum);
    migrate(adaptGamma_.sumSq);
    migrate(adaptGamma_.initVar);
    // cells the resize created arrive with no history and no initial
    // variance; anchor them to the accepted block so they can move
    double mean = 0;
    long npos = 0;
    for (double g : accepted.gamma)
        if (g > 0) {
            mean += g;
            npos++;
        }
    double anchor = cfg_.initSdFrac * (npos > 0 ? mean / npos : 1.0);
    for (std::size_t i = 0; i < adaptGamma_.initVar.size(); i++)
        if (adaptGamma_.cnt[i] == 0 && adaptGamma_.initVar[i] == 0)
            adaptGamma_.initVar[i] = std::max(anchor * anchor, cfg_.floorVariance);
}

void Sampler::observeIfAdapting() {
    if (frozen_ || state_.iter < cfg_.n0)
        return;
    if (cfg_.adaptStop >= 0 && state_.iter > cfg_.adaptStop)
        return;
    adaptDelta_.observe(state_.delta);
    adaptGamma_.observe(state_.gamma);
}

ChainRecordEntry Sampler::entryOf(const ChainState& s) const {
    return ChainRecordEntry{s.iter, s.logPost, s.nEps, s.nEll, s.delta, s.gamma};
}

Checkpoint Sampler::checkpoint() const {
    Checkpoint ck;
    ck.state = state_;
    ck.adaptDelta = adaptDelta_;
    ck.adaptGamma = adaptGamma_;
    ck.rngState = rng_.saveState();
    ck.acceptMain = acceptMain_;
    ck.totalMain = totalMain_;
    ck.acceptNEll = acceptNEll_;
    ck.totalNEll = totalNEll_;
    ck.recorded = recorded_;
    return ck;
}

ChainSummary Sampler::run(const ChainSinks& sinks) {
    if (recorded_ == 0) {
        if (sinks.record)
            sinks.record(entryOf(state_));
        recorded_ = 1;
    }
    while (state_.iter < cfg_.nIter) {
        step();
        if (state_.iter % cfg_.thin == 0) {
            if (sinks.record)
                sinks.record(entryOf(state_));
            recorded_++;
        }
        if (cfg_.checkpointEvery > 0 && state_.iter % cfg_.checkpointEvery == 0) {
            // a snapshot must never carry a cached log posterior the model no
            // longer reproduces, so cross-check against a fresh evaluation
            ChainState probe = state_;
            double fresh = post_->logDensity(probe);
            if (!(std::fabs(fresh - state_.logPost) <=
                  1e-8 * std::max(1.0, std::fabs(state_.logPost))))
                throw NumericalError(
                    "sampler: cached log posterior drifted from a fresh evaluation at a "
                    "checkpoint");
            if (sinks.checkpoint)
                sinks.checkpoint(checkpoint());
        }
    }
    ChainSummary s;
    s.iterations = state_.iter;
    s.recorded = recorded_;
    s.acceptMain = acceptMain_;
    s.totalMain = totalMain_;
    s.acceptNEll = acceptNEll_;
    s.totalNEll = totalNEll_;
    s.nEllCounts = nEllCounts_;
    s.last = state_;
    return s;
}

}  // namespace kinemass
