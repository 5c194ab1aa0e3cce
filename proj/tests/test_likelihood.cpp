#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "kinemass/errors.h"
#include "kinemass/likelihood.h"
#include "kinemass/mathutil.h"
#include "kinemass/projection.h"
#include "kinemass/rng.h"
#include "oracles.h"

using namespace kinemass;
using doctest::Approx;

namespace {

// analytic Plummer background (M = a = 1, so phi(0) = -1); the density slot
// is filled with the matching profile so prior checks in the log posterior
// have something sensible to look at
ModelState analyticState(const PhaseGrid& grid, double rOut, int nTable = 4096) {
    PotentialTable pot = PotentialTable::fromFunction(
        [](double r) { return oracle::plummerPhi(r); },
        [](double r) { return oracle::plummerMassEnclosed(r) / (r * r); }, rOut, nTable, 1.0);
    double lmax0 = lmaxAndRc(0.0, pot).lmax;
    DensityProfile prof;
    prof.grid = RadialGrid{0.0, 0.25, 8};
    prof.rho.resize(8);
    for (int b = 0; b < 8; b++)
        prof.rho[std::size_t(b)] = oracle::plummerRho(prof.grid.center(b));
    return ModelState{std::move(prof), std::move(pot), lmax0, PdfMatrix(grid)};
}

// lowered-isothermal-flavoured cell values: decreasing in energy, Gaussian in
// momentum; not a valid monotone matrix in the top row, which the
// marginalization operations must not care about
PdfMatrix smoothPdf(const PhaseGrid& g, double lmax0, double sigma = 0.4, double ra = 2) {
    PdfMatrix pdf(g);
    for (int c = 0; c < g.nEps; c++)
        for (int d = 0; d < g.nEll; d++) {
            double eps = -1 + (c + 0.5) / double(g.nEps);
            double ell = (d + 0.5) / double(g.nEll) * lmax0;
            pdf.at(c, d) = std::exp(-ell * ell / (ra * sigma * sigma)) * std::exp(-eps / (sigma * sigma));
        }
    return pdf;
}

PdfMatrix randomPdf(const PhaseGrid& g, Rng& rng, double scale = 1.0) {
    PdfMatrix pdf(g);
    for (double& v : pdf.f)
        v = scale * rng.uniform();
    return pdf;
}

// window integral of the marginal density on an independent (unfolded)
// tensor-product rule, sharing only the cell-volume primitive
double handWindowIntegral(const ModelState& st, const LikelihoodConfig& cfg, int nR, int nV) {
    math::QuadRule qr = math::gaussLegendre(nR, cfg.rMin, cfg.rMax);
    math::QuadRule qv = math::gaussLegendre(nV);
    VolumeContext ctx(st.potential, st.pdf.grid, st.lmax0, cfg.overlap);
    double total = 0;
    for (int i = 0; i < nR; i++) {
        double R = qr.x[i];
        double vesc = std::sqrt(-2 * st.potential.phi(R));
        for (int j = 0; j < nV; j++) {
            DatumFrame frame{R, vesc * qv.x[j]};
            double nu = 0;
            for (int c = 0; c < st.pdf.grid.nEps; c++)
                for (int d = 0; d < st.pdf.grid.nEll; d++) {
                    double f = st.pdf.at(c, d);
                    if (f != 0)
                        nu += f * cellVolume(0, c, d, frame, ctx).value;
                }
            total += qr.w[i] * 2 * oracle::PI * R * vesc * qv.w[j] * nu;
        }
    }
    return total;
}

LikelihoodConfig windowedConfig(double rMin, double rMax) {
    LikelihoodConfig cfg;
    cfg.rMin = rMin;
    cfg.rMax = rMax;
    return cfg;
}

}  // namespace

TEST_CASE("datum, config and prior validation") {
    KinematicDatum good{0.3, -0.4, 0.2, 0.05};
    CHECK(good.rp() == Approx(0.5));
    CHECK_NOTHROW(good.validate());

    CHECK_THROWS_AS((KinematicDatum{0, 0, 0.1, 0.0}.validate()), DataError);  // zero radius
    CHECK_THROWS_AS((KinematicDatum{0.3, 0, 0.1, -1e-3}.validate()), DataError);
    double nan = std::nan("");
    CHECK_THROWS_AS((KinematicDatum{0.3, 0, nan, 0.0}.validate()), DataError);
    CHECK_THROWS_AS((KinematicDatum{nan, 0, 0.1, 0.0}.validate()), DataError);

    LikelihoodConfig cfg;
    CHECK_NOTHROW(cfg.validate());             // window not needed
    CHECK_THROWS_AS(cfg.validateWindow(), ConfigError);
    cfg.rMin = 0.2;
    cfg.rMax = 2.0;
    CHECK_NOTHROW(cfg.validateWindow());
    cfg.rMax = 0.1;
    CHECK_THROWS_AS(cfg.validateWindow(), ConfigError);

    LikelihoodConfig bad;
    bad.zVelocityNodes = 9;  // folding needs an even, zero-free rule
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = LikelihoodConfig{};
    bad.hermiteNodes = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = LikelihoodConfig{};
    bad.rOutFactor = 0.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = LikelihoodConfig{};
    bad.nEpsMin = 10;
    bad.nEpsCap = 5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = LikelihoodConfig{};
    bad.overlap.tol = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    PriorSpec pri;
    CHECK_NOTHROW(pri.validate());
    CHECK(pri.logNEllPrior(5) == Approx(std::log(1.0 / 6)).epsilon(1e-14));
    CHECK(pri.logNEllPrior(10) == Approx(std::log(1.0 / 6)).epsilon(1e-14));
    CHECK(pri.logNEllPrior(4) == -std::numeric_limits<double>::infinity());
    CHECK(pri.logNEllPrior(11) == -std::numeric_limits<double>::infinity());

    PriorSpec badPri;
    badPri.nEllLo = 8;
    badPri.nEllHi = 5;
    CHECK_THROWS_AS(badPri.validate(), ConfigError);
    badPri = PriorSpec{};
    badPri.rsLo = -1;
    CHECK_THROWS_AS(badPri.validate(), ConfigError);
    badPri = PriorSpec{};
    badPri.rho0Lo = 2;
    badPri.rho0Hi = 1;
    CHECK_THROWS_AS(badPri.validate(), ConfigError);
    badPri = PriorSpec{};
    badPri.nfwSpanDecades = -0.5;
    CHECK_THROWS_AS(badPri.validate(), ConfigError);
}

TEST_CASE("reference profile and prior envelope") {
    Rng rng(41001);
    for (int i = 0; i < 200; i++) {
        double r = std::exp(rng.uniform(-3, 3));
        double rs = std::exp(rng.uniform(-1, 1));
        double rho0 = std::exp(rng.uniform(-2, 2));
        CHECK(nfwDensity(r, rs, rho0) == Approx(oracle::nfwRho(r, rs, rho0)).epsilon(1e-14));
    }

    // point reference interval: the band is the reference shifted by the span
    PriorSpec point;
    point.nfwSpanDecades = 2;
    point.rsLo = point.rsHi = 1.3;
    point.rho0Lo = point.rho0Hi = 0.7;
    for (int i = 0; i < 50; i++) {
        double r = std::exp(rng.uniform(-2, 2));
        double ref = nfwDensity(r, 1.3, 0.7);
        CHECK(point.envelopeLo(r) == Approx(ref * 1e-2).epsilon(1e-12));
        CHECK(point.envelopeHi(r) == Approx(ref * 1e2).epsilon(1e-12));
    }

    // interval reference: every shifted member profile stays inside the band
    PriorSpec band;
    band.nfwSpanDecades = 1.5;
    band.rsLo = 0.5;
    band.rsHi = 2.0;
    band.rho0Lo = 0.2;
    band.rho0Hi = 3.0;
    CHECK_NOTHROW(band.validate());
    double shift = std::pow(10.0, band.nfwSpanDecades);
    for (int i = 0; i < 500; i++) {
        double r = std::exp(rng.uniform(-2.5, 2.5));
        double rs = rng.uniform(band.rsLo, band.rsHi);
        double rho0 = rng.uniform(band.rho0Lo, band.rho0Hi);
        double ref = nfwDensity(r, rs, rho0);
        CHECK(band.envelopeLo(r) <= ref / shift * (1 + 1e-12));
        CHECK(band.envelopeHi(r) >= ref * shift * (1 - 1e-12));
        CHECK(band.envelopeLo(r) > 0);
    }
    // and the band is tight: the corners themselves sit on the edges
    for (int i = 0; i < 50; i++) {
        double r = std::exp(rng.uniform(-2.5, 2.5));
        CHECK(band.envelopeLo(r) ==
              Approx(nfwDensity(r, band.rsLo, band.rho0Lo) / shift).epsilon(1e-12));
        CHECK(band.envelopeHi(r) ==
              Approx(nfwDensity(r, band.rsHi, band.rho0Hi) * shift).epsilon(1e-12));
    }
}

TEST_CASE("catalog stats and model assembly") {
    std::vector<KinematicDatum> data{
        {0.6, 0.8, 0.3, 0.0},    // rp = 1.0
        {0.3, -0.4, -0.7, 0.1},  // rp = 0.5
        {-1.2, 0.9, 0.05, 0.0},  // rp = 1.5
    };
    CatalogStats stats = catalogStats(data);
    CHECK(stats.rMinProj == Approx(0.5).epsilon(1e-15));
    CHECK(stats.rMaxProj == Approx(1.5).epsilon(1e-15));
    CHECK(stats.v3AbsMax == Approx(0.7).epsilon(1e-15));

    CHECK_THROWS_AS(catalogStats({}), DataError);
    std::vector<KinematicDatum> badData = data;
    badData[1].sigmaV3 = -0.1;
    CHECK_THROWS_AS(catalogStats(badData), DataError);

    DensityProfile prof;
    prof.grid = RadialGrid{0.0, 0.25, 8};
    prof.rho.resize(8);
    for (int b = 0; b < 8; b++)
        prof.rho[std::size_t(b)] = oracle::plummerRho(prof.grid.center(b));

    LikelihoodConfig cfg;
    int nEll = 3;
    ModelState st = buildModelState(prof, {}, nEll, data, cfg);

    // reach: three times the outermost projected datum (farther than the grid)
    CHECK(st.potential.rOut() == Approx(4.5).epsilon(1e-12));
    CHECK(st.lmax0 == Approx(lmaxAndRc(0.0, st.potential).lmax).epsilon(1e-14));
    CHECK(st.pdf.grid.nEll == nEll);

    // the counting rule on the least-bound representable orbit rejects this
    // catalog (the momentum term at rMinProj exceeds the well depth), so the
    // builder falls back to the escape-clearance rule
    CHECK_THROWS_AS(computeNEps(stats, st.potential, nEll, st.lmax0), NumericalError);
    double g = 1;
    for (const KinematicDatum& k : data) {
        double depth =
            -(st.potential.phi(k.rp()) + 0.5 * k.v3 * k.v3) / (-st.potential.phi0());
        g = std::min(g, depth);
    }
    REQUIRE(g > 0);
    int expected = std::min(std::max(int(std::ceil(cfg.epsMargin / g)), cfg.nEpsMin), cfg.nEpsCap);
    CHECK(st.pdf.grid.nEps == expected);
    CHECK(st.pdf.grid.nEps >= cfg.nEpsMin);
    CHECK(st.pdf.grid.nEps <= cfg.nEpsCap);

    // all-zero decrement seed gives the all-zero pdf
    for (double v : st.pdf.f)
        CHECK(v == 0.0);

    // a datum grazing escape pushes the resolution to the cap
    std::vector<KinematicDatum> shallow = data;
    double vesc = std::sqrt(-2 * st.potential.phi(1.0));
    shallow.push_back({1.0, 0.0, 0.999 * vesc, 0.0});
    ModelState stCap = buildModelState(prof, {}, nEll, shallow, cfg);
    CHECK(stCap.pdf.grid.nEps == cfg.nEpsCap);

    // deep data alone floor out at the minimum
    std::vector<KinematicDatum> deep{{0.05, 0.0, 0.01, 0.0}, {0.0, 0.08, -0.02, 0.0}};
    ModelState stMin = buildModelState(prof, {}, nEll, deep, cfg);
    CHECK(stMin.pdf.grid.nEps == cfg.nEpsMin);

    // decrement rows from an older resolution migrate: common rows keep their
    // values, rows near escape fill with zeros
    int oldNEps = st.pdf.grid.nEps + 3;
    std::vector<double> gamma(std::size_t(oldNEps - 1) * nEll);
    for (std::size_t i = 0; i < gamma.size(); i++)
        gamma[i] = 0.01 * double(i + 1);
    ModelState stMig = buildModelState(prof, gamma, nEll, data, cfg);
    REQUIRE(stMig.pdf.grid.nEps == expected);
    std::vector<double> migrated =
        resizeGammaRows(gamma, oldNEps, stMig.pdf.grid.nEps, nEll);
    PdfMatrix expectPdf = PdfMatrix::fromGamma(stMig.pdf.grid, migrated);
    REQUIRE(stMig.pdf.f.size() == expectPdf.f.size());
    for (std::size_t i = 0; i < expectPdf.f.size(); i++)
        CHECK(stMig.pdf.f[i] == expectPdf.f[i]);

    // empty catalog: minimal resolution, reach set by the density grid
    ModelState stEmpty = buildModelState(prof, {}, nEll, {}, cfg);
    CHECK(stEmpty.pdf.grid.nEps == cfg.nEpsMin);
    CHECK(stEmpty.potential.rOut() >= prof.grid.outerEdge());

    CHECK_THROWS_AS(buildModelState(prof, {}, 0, data, cfg), ConfigError);
    std::vector<double> ragged(5);  // not a multiple of nEll
    CHECK_THROWS_AS(buildModelState(prof, ragged, nEll, data, cfg), ConfigError);
}

TEST_CASE("marginal density: null, single-cell and linearity") {
    PhaseGrid grid{6, 3};
    ModelState st = analyticState(grid, 6.0);
    LikelihoodConfig cfg;
    KinematicDatum k{0.5, 0.3, 0.25, 0.0};

    CHECK(marginalDensity(k, st, cfg) == 0.0);  // empty pdf, exactly zero

    // a single occupied cell reduces to value times projected cell volume
    VolumeContext ctx(st.potential, grid, st.lmax0, cfg.overlap);
    DatumFrame frame{k.rp(), k.v3};
    for (int c : {0, 2, 5})
        for (int d : {0, 2}) {
            ModelState one = st;
            one.pdf.at(c, d) = 1.75;
            double vol = cellVolume(0, c, d, frame, ctx).value;
            CHECK(marginalDensity(k, one, cfg) == 1.75 * vol);
        }

    // exact linearity in the pdf
    Rng rng(41002);
    for (int trial = 0; trial < 20; trial++) {
        PdfMatrix a = randomPdf(grid, rng);
        PdfMatrix b = randomPdf(grid, rng, 2.5);
        double alpha = rng.uniform(0.2, 4.0);
        ModelState stA = st, stB = st, stC = st;
        stA.pdf = a;
        stB.pdf = b;
        stC.pdf = PdfMatrix(grid);
        for (std::size_t i = 0; i < a.f.size(); i++)
            stC.pdf.f[i] = a.f[i] + alpha * b.f[i];
        double nuA = marginalDensity(k, stA, cfg);
        double nuB = marginalDensity(k, stB, cfg);
        double nuC = marginalDensity(k, stC, cfg);
        CHECK(nuC == Approx(nuA + alpha * nuB).epsilon(1e-12));
    }
}

TEST_CASE("marginal density against direct Monte Carlo") {
    PhaseGrid grid{5, 3};
    double rOut = 6.0;
    ModelState st = analyticState(grid, rOut, 8192);
    st.pdf = smoothPdf(grid, st.lmax0);
    LikelihoodConfig cfg;

    Rng rng(41003);
    auto phi = [](double r) { return oracle::plummerPhi(r); };
    for (auto [rp, v3] : {std::pair{0.6, 0.15}, {1.1, -0.5}, {0.35, 0.0}}) {
        KinematicDatum k{rp, 0.0, v3, 0.0};
        double got = marginalDensity(k, st, cfg);
        double s3cap = std::sqrt(rOut * rOut - rp * rp);
        oracle::McEstimate mc = oracle::mcMarginalDensity(
            phi, rp, v3, -1.0, st.lmax0, st.pdf.f, grid.nEps, grid.nEll, s3cap, rng, 4000000);
        REQUIRE(mc.se < 0.01 * got);
        CHECK(std::fabs(got - mc.mean) <= 0.02 * got + 3 * mc.se);
    }
}

TEST_CASE("window normalization") {
    PhaseGrid grid{5, 3};
    double rOut = 6.0;
    ModelState st = analyticState(grid, rOut, 8192);
    st.pdf = smoothPdf(grid, st.lmax0);
    LikelihoodConfig cfg = windowedConfig(0.3, 2.0);

    ModelState empty = st;
    empty.pdf = PdfMatrix(grid);
    CHECK(normalizationConstant(empty, cfg) == 0.0);

    double z = normalizationConstant(st, cfg);
    REQUIRE(z > 0);

    // exactly linear in the pdf (doubling every cell doubles the integral)
    ModelState twice = st;
    for (double& v : twice.pdf.f)
        v *= 2;
    CHECK(normalizationConstant(twice, cfg) == Approx(2 * z).epsilon(1e-13));

    // folding the velocity nodes must agree with the plain unfolded rule
    CHECK(z == Approx(handWindowIntegral(st, cfg, cfg.zRadialNodes, cfg.zVelocityNodes))
                   .epsilon(1e-12));

    // and with a refined independent rule (quadrature is converged)
    CHECK(z == Approx(handWindowIntegral(st, cfg, 32, 20)).epsilon(5e-3));

    Rng rng(41004);
    auto phi = [](double r) { return oracle::plummerPhi(r); };
    oracle::McEstimate mc =
        oracle::mcWindowNormalization(phi, -1.0, st.lmax0, st.pdf.f, grid.nEps, grid.nEll,
                                      cfg.rMin, cfg.rMax, rOut, rng, 6000000);
    REQUIRE(mc.se < 0.012 * z);
    CHECK(std::fabs(z - mc.mean) <= 0.02 * z + 3 * mc.se);
}

TEST_CASE("error kernel convolution") {
    PhaseGrid grid{4, 2};
    ModelState st = analyticState(grid, 6.0);
    st.pdf = smoothPdf(grid, st.lmax0);
    LikelihoodConfig cfg = windowedConfig(0.2, 1.8);
    cfg.overlap.tol = 1e-4;  // the kernel comparison reuses one evaluator, so
    cfg.overlap.nV1 = 24;    // cell quadrature error cancels; keep it cheap

    double z = normalizationConstant(st, cfg);
    REQUIRE(z > 0);

    KinematicDatum exact{0.5, 0.0, 0.3, 0.0};
    CHECK(convolvedDensity(exact, st, cfg) == marginalDensity(exact, st, cfg) / z);

    // a vanishing width degenerates smoothly to the exact value
    KinematicDatum narrow = exact;
    narrow.sigmaV3 = 1e-9;
    CHECK(convolvedDensity(narrow, st, cfg) ==
          Approx(convolvedDensity(exact, st, cfg)).epsilon(1e-7));

    // Gauss-Hermite against a brute-force trapezoid of the same integrand
    KinematicDatum smeared{0.5, 0.0, 0.3, 0.15};
    double got = convolvedDensity(smeared, st, cfg);
    long nT = 4096;
    double lo = -8 * smeared.sigmaV3, hi = 8 * smeared.sigmaV3;
    double h = (hi - lo) / double(nT);
    double acc = 0;
    for (long i = 0; i <= nT; i++) {
        double u = lo + double(i) * h;
        KinematicDatum shifted = exact;
        shifted.v3 = smeared.v3 - u;
        double kern = std::exp(-0.5 * u * u / (smeared.sigmaV3 * smeared.sigmaV3)) /
                      (std::sqrt(2 * oracle::PI) * smeared.sigmaV3);
        acc += (i == 0 || i == nT ? 0.5 : 1.0) * kern * marginalDensity(shifted, st, cfg);
    }
    acc *= h / z;
    CHECK(got == Approx(acc).epsilon(1e-4));
}

TEST_CASE("log posterior composition") {
    PhaseGrid grid{6, 3};
    ModelState base = analyticState(grid, 6.0);
    LikelihoodConfig cfg = windowedConfig(0.02, 2.0);

    PriorSpec pri;
    pri.nEllLo = 2;
    pri.nEllHi = 7;  // support size 6, grid.nEll = 3 sits inside
    pri.nfwSpanDecades = 8;
    // reference scales roughly matched to the Plummer profile in the state
    pri.rsLo = pri.rsHi = 1.0;
    pri.rho0Lo = pri.rho0Hi = 0.2;

    SUBCASE("single occupied cell, single datum") {
        ModelState st = base;
        st.pdf.at(0, 0) = 2.3;  // deepest energy, lowest momentum: valid monotone
        KinematicDatum k{0.05, 0.0, 0.0, 0.0};
        VolumeContext ctx(st.potential, grid, st.lmax0, cfg.overlap);
        double vol = cellVolume(0, 0, 0, DatumFrame{k.rp(), k.v3}, ctx).value;
        REQUIRE(vol > 0);
        double w = handWindowIntegral(st, cfg, cfg.zRadialNodes, cfg.zVelocityNodes);
        double expect = std::log(2.3 * vol / w) + std::log(1.0 / 6);
        CHECK(logPosterior(st, {k}, pri, cfg) == Approx(expect).epsilon(1e-9));
    }

    SUBCASE("datum outside the support of the pdf") {
        ModelState st = base;
        st.pdf.at(0, 0) = 1.0;  // only the deepest-energy cell is occupied
        // a datum too shallow to reach that cell contributes zero density
        double vesc = std::sqrt(-2 * st.potential.phi(1.5));
        KinematicDatum k{1.5, 0.0, 0.8 * vesc, 0.0};
        CHECK(logPosterior(st, {k}, pri, cfg) == -std::numeric_limits<double>::infinity());
    }

    SUBCASE("appending a datum adds its log convolved density") {
        ModelState st = base;
        st.pdf = PdfMatrix::fromGamma(grid, [&] {
            Rng rng(41005);
            std::vector<double> gamma(std::size_t(grid.nEps - 1) * grid.nEll);
            for (double& x : gamma)
                x = rng.uniform();
            return gamma;
        }());
        std::vector<KinematicDatum> data{{0.4, 0.1, 0.2, 0.0}, {0.8, -0.3, -0.35, 0.05}};
        KinematicDatum extra{0.15, 0.6, 0.4, 0.1};
        double lp2 = logPosterior(st, data, pri, cfg);
        data.push_back(extra);
        double lp3 = logPosterior(st, data, pri, cfg);
        CHECK(lp3 - lp2 == Approx(std::log(convolvedDensity(extra, st, cfg))).epsilon(1e-10));
    }

    SUBCASE("prior support violations give minus infinity, not errors") {
        ModelState st = base;
        st.pdf.at(0, 0) = 1.0;
        KinematicDatum k{0.05, 0.0, 0.0, 0.0};
        double inf = std::numeric_limits<double>::infinity();

        PriorSpec narrow = pri;
        narrow.nEllLo = 4;  // grid.nEll = 3 falls outside
        narrow.nEllHi = 7;
        CHECK(logPosterior(st, {k}, narrow, cfg) == -inf);

        ModelState heavy = st;
        for (double& v : heavy.profile.rho)
            v *= 1e12;  // far above the envelope
        CHECK(logPosterior(heavy, {k}, pri, cfg) == -inf);

        ModelState bumpy = st;
        bumpy.profile.rho[2] = 2 * bumpy.profile.rho[1];  // breaks monotonicity
        CHECK(logPosterior(bumpy, {k}, pri, cfg) == -inf);

        ModelState leaky = st;
        leaky.pdf.at(grid.nEps - 1, 1) = 0.5;  // nonzero at the escape edge
        CHECK(logPosterior(leaky, {k}, pri, cfg) == -inf);

        ModelState sloped = st;
        sloped.pdf.at(0, 1) = 0.1;
        sloped.pdf.at(1, 1) = 0.3;  // increases toward escape
        CHECK(logPosterior(sloped, {k}, pri, cfg) == -inf);
    }

    SUBCASE("invisible pdf with data present is a model inconsistency") {
        ModelState st = base;  // pdf identically zero
        KinematicDatum k{0.5, 0.0, 0.1, 0.0};
        CHECK_THROWS_AS(logPosterior(st, {k}, pri, cfg), DataError);
    }

    SUBCASE("empty catalog reduces to the prior terms") {
        ModelState st = base;
        st.pdf.at(0, 0) = 1.0;
        LikelihoodConfig noWindow;  // no normalization needed without data
        CHECK(logPosterior(st, {}, pri, noWindow) == Approx(std::log(1.0 / 6)).epsilon(1e-14));
    }

    SUBCASE("overall pdf scale leaves the posterior unchanged") {
        ModelState st = base;
        Rng rng(41006);
        std::vector<double> gamma(std::size_t(grid.nEps - 1) * grid.nEll);
        for (double& x : gamma)
            x = rng.uniform();
        st.pdf = PdfMatrix::fromGamma(grid, gamma);
        std::vector<KinematicDatum> data{
            {0.4, 0.1, 0.2, 0.0}, {0.8, -0.3, -0.35, 0.05}, {0.15, 0.6, 0.4, 0.0}};
        double lp = logPosterior(st, data, pri, cfg);
        for (double alpha : {4.0, 3.7}) {
            ModelState scaled = st;
            for (double& v : scaled.pdf.f)
                v *= alpha;
            CHECK(logPosterior(scaled, data, pri, cfg) == Approx(lp).epsilon(1e-12));
        }
    }

    SUBCASE("finite on random constraint-satisfying states") {
        Rng rng(41007);
        PriorSpec wide;
        wide.nEllLo = 2;
        wide.nEllHi = 7;
        wide.nfwSpanDecades = 12;
        wide.rsLo = wide.rsHi = 1.0;
        wide.rho0Lo = wide.rho0Hi = 0.2;
        LikelihoodConfig quick = windowedConfig(0.05, 1.6);
        quick.overlap.tol = 1e-4;
        quick.overlap.nV1 = 24;
        quick.potentialTableSize = 256;
        for (int trial = 0; trial < 8; trial++) {
            DensityProfile prof;
            prof.grid = RadialGrid{0.0, 0.3, 6};
            prof.rho.resize(6);
            double boost = std::pow(10.0, rng.uniform(-1.5, 1.5));
            for (int b = 0; b < 6; b++)
                prof.rho[std::size_t(b)] = boost * nfwDensity(prof.grid.center(b), 1.0, 0.2);
            // positions first; velocities are scaled to the local escape
            // speed once the potential of this profile is known
            std::vector<KinematicDatum> data;
            for (int i = 0; i < 25; i++)
                data.push_back(
                    {rng.uniform(0.1, 1.5), 0.0, 0.0, rng.uniform() < 0.5 ? 0.05 : 0.0});
            ModelState st = buildModelState(prof, {}, 3, data, quick);
            for (KinematicDatum& k : data)
                k.v3 = rng.uniform(-0.5, 0.5) * std::sqrt(-2 * st.potential.phi(k.rp()));
            std::vector<double> gamma(std::size_t(st.pdf.grid.nEps - 1) * 3);
            for (double& x : gamma)
                x = rng.uniform(0.01, 1.0);
            st = buildModelState(prof, gamma, 3, data, quick);
            double lp = logPosterior(st, data, wide, quick);
            CHECK(std::isfinite(lp));
        }
    }
}

TEST_CASE("swept route agrees with the reference route") {
    PhaseGrid grid{6, 3};
    ModelState st = analyticState(grid, 6.0, 8192);
    st.pdf = smoothPdf(grid, st.lmax0);
    LikelihoodConfig cfg = windowedConfig(0.1, 1.8);
    cfg.sweepS3Nodes = 24;
    cfg.sweepV1Nodes = 64;

    std::vector<KinematicDatum> data{
        {0.5, 0.0, 0.2, 0.0},
        {1.0, 0.4, -0.45, 0.0},
        {0.25, -0.1, 0.1, 0.12},
        {1.3, 0.6, 0.3, 0.08},
    };

    double zRef = normalizationConstant(st, cfg);
    MarginalSet set = sweepMarginals(st, data, cfg);
    REQUIRE(set.nu.size() == data.size());
    CHECK(set.z == Approx(zRef).epsilon(0.02));
    for (std::size_t i = 0; i < data.size(); i++) {
        double ref = convolvedDensity(data[i], st, cfg);
        CHECK(set.nu[i] / set.z == Approx(ref).epsilon(0.025));
    }

    PriorSpec pri;
    pri.nEllLo = 2;
    pri.nEllHi = 7;
    pri.nfwSpanDecades = 8;
    pri.rsLo = pri.rsHi = 1.0;
    pri.rho0Lo = pri.rho0Hi = 0.2;

    // a monotone pdf for the posterior comparisons
    Rng rng(41008);
    std::vector<double> gamma(std::size_t(grid.nEps - 1) * grid.nEll);
    for (double& x : gamma)
        x = rng.uniform();
    st.pdf = PdfMatrix::fromGamma(grid, gamma);
    double lpRef = logPosterior(st, data, pri, cfg);
    double lpSwept = logPosteriorSwept(st, data, pri, cfg);
    REQUIRE(std::isfinite(lpRef));
    CHECK(std::fabs(lpSwept - lpRef) < 0.2);

    // identical minus-infinity and error behaviour
    PriorSpec narrow = pri;
    narrow.nEllLo = 4;
    CHECK(logPosteriorSwept(st, data, narrow, cfg) == logPosterior(st, data, narrow, cfg));
    ModelState zero = st;
    zero.pdf = PdfMatrix(grid);
    CHECK_THROWS_AS(logPosteriorSwept(zero, data, pri, cfg), DataError);
    ModelState bumpy = st;
    bumpy.profile.rho[1] = 10 * bumpy.profile.rho[0];
    CHECK(logPosteriorSwept(bumpy, data, pri, cfg) ==
          -std::numeric_limits<double>::infinity());

    // the sweep is exactly linear in the pdf as well
    LikelihoodConfig lean = cfg;
    lean.sweepS3Nodes = 8;
    lean.sweepV1Nodes = 16;
    for (int trial = 0; trial < 30; trial++) {
        PdfMatrix a = randomPdf(grid, rng);
        PdfMatrix b = randomPdf(grid, rng, 3.0);
        double alpha = rng.uniform(0.25, 3.0);
        ModelState stA = st, stB = st, stC = st;
        stA.pdf = a;
        stB.pdf = b;
        stC.pdf = PdfMatrix(grid);
        for (std::size_t i = 0; i < a.f.size(); i++)
            stC.pdf.f[i] = a.f[i] + alpha * b.f[i];
        MarginalSet sa = sweepMarginals(stA, data, lean);
        MarginalSet sb = sweepMarginals(stB, data, lean);
        MarginalSet sc = sweepMarginals(stC, data, lean);
        CHECK(sc.z == Approx(sa.z + alpha * sb.z).epsilon(1e-12));
        for (std::size_t i = 0; i < data.size(); i++)
            CHECK(sc.nu[i] == Approx(sa.nu[i] + alpha * sb.nu[i]).epsilon(1e-12));
    }
}

TEST_CASE("normalized density integrates to one over the window") {
    PhaseGrid grid{5, 3};
    ModelState st = analyticState(grid, 6.0, 8192);
    st.pdf = smoothPdf(grid, st.lmax0);
    LikelihoodConfig cfg = windowedConfig(0.3, 2.0);

    double z = normalizationConstant(st, cfg);
    REQUIRE(z > 0);
    double refined = handWindowIntegral(st, cfg, 32, 16);
    CHECK(refined / z == Approx(1.0).epsilon(0.01));
}
