#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "doctest.h"
#include "kinemass/errors.h"
#include "kinemass/mathutil.h"
#include "kinemass/potential.h"
#include "kinemass/synth.h"

using namespace kinemass;
using doctest::Approx;

namespace {

/// two-sample Kolmogorov-Smirnov p-value (asymptotic tail with the usual
/// small-sample correction of the scaling)
double ksTwoSampleP(std::vector<double> x, std::vector<double> y) {
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    double d = 0;
    std::size_t i = 0, j = 0;
    while (i < x.size() && j < y.size()) {
        if (x[i] <= y[j])
            i++;
        else
            j++;
        d = std::max(d, std::fabs(double(i) / x.size() - double(j) / y.size()));
    }
    double ne = std::sqrt(double(x.size()) * double(y.size()) / double(x.size() + y.size()));
    return math::kolmogorovQ((ne + 0.12 + 0.11 / ne) * d);
}

/**
    Line-of-sight velocity marginal over a projected-radius shell, by direct
    integration of the distribution function over everything the catalog
    does not report: the annulus azimuth collapses to a 2 pi R weight, the
    line-of-sight runs over composite panels (the distribution keeps an
    extended tail), and the transverse velocity plane is polar with the
    momentum evaluated from the full cross product.
*/
std::vector<double> shellMarginal(const SynthModel& m, double r1, double r2,
                                  const std::vector<double>& v3grid) {
    math::QuadRule qR = math::gaussLegendre(4, r1, r2);
    std::vector<double> sx, sw;
    for (std::pair<double, double> p :
         {std::pair<double, double>{0, 2}, {2, 6}, {6, 14}, {14, 39}}) {
        math::QuadRule q = math::gaussLegendre(16, p.first, p.second);
        sx.insert(sx.end(), q.x.begin(), q.x.end());
        sw.insert(sw.end(), q.w.begin(), q.w.end());
    }
    int nPsi = 16;
    std::vector<double> out(v3grid.size(), 0.0);
    for (std::size_t k = 0; k < v3grid.size(); k++) {
        double v3 = v3grid[k];
        double acc = 0;
        for (std::size_t a = 0; a < qR.x.size(); a++) {
            double R = qR.x[a];
            for (std::size_t b = 0; b < sx.size(); b++) {
                double s3 = sx[b];
                double r = std::hypot(R, s3);
                double vrel2 = -2 * m.phi(r) - v3 * v3;
                if (vrel2 <= 0)
                    continue;
                double vrel = std::sqrt(vrel2);
                math::QuadRule qt = math::gaussLegendre(24, 0.0, vrel);
                double inner = 0;
                for (std::size_t c = 0; c < qt.x.size(); c++) {
                    double vt = qt.x[c];
                    double e = m.phi(r) + 0.5 * (vt * vt + v3 * v3);
                    double ring = 0;
                    for (int t = 0; t < nPsi; t++) {
                        double psi = 2 * math::PI * (t + 0.5) / nPsi;
                        double v1 = vt * std::cos(psi), v2 = vt * std::sin(psi);
                        double l2 = (s3 * v2) * (s3 * v2) +
                                    (s3 * v1 - R * v3) * (s3 * v1 - R * v3) + (R * v2) * (R * v2);
                        ring += fValue(m, e, std::sqrt(l2));
                    }
                    inner += qt.w[c] * vt * ring * (2 * math::PI / nPsi);
                }
                acc += qR.w[a] * R * sw[b] * inner;
            }
        }
        out[k] = acc;  // even in s3 and constant in azimuth: prefactors drop in the CDF
    }
    return out;
}

/// inverse-CDF draws from a tabulated density on a uniform grid
std::vector<double> tableDraws(const std::vector<double>& grid, const std::vector<double>& dens,
                               int n, Rng& rng) {
    std::vector<double> cum(grid.size(), 0.0);
    for (std::size_t i = 1; i < grid.size(); i++)
        cum[i] = cum[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (grid[i] - grid[i - 1]);
    std::vector<double> out(std::size_t(n), 0.0);
    for (double& x : out) {
        double u = rng.uniform() * cum.back();
        std::size_t hi = std::size_t(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
        if (hi == 0)
            hi = 1;
        double frac = (u - cum[hi - 1]) / std::max(cum[hi] - cum[hi - 1], 1e-300);
        x = grid[hi - 1] + frac * (grid[hi] - grid[hi - 1]);
    }
    return out;
}

PotentialTable plummerTable(const SynthModel& m, double rOut) {
    return PotentialTable::fromFunction(
        [&m](double r) { return m.phi(r); },
        [&m](double r) {
            double d = std::sqrt(r * r + m.a * m.a);
            return m.mass * r / (d * d * d);
        },
        rOut, 4096, m.mass);
}

}  // namespace

TEST_CASE("distribution values match the closed forms and vanish at escape") {
    SynthModel wd;
    SynthModel michie = wd;
    michie.kind = SynthKind::Michie;
    double s2 = wd.sigma * wd.sigma;

    CHECK(fValue(michie, 0.0, 0.0) == 0);
    CHECK(fValue(wd, 0.0, 0.3) == 0);  // bound support only
    CHECK(fValue(wd, 0.5, 0.3) == 0);
    // momentum-free values
    for (double e : {-0.9, -0.4, -0.05}) {
        double base = 1 / std::sqrt(2 * math::PI * s2);
        CHECK(fValue(wd, e, 0.0) == Approx(base * std::exp(-e / s2)).epsilon(1e-14));
        CHECK(fValue(michie, e, 0.0) == Approx(base * (std::exp(-e / s2) - 1)).epsilon(1e-14));
    }
    // continuous cutoff: approaching escape from below
    CHECK(fValue(michie, -1e-12, 0.1) == Approx(0.0).epsilon(1e-6));
}

TEST_CASE("family ratio is independent of momentum") {
    SynthModel wd;
    SynthModel michie = wd;
    michie.kind = SynthKind::Michie;
    double s2 = wd.sigma * wd.sigma;
    Rng rng(17);
    for (int i = 0; i < 1000; i++) {
        double e = -rng.uniform(0.01, 1.0);
        double l = rng.uniform(0.0, 2.0);
        double boltz = std::exp(-e / s2);
        double want = boltz / (boltz - 1);
        CHECK(fValue(wd, e, l) / fValue(michie, e, l) == Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("model validation rejects bad parameters") {
    SynthModel m;
    CHECK_NOTHROW(m.validate());
    m.sigma = 0;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m = SynthModel{};
    m.ra = -1;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m = SynthModel{};
    m.nData = 0;
    CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("background density and potential agree with the closed forms") {
    SynthModel m;
    m.mass = 2.5;
    m.a = 0.7;
    CHECK(m.phi(0) == Approx(-2.5 / 0.7));
    CHECK(m.phi(1.4) == Approx(-2.5 / std::sqrt(1.96 + 0.49)));
    CHECK(m.rhoModel(0) == Approx(3 * 2.5 / (4 * math::PI * 0.343)));
    // half... the density falls off as r^-5 far out
    CHECK(m.rhoModel(70.0) / m.rhoModel(35.0) == Approx(std::pow(0.5, 5)).epsilon(0.01));
}

TEST_CASE("every draw is bound and inside the momentum limit of its energy") {
    SynthModel m;
    Rng rng(404);
    std::vector<PhaseDraw> draws = samplePhase(m, 2000, rng);
    REQUIRE(draws.size() == 2000);
    PotentialTable pot = plummerTable(m, 50.0);
    for (const PhaseDraw& d : draws) {
        double e = d.energy(m);
        REQUIRE(e < 0);
        double lmax = lmaxAndRc(e, pot).lmax;
        REQUIRE(d.momentum() <= lmax * (1 + 1e-8) + 1e-12);
    }

    // emission order carries no structure: adjacent radii are uncorrelated
    double mean = 0;
    std::vector<double> rs;
    for (const PhaseDraw& d : draws)
        rs.push_back(d.r());
    for (double r : rs)
        mean += r;
    mean /= double(rs.size());
    double c0 = 0, c1 = 0;
    for (std::size_t i = 0; i < rs.size(); i++) {
        c0 += (rs[i] - mean) * (rs[i] - mean);
        if (i + 1 < rs.size())
            c1 += (rs[i] - mean) * (rs[i + 1] - mean);
    }
    CHECK(std::fabs(c1 / c0) < 4.0 / std::sqrt(double(rs.size())));
}

TEST_CASE("catalog projection keeps the advertised schema") {
    SynthModel m;
    m.sigmaV3 = 0.02;
    Rng rng(7);
    std::vector<KinematicDatum> data = sampleCatalog(m, rng);
    REQUIRE(data.size() == 198);
    for (const KinematicDatum& k : data) {
        CHECK_NOTHROW(k.validate());
        CHECK(k.sigmaV3 == 0.02);
    }
}

TEST_CASE("fixed seed reproduces the catalog bit for bit") {
    SynthModel m;
    Rng r1(42), r2(42);
    std::vector<KinematicDatum> a = sampleCatalog(m, r1);
    std::vector<KinematicDatum> b = sampleCatalog(m, r2);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); i++) {
        REQUIRE(a[i].x1 == b[i].x1);
        REQUIRE(a[i].x2 == b[i].x2);
        REQUIRE(a[i].v3 == b[i].v3);
    }
}

TEST_CASE("line-of-sight velocities in a shell match the marginalized distribution") {
    SynthModel m;
    Rng rng(2025);
    std::vector<PhaseDraw> draws = samplePhase(m, 10000, rng);
    std::vector<double> shellV3;
    for (const PhaseDraw& d : draws)
        if (double rp = std::hypot(d.s[0], d.s[1]); rp >= 0.8 && rp <= 1.2)
            shellV3.push_back(d.v[2]);
    REQUIRE(shellV3.size() > 300);

    std::vector<double> grid;
    for (int i = 0; i <= 120; i++)
        grid.push_back(-1.35 + 2.7 * i / 120.0);
    std::vector<double> dens = shellMarginal(m, 0.8, 1.2, grid);
    Rng oracleRng(515);
    std::vector<double> oracleDraws = tableDraws(grid, dens, 10000, oracleRng);

    double p = ksTwoSampleP(shellV3, oracleDraws);
    CHECK(p > 0.01);
}

TEST_CASE("velocity dispersions become isotropic as the anisotropy radius grows") {
    auto dispersionRatio = [](double ra, int seed) {
        SynthModel m;
        m.ra = ra;
        Rng rng{std::uint64_t(seed)};
        std::vector<PhaseDraw> draws = samplePhase(m, 6000, rng);
        double sr = 0, st = 0;
        long n = 0;
        for (const PhaseDraw& d : draws) {
            double r = d.r();
            if (r < 0.5 || r > 6.0)
                continue;
            double vr = (d.s[0] * d.v[0] + d.s[1] * d.v[1] + d.s[2] * d.v[2]) / r;
            double v2 = d.speed() * d.speed();
            sr += vr * vr;
            st += v2 - vr * vr;
            n++;
        }
        REQUIRE(n > 500);
        return (st / 2) / sr;  // per-axis tangential over radial
    };
    CHECK(std::fabs(dispersionRatio(1e8, 31) - 1.0) < 0.2);
    CHECK(dispersionRatio(0.5, 32) < 0.8);
}
