#include "kinemass/projection.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kinemass/errors.h"
#include "kinemass/mathutil.h"

namespace kinemass {

namespace {

/// below this cosg the ellipse constraint is treated as v2-independent
constexpr double kDegenCos = 1e-14;

struct Iv {
    double lo, hi;
};

/// total measure of the intersection of two unions of disjoint intervals
inline double interMeasure(const Iv* a, int na, const Iv* b, int nb) {
    double m = 0;
    for (int i = 0; i < na; i++)
        for (int j = 0; j < nb; j++) {
            double lo = a[i].lo > b[j].lo ? a[i].lo : b[j].lo;
            double hi = a[i].hi < b[j].hi ? a[i].hi : b[j].hi;
            if (hi > lo)
                m += hi - lo;
        }
    return m;
}

/// admissible-v2 measure of the circle annulus alone at fixed v1
inline double circleMeasure(double v1, const CircleAnnulus& c) {
    double oSq = c.rOut * c.rOut - v1 * v1;
    if (oSq <= 0)
        return 0;
    double iSq = c.rIn * c.rIn - v1 * v1;
    return 2 * (std::sqrt(oSq) - (iSq > 0 ? std::sqrt(iSq) : 0.0));
}

/// admissible-v2 measure of the intersection at fixed v1, general geometry.
/// Both annuli cut at most two v2 intervals: the circle between its radii,
/// the ellipse as the affine image v2 = (w + v3 sing) / cosg of the w-annulus.
inline double stripMeasure(double v1, const CircleAnnulus& c, const EllipseAnnulus& e) {
    double oSq = c.rOut * c.rOut - v1 * v1;
    if (oSq <= 0)
        return 0;
    double wOutSq = e.lamOut * e.lamOut - v1 * v1;
    if (wOutSq <= 0)
        return 0;
    double o = std::sqrt(oSq);
    Iv circ[2];
    int nc;
    double iSq = c.rIn * c.rIn - v1 * v1;
    if (iSq > 0) {
        double in = std::sqrt(iSq);
        circ[0] = {-o, -in};
        circ[1] = {in, o};
        nc = 2;
    } else {
        circ[0] = {-o, o};
        nc = 1;
    }
    double wOut = std::sqrt(wOutSq);
    double off = e.v3 * e.sing;
    Iv ell[2];
    int ne;
    double wInSq = e.lamIn * e.lamIn - v1 * v1;
    if (wInSq > 0) {
        double wIn = std::sqrt(wInSq);
        ell[0] = {(-wOut + off) / e.cosg, (-wIn + off) / e.cosg};
        ell[1] = {(wIn + off) / e.cosg, (wOut + off) / e.cosg};
        ne = 2;
    } else {
        ell[0] = {(-wOut + off) / e.cosg, (wOut + off) / e.cosg};
        ne = 1;
    }
    return interMeasure(circ, nc, ell, ne);
}

/**
    v1 values where a circle boundary of radius R meets an ellipse boundary of
    semi-minor axis lam. Substituting v1^2 = R^2 - v2^2 into the ellipse
    equation leaves a quadratic in v2; each admissible root marks a kink of
    the strip measure and becomes a quadrature breakpoint.
*/
inline void addCurveCrossings(double R, double lam, const EllipseAnnulus& e, double* bp,
                              int& nb) {
    double s2 = e.sing * e.sing;
    if (s2 < 1e-30)
        return;  // concentric circles never cross transversally
    double b = 2 * e.cosg * e.sing * e.v3;
    double c = -(e.v3 * e.v3 * s2 + R * R - lam * lam);
    double disc = b * b - 4 * s2 * c;
    if (disc < 0)
        return;
    double sq = std::sqrt(disc);
    double roots[2] = {(-b + sq) / (2 * s2), (-b - sq) / (2 * s2)};
    for (double v2 : roots) {
        double v1Sq = R * R - v2 * v2;
        if (v1Sq > 0)
            bp[nb++] = std::sqrt(v1Sq);
    }
}

/**
    Integral of the strip measure over one smooth piece [a, b]. The substitution
    v1 = a + (b-a)(1 - cos t)/2 clusters nodes at both ends, turning the
    square-root behaviour of the measure at piece boundaries into a smooth
    integrand. Composite Simpson in t doubles its resolution until two
    consecutive Richardson remainders meet the tolerance: a branch point of a
    neighbouring piece sitting just outside [a, b] leaves a boundary layer that
    the first coarse rules straddle, and there a single small difference can be
    a sampling accident while the next refinement still moves by many times the
    tolerance. Nearly coincident radii form layers that only resolve once the
    step drops below the layer width, hence the generous cap.
*/
template <class F>
double pieceIntegral(const F& m, double a, double b, int nBase, double tol, double absFloor) {
    double half = 0.5 * (b - a);
    auto simp = [&](int n) {
        double h = math::PI / n;
        double s = 0;  // both endpoint terms vanish with sin t
        for (int i = 1; i < n; i++) {
            double t = i * h;
            s += m(a + half * (1 - std::cos(t))) * std::sin(t) * (i % 2 ? 4 : 2);
        }
        return s * h / 3 * half;
    };
    double s1 = simp(nBase);
    int run = 0;
    for (int n = 2 * nBase;; n *= 2) {
        double s2 = simp(n);
        // the interval topology is fixed between breakpoints, so a piece whose
        // nodes all vanish is identically zero, not undersampled
        if (s1 == 0 && s2 == 0)
            return 0;
        run = std::fabs(s2 - s1) <= 15 * std::max(tol * std::fabs(s2), absFloor) ? run + 1 : 0;
        if (run >= 2 || n >= 8192)
            return s2 + (s2 - s1) / 15.0;
        s1 = s2;
    }
}

}  // namespace

void OverlapConfig::validate() const {
    if (nV1 < 16)
        throw ConfigError("overlap config: n_v1 must be at least 16, got " + std::to_string(nV1));
    if (!(tol > 0) || !std::isfinite(tol))
        throw ConfigError("overlap config: tolerance must be positive and finite");
    if (mcSamples < 1)
        throw ConfigError("overlap config: mc sample count must be positive");
}

void DatumFrame::validate() const {
    if (!(rp > 0) || !std::isfinite(rp))
        throw DataError("datum: projected radius must be positive and finite");
    if (!std::isfinite(v3))
        throw DataError("datum: line-of-sight velocity must be finite");
}

std::optional<CircleAnnulus> circleRadii(int c, const DatumFrame& datum, double s3,
                                         const PotentialTable& pot, const PhaseGrid& grid) {
    if (c < 0 || c >= grid.nEps)
        throw std::out_of_range("circleRadii: energy bin index out of range");
    if (s3 < 0)
        throw std::invalid_argument("circleRadii: s3 must be non-negative");
    double r = std::hypot(datum.rp, s3);
    double phi = pot.phi(r);
    double negPhi0 = -pot.phi0();
    double radHi = 2 * grid.epsEdge(c + 1) * negPhi0 - 2 * phi - datum.v3 * datum.v3;
    if (radHi < 0)
        return std::nullopt;
    double radLo = 2 * grid.epsEdge(c) * negPhi0 - 2 * phi - datum.v3 * datum.v3;
    return CircleAnnulus{radLo > 0 ? std::sqrt(radLo) : 0.0, std::sqrt(radHi)};
}

EllipseAnnulus ellipseParams(int d, const DatumFrame& datum, double s3, const PhaseGrid& grid,
                             double lmax0) {
    if (d < 0 || d >= grid.nEll)
        throw std::out_of_range("ellipseParams: momentum bin index out of range");
    if (s3 < 0)
        throw std::invalid_argument("ellipseParams: s3 must be non-negative");
    double r = std::hypot(datum.rp, s3);
    if (r <= 0)
        throw NumericalError("ellipseParams: rp and s3 both zero, geometry singular");
    EllipseAnnulus e;
    e.lamIn = grid.ellEdge(d) * lmax0 / r;
    e.lamOut = grid.ellEdge(d + 1) * lmax0 / r;
    e.cosg = s3 / r;
    e.sing = datum.rp / r;
    e.v3 = datum.v3;
    e.degenerate = e.cosg < kDegenCos;
    return e;
}

double overlapArea(const std::optional<CircleAnnulus>& circle, const EllipseAnnulus& e,
                   const OverlapConfig& cfg) {
    if (!circle)
        return 0;
    const CircleAnnulus& c = *circle;
    if (c.rOut <= 0 || e.lamOut <= 0)
        return 0;

    double v1min = 0, v1max;
    if (e.degenerate) {
        // the constraint v1^2 + w0^2 in [lamIn^2, lamOut^2] is a band in v1
        double w0 = -e.v3 * e.sing;
        double hiSq = e.lamOut * e.lamOut - w0 * w0;
        if (hiSq <= 0)
            return 0;
        double loSq = e.lamIn * e.lamIn - w0 * w0;
        v1min = loSq > 0 ? std::sqrt(loSq) : 0.0;
        v1max = std::min(c.rOut, std::sqrt(hiSq));
    } else {
        v1max = std::min(c.rOut, e.lamOut);
    }
    if (v1max <= v1min)
        return 0;

    double bp[24];
    int nb = 0;
    auto push = [&](double x) {
        if (x > v1min && x < v1max)
            bp[nb++] = x;
    };
    push(c.rIn);
    if (!e.degenerate) {
        push(e.lamIn);
        push(e.lamOut);
        push(c.rOut);
        const double radii[2] = {c.rIn, c.rOut};
        const double lams[2] = {e.lamIn, e.lamOut};
        for (double R : radii)
            for (double lam : lams)
                addCurveCrossings(R, lam, e, bp, nb);
    }
    std::sort(bp, bp + nb);

    double span = v1max - v1min;
    double area = 0;
    double x0 = v1min;
    double floorA = cfg.tol * 1e-7 * math::PI * c.rOut * c.rOut;
    for (int i = 0; i <= nb; i++) {
        double x1 = i < nb ? bp[i] : v1max;
        if (x1 - x0 < 1e-14 * span) {
            x0 = std::max(x0, x1);
            continue;
        }
        int nBase = int(std::lround(cfg.nV1 * (x1 - x0) / span));
        nBase = std::max(6, std::min(4 * cfg.nV1, nBase));
        if (nBase % 2)
            nBase++;
        if (e.degenerate)
            area += pieceIntegral([&](double v1) { return circleMeasure(v1, c); }, x0, x1, nBase,
                                  cfg.tol, floorA);
        else
            area += pieceIntegral([&](double v1) { return stripMeasure(v1, c, e); }, x0, x1,
                                  nBase, cfg.tol, floorA);
        x0 = x1;
    }
    // the measure is even in v1; the integral covered the positive half
    return area > 0 ? 2 * area : 0.0;
}

S3MaxScan::S3MaxScan(const PotentialTable& pot, int nScan) : pot_(&pot) {
    int n = std::max(nScan, 16);
    r_.resize(n);
    twoR2_.resize(n);
    twoR2Phi_.resize(n);
    double rOut = pot.rOut();
    for (int i = 0; i < n; i++) {
        double r = rOut * double(i) / double(n - 1);
        r_[i] = r;
        twoR2_[i] = 2 * r * r;
        twoR2Phi_[i] = twoR2_[i] * pot.phi(r);
    }
}

double S3MaxScan::s3Max(int c, int d, const DatumFrame& datum, const PhaseGrid& grid,
                        double lmax0) const {
    datum.validate();
    CellBounds bounds = grid.cellBounds(c, d);
    double eHi = bounds.epsHi * (-pot_->phi0());
    double lLo = bounds.ellLo * lmax0;
    double lSq = lLo * lLo;
    double rOut = pot_->rOut();
    double rp = datum.rp;
    if (rp >= rOut)
        return 0;
    double cap = std::sqrt(rOut * rOut - rp * rp);

    // h(r) written with the same operation order as the tabulated scan so a
    // feasible scan entry re-evaluates as feasible during bracketing
    auto h = [&](double r) {
        double t = 2 * r * r;
        return eHi * t - t * pot_->phi(r) - lSq;
    };

    const int n = int(r_.size());
    int found = -1;
    for (int i = n - 1; i >= 0; i--) {
        if (eHi * twoR2_[i] - twoR2Phi_[i] - lSq >= 0) {
            found = i;
            break;
        }
        if (r_[i] < rp)
            break;  // the first point below the line's floor is also infeasible
    }
    if (found == n - 1)
        return cap;
    if (found >= 0) {
        double root = math::bisect(h, r_[found], r_[found + 1], 1e-10);
        if (root < rp)
            return 0;
        return std::sqrt(std::max(0.0, root * root - rp * rp));
    }
    // no feasible scan point: the line's own floor may still carry a margin
    // narrower than the scan resolution
    if (h(rp) >= 0) {
        double step = rOut / double(n - 1);
        int iNext = std::min(n - 1, int(std::floor(rp / step)) + 1);
        double root = math::bisect(h, rp, r_[iNext], 1e-10);
        return std::sqrt(std::max(0.0, root * root - rp * rp));
    }
    return 0;
}

double s3Max(int c, int d, const DatumFrame& datum, const PotentialTable& pot,
             const PhaseGrid& grid, double lmax0) {
    return S3MaxScan(pot).s3Max(c, d, datum, grid, lmax0);
}

VolumeContext::VolumeContext(const PotentialTable& p, const PhaseGrid& g, double l0,
                             const OverlapConfig& c)
    : pot(p), grid(g), lmax0(l0), cfg(c), scan(p) {
    cfg.validate();
    if (!(l0 >= 0) || !std::isfinite(l0))
        throw ConfigError("volume context: lmax0 must be finite and non-negative");
}

CellVolume cellVolume(int k, int c, int d, const DatumFrame& datum, const VolumeContext& ctx) {
    datum.validate();
    CellVolume out;
    out.k = k;
    out.c = c;
    out.d = d;
    CellBounds bounds = ctx.grid.cellBounds(c, d);
    double eHi = bounds.epsHi * (-ctx.pot.phi0());
    // the E-annulus is widest at s3 = 0; empty there means empty everywhere
    double radTop = 2 * eHi - 2 * ctx.pot.phi(datum.rp) - datum.v3 * datum.v3;
    if (radTop <= 0)
        return out;
    double s3m = ctx.scan.s3Max(c, d, datum, ctx.grid, ctx.lmax0);
    if (s3m <= 0)
        return out;
    // The scanned reach ignores v3, but the E-annulus actually closes where
    // the local well depth falls to eHi + v3^2/2; for fast data that root can
    // sit at a tiny fraction of the scan value. Clipping to it moves the
    // linear vanishing of the area onto the clustered end of the u-map below,
    // where it integrates smoothly, instead of leaving a ramp kink marooned
    // in the interior that interval halving resolves only at extreme depth.
    auto topGap = [&](double s3) {
        return 2 * eHi - 2 * ctx.pot.phi(std::hypot(datum.rp, s3)) - datum.v3 * datum.v3;
    };
    if (topGap(s3m) < 0)
        s3m = math::bisect(topGap, 0.0, s3m, 1e-12);

    auto area = [&](double s3) {
        auto circ = circleRadii(c, datum, s3, ctx.pot, ctx.grid);
        if (!circ)
            return 0.0;
        return overlapArea(circ, ellipseParams(d, datum, s3, ctx.grid, ctx.lmax0), ctx.cfg);
    };
    // The area vanishes like a 3/2 power where the cell's feasible set
    // pinches off at s3m, which starves plain interval halving. The cosine
    // substitution s3 = s3m (1 - cos pi u)/2 renders both endpoints smooth;
    // four fixed panels in u seed the refinement at resolution s3m/16.
    double halfS = 0.5 * s3m;
    auto g = [&](double u) {
        double su = std::sin(math::PI * u);
        double s3 = halfS * (1 - std::cos(math::PI * u));
        return area(std::min(s3, s3m)) * halfS * math::PI * su;
    };
    // a crude scale estimate lets the absolute floor track the actual
    // integral, so panels straddling topology changes of the overlap
    // (annuli beginning or ceasing to intersect) terminate at sane depth
    double coarse = 0;
    for (int i = 1; i < 8; i++)
        coarse += (i % 2 ? 4.0 : 2.0) * g(i / 8.0);
    coarse /= 24.0;
    double floor =
        std::max(1e-300, ctx.cfg.tol * std::max(coarse / 64.0, 1e-7 * math::PI * radTop * s3m));
    double total = 0;
    for (int p = 0; p < 4; p++)
        total += math::adaptiveSimpson(g, 0.25 * p, 0.25 * (p + 1), ctx.cfg.tol, floor, 24);
    out.value = total > 0 ? total : 0.0;
    return out;
}

CellVolume cellVolume(int k, int c, int d, const DatumFrame& datum, const PotentialTable& pot,
                      const PhaseGrid& grid, double lmax0, const OverlapConfig& cfg) {
    VolumeContext ctx(pot, grid, lmax0, cfg);
    return cellVolume(k, c, d, datum, ctx);
}

}  // namespace kinemass
