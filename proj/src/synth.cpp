#include "kinemass/synth.h"

#include <cmath>
#include <cstdint>

#include "kinemass/errors.h"
#include "kinemass/mathutil.h"

namespace kinemass {

namespace {

constexpr long kMaxAttemptsPerDraw = 20000000;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// radius enclosing the given Plummer mass fraction: m(r)/M = (r^2/(r^2+a^2))^(3/2)
double plummerMassRadius(double a, double frac) {
    double q = std::pow(frac, 2.0 / 3.0);
    return a * std::sqrt(q / (1 - q));
}

double escapeSpeed(const SynthModel& m, double r) { return std::sqrt(-2 * m.phi(r)); }

/// volume of the local escape-speed ball
double velBallVolume(const SynthModel& m, double r) {
    double ve = escapeSpeed(m, r);
    return 4.0 / 3.0 * math::PI * ve * ve * ve;
}

/// acceptance weight of a proposal: the distribution value times the radial
/// and velocity-ball proposal Jacobians (radius is drawn uniformly as a
/// coordinate, so the 4 pi r^2 shell factor belongs to the target side)
double proposalWeight(const SynthModel& m, double r, double energy, double momentum) {
    return 4 * math::PI * r * r * fValue(m, energy, momentum) * velBallVolume(m, r);
}

void isotropicDirection(Rng& rng, double out[3]) {
    double c = rng.uniform(-1.0, 1.0);
    double s = std::sqrt(std::max(0.0, 1 - c * c));
    double ph = rng.uniform(0.0, 2 * math::PI);
    out[0] = s * std::cos(ph);
    out[1] = s * std::sin(ph);
    out[2] = c;
}

}  // namespace

void SynthModel::validate() const {
    if (!(sigma > 0) || !std::isfinite(sigma))
        throw ConfigError("synthetic model: velocity scale must be positive");
    if (!(ra > 0) || !std::isfinite(ra))
        throw ConfigError("synthetic model: anisotropy radius must be positive");
    if (!(mass > 0) || !std::isfinite(mass))
        throw ConfigError("synthetic model: total mass must be positive");
    if (!(a > 0) || !std::isfinite(a))
        throw ConfigError("synthetic model: scale length must be positive");
    if (nData < 1)
        throw ConfigError("synthetic model: catalog size must be positive");
    if (!(sigmaV3 >= 0) || !std::isfinite(sigmaV3))
        throw ConfigError("synthetic model: velocity error must be non-negative");
}

double SynthModel::phi(double r) const { return -mass / std::sqrt(r * r + a * a); }

double SynthModel::rhoModel(double r) const {
    double x = r / a;
    return 3 * mass / (4 * math::PI * a * a * a) * std::pow(1 + x * x, -2.5);
}

double fValue(const SynthModel& model, double energy, double momentum) {
    if (energy >= 0)
        return 0;
    double s2 = model.sigma * model.sigma;
    double base = std::exp(-momentum * momentum / (model.ra * s2)) / std::sqrt(2 * math::PI * s2);
    double boltz = std::exp(-energy / s2);
    return model.kind == SynthKind::WD ? base * boltz : base * (boltz - 1);
}

double PhaseDraw::r() const { return std::sqrt(s[0] * s[0] + s[1] * s[1] + s[2] * s[2]); }

double PhaseDraw::speed() const { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

double PhaseDraw::energy(const SynthModel& model) const {
    return model.phi(r()) + 0.5 * speed() * speed();
}

double PhaseDraw::momentum() const {
    double lx = s[1] * v[2] - s[2] * v[1];
    double ly = s[2] * v[0] - s[0] * v[2];
    double lz = s[0] * v[1] - s[1] * v[0];
    return std::sqrt(lx * lx + ly * ly + lz * lz);
}

std::vector<PhaseDraw> samplePhase(const SynthModel& model, int n, Rng& rng) {
    model.validate();
    if (n < 0)
        throw ConfigError("synthetic sampling: draw count must be non-negative");
    double rTop = plummerMassRadius(model.a, 0.999);

    // envelope constant: the velocity-direction maximum of the weight is
    // analytic (a bound radial orbit at rest: E = phi(r), L = 0), so the
    // pre-scan only has to walk the radial coordinate
    double peak = 0;
    int nScan = 4096;
    for (int i = 1; i <= nScan; i++) {
        double r = rTop * i / double(nScan);
        peak = std::max(peak, proposalWeight(model, r, model.phi(r), 0.0));
    }
    double envelope = 1.5 * peak;
    if (!(envelope > 0))
        throw NumericalError("synthetic sampling: empty envelope");

    std::uint64_t base = rng.engine()();
    std::vector<PhaseDraw> out(std::size_t(n), PhaseDraw{});
    for (int i = 0; i < n; i++) {
        Rng sub(splitmix64(base + std::uint64_t(i)));
        PhaseDraw d;
        long tries = 0;
        for (;; tries++) {
            if (tries >= kMaxAttemptsPerDraw)
                throw NumericalError(
                    "synthetic sampling: acceptance rate too low; the proposal envelope needs "
                    "retuning");
            double r = sub.uniform(0.0, rTop);
            double dir[3];
            isotropicDirection(sub, dir);
            d.s = {r * dir[0], r * dir[1], r * dir[2]};
            double speed = escapeSpeed(model, r) * std::cbrt(sub.uniform());
            isotropicDirection(sub, dir);
            d.v = {speed * dir[0], speed * dir[1], speed * dir[2]};
            double w = proposalWeight(model, r, d.energy(model), d.momentum());
            if (w > envelope)
                throw NumericalError("synthetic sampling: envelope underestimates the target");
            if (sub.uniform() < w / envelope)
                break;
        }
        out[std::size_t(i)] = d;
    }
    return out;
}

std::vector<KinematicDatum> sampleCatalog(const SynthModel& model, Rng& rng) {
    std::vector<PhaseDraw> draws = samplePhase(model, model.nData, rng);
    std::vector<KinematicDatum> data(draws.size());
    for (std::size_t i = 0; i < draws.size(); i++)
        data[i] = KinematicDatum{draws[i].s[0], draws[i].s[1], draws[i].v[2], model.sigmaV3};
    return data;
}

}  // namespace kinemass
