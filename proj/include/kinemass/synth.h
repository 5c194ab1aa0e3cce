#pragma once
#include <array>
#include <vector>

#include "kinemass/likelihood.h"
#include "kinemass/rng.h"

namespace kinemass {

/// distribution-function family of the synthetic system
enum class SynthKind { WD, Michie };

/**
    Ground-truth generative model: an anisotropy-damped exponential energy
    distribution (or its lowered variant that vanishes continuously at the
    escape energy) over a Plummer sphere. G = 1 throughout.
*/
struct SynthModel {
    SynthKind kind = SynthKind::WD;
    double sigma = 0.4;    ///< velocity scale of the energy factor
    double ra = 2.0;       ///< anisotropy radius; larger means closer to isotropic
    double mass = 1.0;     ///< total mass of the background sphere
    double a = 1.0;        ///< Plummer scale length
    int nData = 198;       ///< catalog size
    double sigmaV3 = 0;    ///< measurement error attached to each emitted row

    void validate() const;
    /// analytic potential -M / sqrt(r^2 + a^2)
    double phi(double r) const;
    /// (3M / 4 pi a^3) (1 + r^2/a^2)^(-5/2)
    double rhoModel(double r) const;
};

/// distribution-function value at unnormalized energy and raw momentum;
/// zero for energy >= 0, since only bound orbits populate the system (the
/// lowered variant's bracket would go negative there)
double fValue(const SynthModel& model, double energy, double momentum);

/// one full phase-space draw (generation detail; the catalog keeps only the
/// projection, but dispersion and marginalization checks need all of it)
struct PhaseDraw {
    std::array<double, 3> s{};
    std::array<double, 3> v{};

    double r() const;
    double speed() const;
    double energy(const SynthModel& model) const;
    double momentum() const;  ///< |s x v|
};

/**
    Draw n bound tracers from the model by rejection: positions uniform in
    the ball enclosing 99.9% of the background mass, velocities uniform in
    the local escape-speed ball, thinned against the distribution function
    with a pre-scanned envelope constant (x1.5 safety). Each draw runs on
    its own deterministically split substream, so the result depends only
    on the incoming generator state, not on evaluation order.
*/
std::vector<PhaseDraw> samplePhase(const SynthModel& model, int n, Rng& rng);

/// samplePhase projected onto the observables: sky position (axes 1, 2)
/// and line-of-sight velocity (axis 3), with the configured error column
std::vector<KinematicDatum> sampleCatalog(const SynthModel& model, Rng& rng);

}  // namespace kinemass
