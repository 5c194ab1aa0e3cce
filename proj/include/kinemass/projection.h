#pragma once
#include <optional>
#include <vector>

#include "kinemass/elgrid.h"
#include "kinemass/potential.h"

namespace kinemass {

/**
    The marginalization kernel. Each datum fixes a line of sight in the rotated
    frame s = (0, rp, s3) and an observed velocity component v3; the unobserved
    coordinates are s3 and the tangential velocities (v1, v2). At fixed s3 an
    E-bin confines (v1, v2) to a circular annulus and an L-bin to an elliptical
    one; the E-L cell volume is the overlap area integrated along s3.
*/

/// quadrature controls for the overlap areas and the s3 volume integral;
/// mcSamples only feeds Monte Carlo cross-check modes, never the quadrature
struct OverlapConfig {
    int nV1 = 64;              ///< strips across the v1 half-range
    long mcSamples = 1000000;  ///< sample count for Monte Carlo cross-checks
    double tol = 1e-6;         ///< relative tolerance of the adaptive s3 quadrature
    void validate() const;
};

/// one datum reduced to the rotated frame: projected radius and los velocity
struct DatumFrame {
    double rp = 0;
    double v3 = 0;
    void validate() const;
};

/// circular annulus centred at the origin of the (v1, v2) plane
struct CircleAnnulus {
    double rIn = 0;
    double rOut = 0;
};

/**
    Elliptical annulus traced by an L-bin at fixed s3. Writing w = v2 cosg -
    v3 sing, the bin edges l bound v1^2 + w^2 between (l/r)^2 values; in the
    (v1, v2) plane that is an ellipse centred at (0, v3 tang) with semi-minor
    axis l/r. The degenerate flag marks cosg ~ 0 (s3 -> 0), where the
    constraint stops depending on v2 and the accessors below lose meaning.
*/
struct EllipseAnnulus {
    double lamIn = 0;   ///< semi-minor axis of the inner boundary
    double lamOut = 0;  ///< semi-minor axis of the outer boundary
    double cosg = 1;    ///< angle between the line of sight and the radius vector
    double sing = 0;
    double v3 = 0;
    bool degenerate = false;

    double centerOffset() const { return v3 * sing / cosg; }
    double semiMajorIn() const { return lamIn / cosg; }
    double semiMajorOut() const { return lamOut / cosg; }
};

/// E-bin annulus radii at fixed s3, or nullopt when the bin is unreachable
/// there (both radicands negative)
std::optional<CircleAnnulus> circleRadii(int c, const DatumFrame& datum, double s3,
                                         const PotentialTable& pot, const PhaseGrid& grid);

/// L-bin annulus parameters at fixed s3; throws NumericalError at r = 0
EllipseAnnulus ellipseParams(int d, const DatumFrame& datum, double s3, const PhaseGrid& grid,
                             double lmax0);

/// area of the intersection of the two annuli in the (v1, v2) plane
double overlapArea(const std::optional<CircleAnnulus>& circle, const EllipseAnnulus& ellipse,
                   const OverlapConfig& cfg);

/**
    Reusable scan table for the line-of-sight feasibility bound. The turning
    point condition h(r) = 2 r^2 (E - phi(r)) >= l^2 is linear in E, so one
    table of 2r^2 and 2r^2 phi(r) serves every cell and datum for a given
    potential snapshot.
*/
class S3MaxScan {
public:
    explicit S3MaxScan(const PotentialTable& pot, int nScan = 2048);

    /// largest s3 >= 0 with 2 r^2 (E_hi - phi(r)) >= l_lo^2 along the datum's
    /// line, capped at sqrt(rOut^2 - rp^2); 0 when nothing is feasible
    double s3Max(int c, int d, const DatumFrame& datum, const PhaseGrid& grid,
                 double lmax0) const;

private:
    const PotentialTable* pot_;
    std::vector<double> r_, twoR2_, twoR2Phi_;
};

/// one-shot form of S3MaxScan::s3Max
double s3Max(int c, int d, const DatumFrame& datum, const PotentialTable& pot,
             const PhaseGrid& grid, double lmax0);

/// volume of one E-L cell in the unobserved (s3, v1, v2) space of one datum
struct CellVolume {
    double value = 0;
    int k = -1, c = -1, d = -1;
};

/// immutable per-snapshot state shared by cell-volume evaluations; build one
/// per density update and reuse it across all data and cells
struct VolumeContext {
    const PotentialTable& pot;
    const PhaseGrid& grid;
    double lmax0;
    OverlapConfig cfg;
    S3MaxScan scan;

    VolumeContext(const PotentialTable& p, const PhaseGrid& g, double l0,
                  const OverlapConfig& c);
};

CellVolume cellVolume(int k, int c, int d, const DatumFrame& datum, const VolumeContext& ctx);

/// one-shot form building a private context (spot checks and tests)
CellVolume cellVolume(int k, int c, int d, const DatumFrame& datum, const PotentialTable& pot,
                      const PhaseGrid& grid, double lmax0, const OverlapConfig& cfg);

}  // namespace kinemass
