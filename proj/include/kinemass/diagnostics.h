#pragma once
/** \file
    Posterior summaries over recorded chains: highest-density credible
    intervals, marginal modes, enclosed-mass profiles, and a split-chain
    comparability check. Everything here is a pure function of the record,
    so summaries are deterministic and may be parallelized per parameter.
*/

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kinemass/potential.h"
#include "kinemass/sampler.h"

namespace kinemass {

/// marginal mode and highest-density credible bounds of one scalar parameter
struct IntervalSummary {
    std::string name;
    double mode = 0;
    double hpdLo = 0;
    double hpdHi = 0;
};

/**
    Shortest contiguous window of the sorted sample containing
    ceil(level * n) points. Requires at least 20 samples; ties in window
    width resolve to the leftmost window.
*/
std::pair<double, double> hpdInterval(std::vector<double> samples, double level = 0.95);

/**
    Midpoint of the densest fixed-width histogram bin, with the
    Freedman-Diaconis width and ties resolved to the lower bin. A zero
    interquartile range falls back to a sqrt(n) bin count; a constant sample
    returns that constant. Requires at least 20 samples.
*/
double marginalMode(std::vector<double> samples);

/// cumulative mass at each bin's outer edge from exact spherical-shell volumes
std::vector<double> enclosedMass(const DensityProfile& profile);

/**
    Area-weighted cumulative sum 4 pi rho_j (r_j^2 - r_{j-1}^2). Not a mass;
    kept behind a config flag so legacy summaries using this weighting can be
    compared against the volumetric one.
*/
std::vector<double> enclosedMassAreaWeighted(const DensityProfile& profile);

/// two-sample Kolmogorov-Smirnov statistic, tie-safe
double ksTwoSampleStat(std::vector<double> a, std::vector<double> b);

/// asymptotic p-value of the two-sample statistic with the usual
/// finite-sample correction of the scale
double ksTwoSampleP(double stat, std::size_t n, std::size_t m);

/// one cross-part comparison of a single parameter
struct SplitPairCheck {
    int partA = 0, partB = 0;
    double stat = 0;
    double p = 1;
};

struct SplitParamCheck {
    std::string name;
    std::vector<SplitPairCheck> pairs;
    bool flagged = false;  ///< some pair fell below the p threshold
};

/// comparability report across equal non-overlapping chain segments
struct SplitCheckReport {
    long burned = 0;   ///< leading entries discarded before splitting
    long perPart = 0;  ///< entries in each compared segment
    std::vector<SplitParamCheck> params;

    bool anyFlagged() const;
};

/**
    Compare named sample columns across `parts` equal non-overlapping
    segments with pairwise two-sample KS tests, flagging parameters where
    any pair's p-value falls below pThreshold. Columns must share one
    length of at least 20 * parts; a trailing remainder that does not fill
    a segment is dropped.
*/
SplitCheckReport splitCheck(const std::vector<std::string>& names,
                            const std::vector<std::vector<double>>& columns, int parts = 3,
                            double pThreshold = 0.01);

/**
    Split-chain check over a recorded run: discards the leading burnFraction
    of the record, then compares every density bin and the log posterior
    across the segments.
*/
SplitCheckReport splitChainCheck(const std::vector<ChainRecordEntry>& record,
                                 const RadialGrid& grid, int parts = 3,
                                 double burnFraction = 0.5, double pThreshold = 0.01);

/// per-bin and whole-run summaries of a recorded chain
struct RecordSummary {
    RadialGrid grid;
    std::vector<IntervalSummary> rho;   ///< one per radial bin
    std::vector<IntervalSummary> mass;  ///< enclosed mass at each bin's outer edge
    IntervalSummary logPost;
    std::map<int, long> nEllCounts;  ///< occupancy of the momentum-bin count
    long burned = 0;
    long used = 0;
};

/**
    Post-burn-in marginal summaries of a record: mode and 95% HPD bounds of
    every density bin, of the enclosed mass at every bin edge (transformed
    per recorded state, then summarized), and of the log posterior.
*/
RecordSummary summarizeRecord(const std::vector<ChainRecordEntry>& record, const RadialGrid& grid,
                              double burnFraction = 0.5);

/// one row per parameter: name, mode, hpd_lo, hpd_hi
void writeSummaryCsv(std::ostream& os, const std::vector<IntervalSummary>& rows);

/// plot-ready profile: bin outer edge, density mode and bounds, mass mode and bounds
void writeProfileCsv(std::ostream& os, const RadialGrid& grid,
                     const std::vector<IntervalSummary>& rho,
                     const std::vector<IntervalSummary>& mass);

}  // namespace kinemass
