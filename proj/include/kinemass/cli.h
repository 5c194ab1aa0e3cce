#pragma once
/** \file
    Run orchestration: flat key-value configuration, catalog ingestion,
    data-driven radial binning, the generate / infer / summarize drivers,
    and the manifest emitted next to every artifact set.

    One process runs one mode; the sampler and likelihood own intra-run
    parallelism. Exit codes: 0 success, 2 configuration error, 3 data error,
    4 numerical error.
*/

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "kinemass/diagnostics.h"
#include "kinemass/likelihood.h"
#include "kinemass/sampler.h"
#include "kinemass/synth.h"

namespace kinemass {

inline constexpr const char* kProgramVersion = "0.1.0";
inline constexpr int kCatalogFormatVersion = 1;
inline constexpr int kRecordFormatVersion = 1;

/// NFW reference intervals left at zero mean "derive from the catalog"
PriorSpec unsetPriors();

/**
    Everything a run needs, fillable from a flat key-value file plus command
    line overrides. Paths and the output directory are plumbing; the
    remaining fields are semantic and feed the config hash. The isotropic
    flag forces a single momentum bin (fixed, never proposed).
*/
struct RunConfig {
    std::string mode = "infer";  ///< generate | infer | summarize
    std::string catalogPath;     ///< generate: output; infer: input; summarize: record override
    std::string outDir = ".";
    std::string resumePath;  ///< checkpoint to continue from (infer)
    std::uint64_t seed = 1;
    bool isotropic = false;
    double lengthUnit = 1;    ///< multiplies ingested positions
    double velocityUnit = 1;  ///< multiplies ingested velocities and errors
    int nXCap = 8;            ///< radial bin count cap
    double burnFraction = 0.5;
    bool emitAreaWeightedMass = false;

    SynthModel synth;
    PriorSpec priors = unsetPriors();
    LikelihoodConfig quad;
    SamplerConfig sampler;

    /// structural checks only; derived fields (window, priors) are filled per run
    void validate() const;
};

/// set one configuration key; throws ConfigError on unknown keys or bad values
void applyConfigKey(RunConfig& cfg, const std::string& key, const std::string& value);

/// parse `key = value` lines, '#' comments and blank lines ignored
RunConfig parseRunConfig(std::istream& is);
RunConfig loadRunConfig(const std::string& path);

/**
    Canonical text of the semantic fields: sorted key=value lines with the
    isotropic override already applied, excluding paths, the output
    directory, the seed, and the mode. Two configs hash equal exactly when
    they request the same computation on the same inputs.
*/
std::string canonicalConfigText(const RunConfig& cfg);
std::uint64_t configHash(const RunConfig& cfg);

/**
    Read a catalog CSV. The header picks the schema: `x1,x2,v3,sigma_v3`
    reads positions as given; `rp,v3,sigma_v3` synthesizes x1 = rp, x2 = 0,
    which the likelihood treats identically (everything depends on the
    projected radius only). Unit scales multiply positions and velocities.
    Malformed rows report the line number and column; an empty catalog or a
    row with zero projected radius is an error.
*/
std::vector<KinematicDatum> ingestCatalog(std::istream& is, const std::string& name,
                                          double lengthUnit = 1, double velocityUnit = 1);
std::vector<KinematicDatum> ingestCatalogFile(const std::string& path, double lengthUnit = 1,
                                              double velocityUnit = 1);

/// full-schema catalog CSV; values round-trip bitwise through ingestCatalog
void writeCatalogCsv(std::ostream& os, const std::vector<KinematicDatum>& data);

/**
    Finest uniform radial grid over the catalog's projected-radius range, at
    most nXCap bins, such that every bin holds at least one datum (the last
    edge is inclusive). A catalog whose radii are all equal gets a single
    bin of a tenth of that radius, with a warning if the caller asks for one.
*/
RadialGrid buildRadialBins(const std::vector<KinematicDatum>& data, int nXCap,
                           std::string* warning = nullptr);

/// fill zero NFW reference intervals from catalog scales: rs from the
/// outermost projected radius, rho0 from a crude virial mass guess
void derivePriorDefaults(PriorSpec& priors, const std::vector<KinematicDatum>& data);

/// chain record parsed back from the emitted CSVs
struct LoadedRecord {
    RadialGrid grid;
    std::vector<ChainRecordEntry> entries;
};

/// grid comment line plus column headers for the two record files
void writeRecordHeader(std::ostream& rhoCsv, std::ostream& fCsv, const RadialGrid& grid);

/// one thinned state: density row into rhoCsv, reconstructed pdf row into fCsv
void appendRecordEntry(std::ostream& rhoCsv, std::ostream& fCsv, const ChainRecordEntry& e);

/// parse the density record, and the pdf record when a stream is given
LoadedRecord loadRecord(std::istream& rhoCsv, std::istream* fCsv = nullptr);
LoadedRecord loadRecordFiles(const std::string& rhoPath, const std::string& fPath);

int runGenerate(const RunConfig& cfg);
int runInfer(const RunConfig& cfg);
int runSummarize(const RunConfig& cfg);

/// validate, dispatch on mode, and map exceptions to exit codes with a
/// structured one-line JSON report on stderr
int runMode(const RunConfig& cfg);

}  // namespace kinemass
