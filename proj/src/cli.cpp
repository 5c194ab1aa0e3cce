#include "kinemass/cli.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "kinemass/errors.h"
#include "kinemass/mathutil.h"

namespace kinemass {

namespace fs = std::filesystem;
using nlohmann::json;

PriorSpec unsetPriors() {
    PriorSpec p;
    p.rsLo = p.rsHi = 0;
    p.rho0Lo = p.rho0Hi = 0;
    return p;
}

void RunConfig::validate() const {
    if (mode != "generate" && mode != "infer" && mode != "summarize")
        throw ConfigError("config: mode must be generate, infer, or summarize, got '" + mode +
                          "'");
    if (!(lengthUnit > 0) || !std::isfinite(lengthUnit))
        throw ConfigError("config: length_unit must be positive");
    if (!(velocityUnit > 0) || !std::isfinite(velocityUnit))
        throw ConfigError("config: velocity_unit must be positive");
    if (nXCap < 1)
        throw ConfigError("config: n_x_cap must be at least 1");
    if (!(burnFraction >= 0) || !(burnFraction < 1))
        throw ConfigError("config: burn_fraction must lie in [0, 1)");
    synth.validate();
    quad.validate();
    sampler.validate();
    // the NFW reference is either fully unset (derived from data) or a box
    bool unset = priors.rsLo == 0 && priors.rsHi == 0 && priors.rho0Lo == 0 && priors.rho0Hi == 0;
    if (!unset)
        priors.validate();
}

namespace {

// ---------------------------------------------------------------- config keys

double parseDoubleValue(const std::string& key, const std::string& v) {
    char* end = nullptr;
    double x = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || v.empty() || !std::isfinite(x))
        throw ConfigError("config: key '" + key + "' needs a finite number, got '" + v + "'");
    return x;
}

long parseLongValue(const std::string& key, const std::string& v) {
    char* end = nullptr;
    long x = std::strtol(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size() || v.empty())
        throw ConfigError("config: key '" + key + "' needs an integer, got '" + v + "'");
    return x;
}

std::uint64_t parseSeedValue(const std::string& key, const std::string& v) {
    char* end = nullptr;
    unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size() || v.empty())
        throw ConfigError("config: key '" + key + "' needs a non-negative integer, got '" + v +
                          "'");
    return std::uint64_t(x);
}

bool parseBoolValue(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on")
        return true;
    if (v == "0" || v == "false" || v == "no" || v == "off")
        return false;
    throw ConfigError("config: key '" + key + "' needs a boolean, got '" + v + "'");
}

int parseIntValue(const std::string& key, const std::string& v) {
    return int(parseLongValue(key, v));
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& keyTable() {
    auto str = [](std::string RunConfig::* f) {
        return Setter([f](RunConfig& c, const std::string&, const std::string& v) { c.*f = v; });
    };
    auto num = [](auto member) {
        return Setter([member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = parseDoubleValue(k, v);
        });
    };
    auto integer = [](auto member) {
        return Setter([member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = parseIntValue(k, v);
        });
    };
    auto longint = [](auto member) {
        return Setter([member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = parseLongValue(k, v);
        });
    };
    auto boolean = [](auto member) {
        return Setter([member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = parseBoolValue(k, v);
        });
    };
    static const std::map<std::string, Setter> table = {
        {"mode", str(&RunConfig::mode)},
        {"catalog", str(&RunConfig::catalogPath)},
        {"out_dir", str(&RunConfig::outDir)},
        {"resume", str(&RunConfig::resumePath)},
        {"seed",
         Setter([](RunConfig& c, const std::string& k, const std::string& v) {
             c.seed = parseSeedValue(k, v);
         })},
        {"isotropic", boolean([](RunConfig& c) -> bool& { return c.isotropic; })},
        {"length_unit", num([](RunConfig& c) -> double& { return c.lengthUnit; })},
        {"velocity_unit", num([](RunConfig& c) -> double& { return c.velocityUnit; })},
        {"n_x_cap", integer([](RunConfig& c) -> int& { return c.nXCap; })},
        {"burn_fraction", num([](RunConfig& c) -> double& { return c.burnFraction; })},
        {"emit_area_weighted_mass",
         boolean([](RunConfig& c) -> bool& { return c.emitAreaWeightedMass; })},

        {"synth_kind",
         Setter([](RunConfig& c, const std::string&, const std::string& v) {
             if (v == "wd")
                 c.synth.kind = SynthKind::WD;
             else if (v == "michie")
                 c.synth.kind = SynthKind::Michie;
             else
                 throw ConfigError("config: synth_kind must be wd or michie, got '" + v + "'");
         })},
        {"synth_n_data", integer([](RunConfig& c) -> int& { return c.synth.nData; })},
        {"synth_sigma", num([](RunConfig& c) -> double& { return c.synth.sigma; })},
        {"synth_ra", num([](RunConfig& c) -> double& { return c.synth.ra; })},
        {"synth_mass", num([](RunConfig& c) -> double& { return c.synth.mass; })},
        {"synth_a", num([](RunConfig& c) -> double& { return c.synth.a; })},
        {"synth_sigma_v3", num([](RunConfig& c) -> double& { return c.synth.sigmaV3; })},

        {"prior_span_decades",
         num([](RunConfig& c) -> double& { return c.priors.nfwSpanDecades; })},
        {"prior_n_ell_lo", integer([](RunConfig& c) -> int& { return c.priors.nEllLo; })},
        {"prior_n_ell_hi", integer([](RunConfig& c) -> int& { return c.priors.nEllHi; })},
        {"prior_rs_lo", num([](RunConfig& c) -> double& { return c.priors.rsLo; })},
        {"prior_rs_hi", num([](RunConfig& c) -> double& { return c.priors.rsHi; })},
        {"prior_rho0_lo", num([](RunConfig& c) -> double& { return c.priors.rho0Lo; })},
        {"prior_rho0_hi", num([](RunConfig& c) -> double& { return c.priors.rho0Hi; })},

        {"quad_overlap_v1_strips", integer([](RunConfig& c) -> int& { return c.quad.overlap.nV1; })},
        {"quad_overlap_tol", num([](RunConfig& c) -> double& { return c.quad.overlap.tol; })},
        {"quad_z_radial_nodes", integer([](RunConfig& c) -> int& { return c.quad.zRadialNodes; })},
        {"quad_z_velocity_nodes",
         integer([](RunConfig& c) -> int& { return c.quad.zVelocityNodes; })},
        {"quad_hermite_nodes", integer([](RunConfig& c) -> int& { return c.quad.hermiteNodes; })},
        {"quad_sweep_s3_nodes", integer([](RunConfig& c) -> int& { return c.quad.sweepS3Nodes; })},
        {"quad_sweep_v1_nodes", integer([](RunConfig& c) -> int& { return c.quad.sweepV1Nodes; })},
        {"quad_r_out_factor", num([](RunConfig& c) -> double& { return c.quad.rOutFactor; })},
        {"quad_potential_table_size",
         integer([](RunConfig& c) -> int& { return c.quad.potentialTableSize; })},
        {"quad_eps_margin", num([](RunConfig& c) -> double& { return c.quad.epsMargin; })},
        {"quad_n_eps_min", integer([](RunConfig& c) -> int& { return c.quad.nEpsMin; })},
        {"quad_n_eps_cap", integer([](RunConfig& c) -> int& { return c.quad.nEpsCap; })},

        {"n_iter", longint([](RunConfig& c) -> long& { return c.sampler.nIter; })},
        {"thin", longint([](RunConfig& c) -> long& { return c.sampler.thin; })},
        {"checkpoint_every",
         longint([](RunConfig& c) -> long& { return c.sampler.checkpointEvery; })},
        {"sampler_n0", longint([](RunConfig& c) -> long& { return c.sampler.n0; })},
        {"sampler_init_sd_frac",
         num([](RunConfig& c) -> double& { return c.sampler.initSdFrac; })},
        {"sampler_floor_variance",
         num([](RunConfig& c) -> double& { return c.sampler.floorVariance; })},
        {"sampler_nell_period",
         integer([](RunConfig& c) -> int& { return c.sampler.nellPeriod; })},
        {"sampler_adapt_stop",
         longint([](RunConfig& c) -> long& { return c.sampler.adaptStop; })},
    };
    return table;
}

std::string trimmed(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos)
        return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string numText(double x) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace

void applyConfigKey(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto it = keyTable().find(key);
    if (it == keyTable().end())
        throw ConfigError("config: unknown key '" + key + "'");
    it->second(cfg, key, value);
}

RunConfig parseRunConfig(std::istream& is) {
    RunConfig cfg;
    std::string line;
    long lineNo = 0;
    while (std::getline(is, line)) {
        lineNo++;
        std::string t = trimmed(line);
        if (t.empty() || t[0] == '#')
            continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineNo) +
                              ": expected 'key = value', got '" + t + "'");
        try {
            applyConfigKey(cfg, trimmed(t.substr(0, eq)), trimmed(t.substr(eq + 1)));
        } catch (const ConfigError& e) {
            std::string msg = e.what();
            if (msg.rfind("config: ", 0) == 0)
                msg = msg.substr(8);
            throw ConfigError("config line " + std::to_string(lineNo) + ": " + msg);
        }
    }
    return cfg;
}

RunConfig loadRunConfig(const std::string& path) {
    std::ifstream is(path);
    if (!is)
        throw ConfigError("config: cannot read '" + path + "'");
    return parseRunConfig(is);
}

namespace {

/// the isotropic flag collapses the momentum-bin support and disables its moves
RunConfig withIsotropicApplied(RunConfig cfg) {
    if (cfg.isotropic) {
        cfg.priors.nEllLo = cfg.priors.nEllHi = 1;
        cfg.sampler.nellPeriod = 0;
    }
    cfg.sampler.nEllLo = cfg.priors.nEllLo;
    cfg.sampler.nEllHi = cfg.priors.nEllHi;
    return cfg;
}

}  // namespace

std::string canonicalConfigText(const RunConfig& raw) {
    RunConfig cfg = withIsotropicApplied(raw);
    std::ostringstream os;
    os << "burn_fraction=" << numText(cfg.burnFraction) << '\n'
       << "checkpoint_every=" << cfg.sampler.checkpointEvery << '\n'
       << "emit_area_weighted_mass=" << (cfg.emitAreaWeightedMass ? 1 : 0) << '\n'
       << "isotropic=" << (cfg.isotropic ? 1 : 0) << '\n'
       << "length_unit=" << numText(cfg.lengthUnit) << '\n'
       << "n_iter=" << cfg.sampler.nIter << '\n'
       << "n_x_cap=" << cfg.nXCap << '\n'
       << "prior_n_ell_hi=" << cfg.priors.nEllHi << '\n'
       << "prior_n_ell_lo=" << cfg.priors.nEllLo << '\n'
       << "prior_rho0_hi=" << numText(cfg.priors.rho0Hi) << '\n'
       << "prior_rho0_lo=" << numText(cfg.priors.rho0Lo) << '\n'
       << "prior_rs_hi=" << numText(cfg.priors.rsHi) << '\n'
       << "prior_rs_lo=" << numText(cfg.priors.rsLo) << '\n'
       << "prior_span_decades=" << numText(cfg.priors.nfwSpanDecades) << '\n'
       << "quad_eps_margin=" << numText(cfg.quad.epsMargin) << '\n'
       << "quad_hermite_nodes=" << cfg.quad.hermiteNodes << '\n'
       << "quad_n_eps_cap=" << cfg.quad.nEpsCap << '\n'
       << "quad_n_eps_min=" << cfg.quad.nEpsMin << '\n'
       << "quad_overlap_tol=" << numText(cfg.quad.overlap.tol) << '\n'
       << "quad_overlap_v1_strips=" << cfg.quad.overlap.nV1 << '\n'
       << "quad_potential_table_size=" << cfg.quad.potentialTableSize << '\n'
       << "quad_r_out_factor=" << numText(cfg.quad.rOutFactor) << '\n'
       << "quad_sweep_s3_nodes=" << cfg.quad.sweepS3Nodes << '\n'
       << "quad_sweep_v1_nodes=" << cfg.quad.sweepV1Nodes << '\n'
       << "quad_z_radial_nodes=" << cfg.quad.zRadialNodes << '\n'
       << "quad_z_velocity_nodes=" << cfg.quad.zVelocityNodes << '\n'
       << "sampler_adapt_stop=" << cfg.sampler.adaptStop << '\n'
       << "sampler_floor_variance=" << numText(cfg.sampler.floorVariance) << '\n'
       << "sampler_init_sd_frac=" << numText(cfg.sampler.initSdFrac) << '\n'
       << "sampler_n0=" << cfg.sampler.n0 << '\n'
       << "sampler_nell_period=" << cfg.sampler.nellPeriod << '\n'
       << "synth_a=" << numText(cfg.synth.a) << '\n'
       << "synth_kind=" << (cfg.synth.kind == SynthKind::WD ? "wd" : "michie") << '\n'
       << "synth_mass=" << numText(cfg.synth.mass) << '\n'
       << "synth_n_data=" << cfg.synth.nData << '\n'
       << "synth_ra=" << numText(cfg.synth.ra) << '\n'
       << "synth_sigma=" << numText(cfg.synth.sigma) << '\n'
       << "synth_sigma_v3=" << numText(cfg.synth.sigmaV3) << '\n'
       << "thin=" << cfg.sampler.thin << '\n'
       << "velocity_unit=" << numText(cfg.velocityUnit) << '\n';
    return os.str();
}

std::uint64_t configHash(const RunConfig& cfg) {
    std::string text = canonicalConfigText(cfg);
    return math::fnv1a(text.data(), text.size());
}

// ------------------------------------------------------------------- catalogs

namespace {

double parseCell(const std::string& cell, const char* column, long lineNo) {
    char* end = nullptr;
    std::string t = trimmed(cell);
    double x = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size())
        throw DataError("catalog line " + std::to_string(lineNo) + ", column " + column +
                        ": cannot parse '" + t + "'");
    return x;
}

std::vector<std::string> splitCsv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

}  // namespace

std::vector<KinematicDatum> ingestCatalog(std::istream& is, const std::string& name,
                                          double lengthUnit, double velocityUnit) {
    std::string header;
    if (!std::getline(is, header))
        throw DataError(name + ": empty catalog file");
    std::string h = trimmed(header);
    bool full;
    if (h == "x1,x2,v3,sigma_v3")
        full = true;
    else if (h == "rp,v3,sigma_v3")
        full = false;
    else
        throw DataError(name + " line 1: unrecognized header '" + h +
                        "'; expected x1,x2,v3,sigma_v3 or rp,v3,sigma_v3");

    std::vector<KinematicDatum> data;
    std::string line;
    long lineNo = 1;
    while (std::getline(is, line)) {
        lineNo++;
        std::string t = trimmed(line);
        if (t.empty())
            continue;
        std::vector<std::string> cells = splitCsv(t);
        std::size_t want = full ? 4 : 3;
        if (cells.size() != want)
            throw DataError(name + " line " + std::to_string(lineNo) + ": expected " +
                            std::to_string(want) + " columns, got " +
                            std::to_string(cells.size()));
        KinematicDatum d;
        if (full) {
            d.x1 = lengthUnit * parseCell(cells[0], "x1", lineNo);
            d.x2 = lengthUnit * parseCell(cells[1], "x2", lineNo);
            d.v3 = velocityUnit * parseCell(cells[2], "v3", lineNo);
            d.sigmaV3 = velocityUnit * parseCell(cells[3], "sigma_v3", lineNo);
        } else {
            d.x1 = lengthUnit * parseCell(cells[0], "rp", lineNo);
            d.x2 = 0;
            d.v3 = velocityUnit * parseCell(cells[1], "v3", lineNo);
            d.sigmaV3 = velocityUnit * parseCell(cells[2], "sigma_v3", lineNo);
        }
        try {
            d.validate();
        } catch (const std::exception& e) {
            throw DataError(name + " line " + std::to_string(lineNo) + ": " + e.what());
        }
        data.push_back(d);
    }
    if (data.empty())
        throw DataError(name + ": catalog has a header but no rows");
    return data;
}

std::vector<KinematicDatum> ingestCatalogFile(const std::string& path, double lengthUnit,
                                              double velocityUnit) {
    std::ifstream is(path);
    if (!is)
        throw DataError("catalog: cannot read '" + path + "'");
    return ingestCatalog(is, path, lengthUnit, velocityUnit);
}

void writeCatalogCsv(std::ostream& os, const std::vector<KinematicDatum>& data) {
    os << "x1,x2,v3,sigma_v3\n";
    for (const KinematicDatum& d : data)
        os << numText(d.x1) << ',' << numText(d.x2) << ',' << numText(d.v3) << ','
           << numText(d.sigmaV3) << '\n';
}

// -------------------------------------------------------------- radial binning

RadialGrid buildRadialBins(const std::vector<KinematicDatum>& data, int nXCap,
                           std::string* warning) {
    if (data.empty())
        throw DataError("radial bins: empty catalog");
    if (nXCap < 1)
        throw ConfigError("radial bins: bin cap must be at least 1");
    double rLo = data[0].rp(), rHi = rLo;
    for (const KinematicDatum& d : data) {
        rLo = std::min(rLo, d.rp());
        rHi = std::max(rHi, d.rp());
    }
    if (rLo == rHi) {
        if (warning)
            *warning = "all projected radii equal " + numText(rLo) +
                       "; using a single token-width bin";
        return RadialGrid{rLo, 0.1 * rLo, 1};
    }

    // finest uniform grid, capped, with every bin occupied (last edge inclusive)
    for (int nX = nXCap; nX >= 2; nX--) {
        double dr = (rHi - rLo) / nX;
        std::vector<int> occupancy(std::size_t(nX), 0);
        for (const KinematicDatum& d : data) {
            int b = std::min(nX - 1, int((d.rp() - rLo) / dr));
            occupancy[std::size_t(b)]++;
        }
        if (std::all_of(occupancy.begin(), occupancy.end(), [](int c) { return c > 0; }))
            return RadialGrid{rLo, dr, nX};
    }
    return RadialGrid{rLo, rHi - rLo, 1};
}

void derivePriorDefaults(PriorSpec& priors, const std::vector<KinematicDatum>& data) {
    bool unset = priors.rsLo == 0 && priors.rsHi == 0 && priors.rho0Lo == 0 && priors.rho0Hi == 0;
    if (!unset)
        return;
    if (data.empty())
        throw DataError("prior defaults: empty catalog");
    double rMax = 0, v2 = 0;
    for (const KinematicDatum& d : data) {
        rMax = std::max(rMax, d.rp());
        v2 += d.v3 * d.v3;
    }
    v2 /= double(data.size());
    double rs = 0.5 * rMax;
    // crude virial guess spread over the reference shape inside rMax
    double mEst = 5.0 * rMax * v2;
    double c = rMax / rs;
    double shape = std::log(1 + c) - c / (1 + c);
    double rho0 = mEst / (4 * math::PI * rs * rs * rs * shape);
    if (!(rho0 > 0) || !std::isfinite(rho0))
        throw DataError("prior defaults: catalog velocities give no usable mass scale");
    priors.rsLo = priors.rsHi = rs;
    priors.rho0Lo = priors.rho0Hi = rho0;
}

// ------------------------------------------------------------------ record I/O

void writeRecordHeader(std::ostream& rhoCsv, std::ostream& fCsv, const RadialGrid& grid) {
    rhoCsv << "# grid," << numText(grid.rMin) << ',' << numText(grid.deltaR) << ',' << grid.nX
           << '\n';
    rhoCsv << "iter,n_ell,n_eps,log_post";
    for (int b = 1; b <= grid.nX; b++)
        rhoCsv << ",rho_" << b;
    rhoCsv << '\n';
    fCsv << "# pdf rows: iter,n_eps,n_ell,f values row-major from the most bound energy\n";
}

void appendRecordEntry(std::ostream& rhoCsv, std::ostream& fCsv, const ChainRecordEntry& e) {
    rhoCsv << e.iter << ',' << e.nEll << ',' << e.nEps << ',' << numText(e.logPost);
    for (double r : rhoFromDelta(e.delta))
        rhoCsv << ',' << numText(r);
    rhoCsv << '\n';

    // pdf values by suffix sums down the energy rows; the escape-side row is zero
    std::size_t nEll = std::size_t(e.nEll);
    std::vector<double> f(std::size_t(e.nEps) * nEll, 0.0);
    for (int c = e.nEps - 2; c >= 0; c--)
        for (std::size_t d = 0; d < nEll; d++)
            f[std::size_t(c) * nEll + d] =
                f[(std::size_t(c) + 1) * nEll + d] + e.gamma[std::size_t(c) * nEll + d];
    fCsv << e.iter << ',' << e.nEps << ',' << e.nEll;
    for (double v : f)
        fCsv << ',' << numText(v);
    fCsv << '\n';
}

LoadedRecord loadRecord(std::istream& rhoCsv, std::istream* fCsv) {
    LoadedRecord rec;
    std::string line;
    if (!std::getline(rhoCsv, line) || line.rfind("# grid,", 0) != 0)
        throw DataError("record: missing grid line");
    {
        std::vector<std::string> cells = splitCsv(line.substr(7));
        if (cells.size() != 3)
            throw DataError("record: malformed grid line");
        rec.grid.rMin = parseCell(cells[0], "r_min", 1);
        rec.grid.deltaR = parseCell(cells[1], "delta_r", 1);
        rec.grid.nX = int(parseCell(cells[2], "n_x", 1));
    }
    if (!std::getline(rhoCsv, line))
        throw DataError("record: missing header");
    long lineNo = 2;
    while (std::getline(rhoCsv, line)) {
        lineNo++;
        std::string t = trimmed(line);
        if (t.empty())
            continue;
        std::vector<std::string> cells = splitCsv(t);
        if (cells.size() != std::size_t(4 + rec.grid.nX))
            throw DataError("record line " + std::to_string(lineNo) +
                            ": wrong column count");
        ChainRecordEntry e;
        e.iter = long(parseCell(cells[0], "iter", lineNo));
        e.nEll = int(parseCell(cells[1], "n_ell", lineNo));
        e.nEps = int(parseCell(cells[2], "n_eps", lineNo));
        e.logPost = parseCell(cells[3], "log_post", lineNo);
        std::vector<double> rho(std::size_t(rec.grid.nX), 0.0);
        for (int b = 0; b < rec.grid.nX; b++)
            rho[std::size_t(b)] = parseCell(cells[std::size_t(4 + b)], "rho", lineNo);
        e.delta.resize(rho.size());
        for (std::size_t b = 0; b + 1 < rho.size(); b++) {
            e.delta[b] = rho[b] - rho[b + 1];
            if (e.delta[b] < 0)
                throw DataError("record line " + std::to_string(lineNo) +
                                ": density increases outward");
        }
        e.delta.back() = rho.back();
        rec.entries.push_back(std::move(e));
    }
    if (rec.entries.empty())
        throw DataError("record: no entries");

    if (fCsv) {
        if (!std::getline(*fCsv, line) || line.rfind("# pdf rows", 0) != 0)
            throw DataError("pdf record: missing header line");
        std::size_t idx = 0;
        long fLine = 1;
        while (std::getline(*fCsv, line)) {
            fLine++;
            std::string t = trimmed(line);
            if (t.empty())
                continue;
            if (idx >= rec.entries.size())
                throw DataError("pdf record: more rows than the density record");
            ChainRecordEntry& e = rec.entries[idx];
            std::vector<std::string> cells = splitCsv(t);
            if (cells.size() < 3)
                throw DataError("pdf record line " + std::to_string(fLine) + ": short row");
            long iter = long(parseCell(cells[0], "iter", fLine));
            int nEps = int(parseCell(cells[1], "n_eps", fLine));
            int nEll = int(parseCell(cells[2], "n_ell", fLine));
            if (iter != e.iter || nEps != e.nEps || nEll != e.nEll)
                throw DataError("pdf record line " + std::to_string(fLine) +
                                ": does not match the density record");
            if (cells.size() != 3 + std::size_t(nEps) * std::size_t(nEll))
                throw DataError("pdf record line " + std::to_string(fLine) +
                                ": wrong value count");
            std::vector<double> f(std::size_t(nEps) * std::size_t(nEll), 0.0);
            for (std::size_t i = 0; i < f.size(); i++)
                f[i] = parseCell(cells[3 + i], "f", fLine);
            e.gamma.assign(std::size_t(nEps - 1) * std::size_t(nEll), 0.0);
            for (int c = 0; c + 1 < nEps; c++)
                for (int d = 0; d < nEll; d++) {
                    double g = f[std::size_t(c) * std::size_t(nEll) + std::size_t(d)] -
                               f[(std::size_t(c) + 1) * std::size_t(nEll) + std::size_t(d)];
                    if (g < 0)
                        throw DataError("pdf record line " + std::to_string(fLine) +
                                        ": pdf increases toward escape");
                    e.gamma[std::size_t(c) * std::size_t(nEll) + std::size_t(d)] = g;
                }
            idx++;
        }
        if (idx != rec.entries.size())
            throw DataError("pdf record: fewer rows than the density record");
    }
    return rec;
}

LoadedRecord loadRecordFiles(const std::string& rhoPath, const std::string& fPath) {
    std::ifstream rho(rhoPath);
    if (!rho)
        throw DataError("record: cannot read '" + rhoPath + "'");
    if (!fPath.empty()) {
        std::ifstream f(fPath);
        if (!f)
            throw DataError("record: cannot read '" + fPath + "'");
        return loadRecord(rho, &f);
    }
    return loadRecord(rho, nullptr);
}

// --------------------------------------------------------------------- runners

namespace {

std::ofstream openOut(const fs::path& p) {
    std::ofstream os(p);
    if (!os)
        throw DataError("cannot write '" + p.string() + "'");
    return os;
}

std::string hashHex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
    return buf;
}

json manifestBase(const RunConfig& cfg) {
    json m;
    m["program"] = "kinemass";
    m["version"] = kProgramVersion;
    m["mode"] = cfg.mode;
    m["seed"] = cfg.seed;
    m["config_hash"] = hashHex(configHash(cfg));
    m["formats"] = {{"catalog", kCatalogFormatVersion},
                    {"record", kRecordFormatVersion},
                    {"checkpoint", 1}};
    return m;
}

void writeManifest(const RunConfig& cfg, json manifest) {
    std::ofstream os = openOut(fs::path(cfg.outDir) / "manifest.json");
    os << manifest.dump(2) << '\n';
}

/// summaries, profile, pdf means, and the drift check, all from the emitted
/// record files so a later summarize run reproduces them byte for byte
json summarizeRunDir(const RunConfig& cfg, const LoadedRecord& rec,
                     std::vector<std::string>& artifacts) {
    json info;
    info["records"] = rec.entries.size();
    long burn = long(std::floor(cfg.burnFraction * double(rec.entries.size())));
    long kept = long(rec.entries.size()) - burn;
    if (kept < 20) {
        info["summaries"] = "skipped: fewer than 20 post-burn-in records";
        return info;
    }

    RecordSummary sum = summarizeRecord(rec.entries, rec.grid, cfg.burnFraction);
    info["post_burn_records"] = sum.used;
    {
        std::vector<IntervalSummary> rows = sum.rho;
        rows.insert(rows.end(), sum.mass.begin(), sum.mass.end());
        rows.push_back(sum.logPost);
        std::ofstream os = openOut(fs::path(cfg.outDir) / "summary.csv");
        writeSummaryCsv(os, rows);
        artifacts.push_back("summary.csv");
    }
    {
        std::ofstream os = openOut(fs::path(cfg.outDir) / "profile.csv");
        writeProfileCsv(os, rec.grid, sum.rho, sum.mass);
        artifacts.push_back("profile.csv");
    }
    json occupancy = json::object();
    for (const auto& [nEll, count] : sum.nEllCounts)
        occupancy[std::to_string(nEll)] = count;
    info["n_ell_occupancy"] = occupancy;

    if (cfg.emitAreaWeightedMass) {
        // alternate mass weighting, summarized per recorded state like the primary
        std::vector<std::vector<double>> cols(std::size_t(rec.grid.nX));
        DensityProfile p;
        p.grid = rec.grid;
        for (std::size_t i = std::size_t(burn); i < rec.entries.size(); i++) {
            p.rho = rhoFromDelta(rec.entries[i].delta);
            std::vector<double> m = enclosedMassAreaWeighted(p);
            for (std::size_t b = 0; b < m.size(); b++)
                cols[b].push_back(m[b]);
        }
        std::vector<IntervalSummary> aw;
        for (std::size_t b = 0; b < cols.size(); b++) {
            IntervalSummary s;
            s.name = "mass_aw[" + std::to_string(b) + "]";
            s.mode = marginalMode(cols[b]);
            std::pair<double, double> w = hpdInterval(cols[b]);
            s.hpdLo = w.first;
            s.hpdHi = w.second;
            aw.push_back(std::move(s));
        }
        std::ofstream os = openOut(fs::path(cfg.outDir) / "profile_area_weighted.csv");
        writeProfileCsv(os, rec.grid, sum.rho, aw);
        artifacts.push_back("profile_area_weighted.csv");
    }

    if (kept >= 60) {
        SplitCheckReport split = splitChainCheck(rec.entries, rec.grid, 3, cfg.burnFraction);
        std::ofstream os = openOut(fs::path(cfg.outDir) / "split_check.csv");
        os << "parameter,part_a,part_b,stat,p,flagged\n";
        for (const SplitParamCheck& pc : split.params)
            for (const SplitPairCheck& pr : pc.pairs)
                os << pc.name << ',' << pr.partA << ',' << pr.partB << ',' << numText(pr.stat)
                   << ',' << numText(pr.p) << ',' << (pc.flagged ? 1 : 0) << '\n';
        artifacts.push_back("split_check.csv");
        info["split_check_flagged"] = split.anyFlagged();
    } else {
        info["split_check"] = "skipped: fewer than 60 post-burn-in records";
    }

    // pdf cell means over the records sharing the modal shape
    {
        std::map<std::pair<int, int>, long> shapes;
        for (std::size_t i = std::size_t(burn); i < rec.entries.size(); i++)
            if (!rec.entries[i].gamma.empty())
                shapes[{rec.entries[i].nEps, rec.entries[i].nEll}]++;
        if (!shapes.empty()) {
            auto modal = std::max_element(shapes.begin(), shapes.end(),
                                          [](const auto& a, const auto& b) {
                                              return a.second < b.second;
                                          });
            int nEps = modal->first.first, nEll = modal->first.second;
            std::vector<double> mean(std::size_t(nEps) * std::size_t(nEll), 0.0);
            long count = 0;
            for (std::size_t i = std::size_t(burn); i < rec.entries.size(); i++) {
                const ChainRecordEntry& e = rec.entries[i];
                if (e.nEps != nEps || e.nEll != nEll || e.gamma.empty())
                    continue;
                std::vector<double> f(mean.size(), 0.0);
                for (int c = nEps - 2; c >= 0; c--)
                    for (int d = 0; d < nEll; d++)
                        f[std::size_t(c) * std::size_t(nEll) + std::size_t(d)] =
                            f[(std::size_t(c) + 1) * std::size_t(nEll) + std::size_t(d)] +
                            e.gamma[std::size_t(c) * std::size_t(nEll) + std::size_t(d)];
                for (std::size_t k = 0; k < f.size(); k++)
                    mean[k] += f[k];
                count++;
            }
            for (double& v : mean)
                v /= double(count);
            std::ofstream os = openOut(fs::path(cfg.outDir) / "f_mean.csv");
            os << "# shape," << nEps << ',' << nEll << ",records," << count << '\n';
            for (int c = 0; c < nEps; c++) {
                for (int d = 0; d < nEll; d++)
                    os << (d ? "," : "")
                       << numText(mean[std::size_t(c) * std::size_t(nEll) + std::size_t(d)]);
                os << '\n';
            }
            artifacts.push_back("f_mean.csv");
            info["f_mean_shape"] = {nEps, nEll};
        }
    }
    return info;
}

}  // namespace

int runGenerate(const RunConfig& cfg) {
    fs::create_directories(cfg.outDir);
    Rng rng(cfg.seed);
    std::vector<KinematicDatum> data = sampleCatalog(cfg.synth, rng);
    fs::path catalogPath = cfg.catalogPath.empty() ? fs::path(cfg.outDir) / "catalog.csv"
                                                   : fs::path(cfg.catalogPath);
    {
        std::ofstream os = openOut(catalogPath);
        writeCatalogCsv(os, data);
    }
    json m = manifestBase(cfg);
    m["artifacts"] = {catalogPath.filename().string(), "manifest.json"};
    m["info"] = {{"n_data", data.size()},
                 {"kind", cfg.synth.kind == SynthKind::WD ? "wd" : "michie"},
                 {"catalog", catalogPath.string()}};
    writeManifest(cfg, m);
    std::cout << "generated " << data.size() << " tracers -> " << catalogPath.string() << '\n';
    return 0;
}

int runInfer(const RunConfig& raw) {
    RunConfig cfg = withIsotropicApplied(raw);
    if (cfg.catalogPath.empty())
        throw ConfigError("infer: a catalog path is required");
    fs::create_directories(cfg.outDir);
    std::vector<KinematicDatum> data =
        ingestCatalogFile(cfg.catalogPath, cfg.lengthUnit, cfg.velocityUnit);

    std::string warning;
    RadialGrid grid = buildRadialBins(data, cfg.nXCap, &warning);
    if (!warning.empty())
        std::cerr << "warning: " << warning << '\n';
    cfg.quad.rMin = grid.rMin;
    cfg.quad.rMax = grid.edge(grid.nX);
    derivePriorDefaults(cfg.priors, data);
    cfg.priors.validate();
    cfg.sampler.validate();

    KinematicPosterior post(grid, data, cfg.priors, cfg.quad);

    fs::path rhoPath = fs::path(cfg.outDir) / "record_rho.csv";
    fs::path fPath = fs::path(cfg.outDir) / "record_f.csv";
    fs::path ckPath = fs::path(cfg.outDir) / "checkpoint.txt";
    bool resuming = !cfg.resumePath.empty();

    std::ofstream rhoCsv, fCsv;
    if (resuming) {
        rhoCsv.open(rhoPath, std::ios::app);
        fCsv.open(fPath, std::ios::app);
    } else {
        rhoCsv.open(rhoPath);
        fCsv.open(fPath);
    }
    if (!rhoCsv || !fCsv)
        throw DataError("infer: cannot write record files in '" + cfg.outDir + "'");
    if (!resuming)
        writeRecordHeader(rhoCsv, fCsv, grid);

    ChainSinks sinks;
    sinks.record = [&](const ChainRecordEntry& e) { appendRecordEntry(rhoCsv, fCsv, e); };
    sinks.checkpoint = [&](const Checkpoint& ck) {
        std::ofstream os = openOut(ckPath);
        ck.save(os);
    };

    ChainSummary chain;
    if (resuming) {
        std::ifstream is(cfg.resumePath);
        if (!is)
            throw DataError("infer: cannot read checkpoint '" + cfg.resumePath + "'");
        Checkpoint ck = Checkpoint::load(is);
        Sampler sampler(cfg.sampler, post, ck);
        chain = sampler.run(sinks);
        sinks.checkpoint(sampler.checkpoint());
    } else {
        int nEll0 = (cfg.priors.nEllLo + cfg.priors.nEllHi) / 2;
        Rng rng(cfg.seed);
        Sampler sampler(cfg.sampler, post, post.initialState(nEll0), rng);
        chain = sampler.run(sinks);
        sinks.checkpoint(sampler.checkpoint());
    }
    rhoCsv.close();
    fCsv.close();

    std::vector<std::string> artifacts = {"record_rho.csv", "record_f.csv", "checkpoint.txt",
                                          "manifest.json"};
    LoadedRecord rec = loadRecordFiles(rhoPath.string(), fPath.string());
    json info = summarizeRunDir(cfg, rec, artifacts);
    info["iterations"] = chain.iterations;
    info["accept_rate_main"] = chain.mainRate();
    info["accept_rate_n_ell"] = chain.nEllRate();
    info["grid"] = {{"r_min", grid.rMin}, {"delta_r", grid.deltaR}, {"n_x", grid.nX}};
    if (resuming)
        info["resumed_from"] = cfg.resumePath;

    json m = manifestBase(cfg);
    m["artifacts"] = artifacts;
    m["info"] = info;
    writeManifest(cfg, m);
    std::cout << "inference finished: " << chain.iterations << " iterations, "
              << rec.entries.size() << " recorded states -> " << cfg.outDir << '\n';
    return 0;
}

int runSummarize(const RunConfig& raw) {
    RunConfig cfg = withIsotropicApplied(raw);
    fs::create_directories(cfg.outDir);
    fs::path rhoPath = cfg.catalogPath.empty() ? fs::path(cfg.outDir) / "record_rho.csv"
                                               : fs::path(cfg.catalogPath);
    fs::path fPath = rhoPath.parent_path() / "record_f.csv";
    LoadedRecord rec = loadRecordFiles(rhoPath.string(),
                                       fs::exists(fPath) ? fPath.string() : std::string());

    std::vector<std::string> artifacts = {"manifest.json"};
    json info = summarizeRunDir(cfg, rec, artifacts);
    info["record"] = rhoPath.string();

    json m = manifestBase(cfg);
    m["artifacts"] = artifacts;
    m["info"] = info;
    writeManifest(cfg, m);
    std::cout << "summarized " << rec.entries.size() << " recorded states -> " << cfg.outDir
              << '\n';
    return 0;
}

int runMode(const RunConfig& cfg) {
    auto report = [](const char* kind, const std::string& msg) {
        json e = {{"error", kind}, {"message", msg}};
        std::cerr << e.dump() << '\n';
    };
    try {
        cfg.validate();
        if (cfg.mode == "generate")
            return runGenerate(cfg);
        if (cfg.mode == "infer")
            return runInfer(cfg);
        return runSummarize(cfg);
    } catch (const ConfigError& e) {
        report("config", e.what());
        return 2;
    } catch (const DataError& e) {
        report("data", e.what());
        return 3;
    } catch (const NumericalError& e) {
        report("numerical", e.what());
        return 4;
    } catch (const std::exception& e) {
        report("internal", e.what());
        return 4;
    }
}

}  // namespace kinemass
