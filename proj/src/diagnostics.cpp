#include "kinemass/diagnostics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "kinemass/errors.h"
#include "kinemass/mathutil.h"

namespace kinemass {

namespace {

constexpr long kMinSamples = 20;

void requireSamples(std::size_t n, const char* what) {
    if (n < std::size_t(kMinSamples))
        throw DataError(std::string(what) + ": need at least 20 samples, got " +
                        std::to_string(n));
}

/// linear-interpolation quantile of an already sorted sample
double quantileSorted(const std::vector<double>& s, double p) {
    double pos = p * double(s.size() - 1);
    std::size_t lo = std::size_t(pos);
    if (lo + 1 >= s.size())
        return s.back();
    double frac = pos - double(lo);
    return s[lo] + frac * (s[lo + 1] - s[lo]);
}

std::string csvNum(double x) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace

std::pair<double, double> hpdInterval(std::vector<double> samples, double level) {
    requireSamples(samples.size(), "hpd interval");
    if (!(level > 0) || !(level <= 1))
        throw ConfigError("hpd interval: level must lie in (0, 1]");
    std::sort(samples.begin(), samples.end());
    std::size_t n = samples.size();
    std::size_t k = std::size_t(std::ceil(level * double(n)));
    k = std::clamp<std::size_t>(k, 1, n);
    std::size_t best = 0;
    double bestWidth = samples[k - 1] - samples[0];
    for (std::size_t i = 1; i + k <= n; i++) {
        double w = samples[i + k - 1] - samples[i];
        if (w < bestWidth) {
            bestWidth = w;
            best = i;
        }
    }
    return {samples[best], samples[best + k - 1]};
}

double marginalMode(std::vector<double> samples) {
    requireSamples(samples.size(), "marginal mode");
    std::sort(samples.begin(), samples.end());
    double lo = samples.front(), hi = samples.back();
    if (lo == hi)
        return lo;
    double n = double(samples.size());
    double iqr = quantileSorted(samples, 0.75) - quantileSorted(samples, 0.25);
    double h = 2 * iqr * std::pow(n, -1.0 / 3.0);
    if (!(h > 0))
        h = (hi - lo) / std::ceil(std::sqrt(n));
    std::size_t nBins = std::size_t(std::ceil((hi - lo) / h));
    nBins = std::clamp<std::size_t>(nBins, 1, 1u << 22);
    h = (hi - lo) / double(nBins);  // snap so the last bin ends exactly at the max
    std::vector<long> counts(nBins, 0);
    for (double x : samples) {
        std::size_t b = std::min(nBins - 1, std::size_t((x - lo) / h));
        counts[b]++;
    }
    std::size_t densest =
        std::size_t(std::max_element(counts.begin(), counts.end()) - counts.begin());
    return lo + (double(densest) + 0.5) * h;  // max_element keeps the lower tie
}

std::vector<double> enclosedMass(const DensityProfile& profile) {
    profile.validate();
    std::vector<double> m(profile.rho.size(), 0.0);
    double cum = 0;
    for (std::size_t j = 0; j < profile.rho.size(); j++) {
        double rLo = profile.grid.rMin + double(j) * profile.grid.deltaR;
        double rHi = rLo + profile.grid.deltaR;
        cum += (4.0 * math::PI / 3.0) * profile.rho[j] * (rHi * rHi * rHi - rLo * rLo * rLo);
        m[j] = cum;
    }
    return m;
}

std::vector<double> enclosedMassAreaWeighted(const DensityProfile& profile) {
    profile.validate();
    std::vector<double> m(profile.rho.size(), 0.0);
    double cum = 0;
    for (std::size_t j = 0; j < profile.rho.size(); j++) {
        double rLo = profile.grid.rMin + double(j) * profile.grid.deltaR;
        double rHi = rLo + profile.grid.deltaR;
        cum += 4.0 * math::PI * profile.rho[j] * (rHi * rHi - rLo * rLo);
        m[j] = cum;
    }
    return m;
}

double ksTwoSampleStat(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty())
        throw DataError("ks statistic: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        double t = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == t)
            i++;
        while (j < b.size() && b[j] == t)
            j++;
        d = std::max(d, std::fabs(double(i) / double(a.size()) - double(j) / double(b.size())));
    }
    return d;
}

double ksTwoSampleP(double stat, std::size_t n, std::size_t m) {
    if (n == 0 || m == 0)
        throw DataError("ks p-value: empty sample");
    double ne = std::sqrt(double(n) * double(m) / double(n + m));
    return math::kolmogorovQ((ne + 0.12 + 0.11 / ne) * stat);
}

bool SplitCheckReport::anyFlagged() const {
    return std::any_of(params.begin(), params.end(),
                       [](const SplitParamCheck& p) { return p.flagged; });
}

SplitCheckReport splitCheck(const std::vector<std::string>& names,
                            const std::vector<std::vector<double>>& columns, int parts,
                            double pThreshold) {
    if (parts < 2)
        throw ConfigError("split check: need at least 2 parts");
    if (!(pThreshold > 0) || !(pThreshold < 1))
        throw ConfigError("split check: p threshold must lie in (0, 1)");
    if (names.size() != columns.size())
        throw ConfigError("split check: one name per column required");
    if (columns.empty())
        throw DataError("split check: no columns");
    std::size_t len = columns[0].size();
    for (const std::vector<double>& c : columns)
        if (c.size() != len)
            throw DataError("split check: columns disagree in length");
    if (len < std::size_t(parts) * std::size_t(kMinSamples))
        throw DataError("split check: record too short, need " +
                        std::to_string(parts * kMinSamples) + " entries, got " +
                        std::to_string(len));

    std::size_t perPart = len / std::size_t(parts);
    SplitCheckReport report;
    report.perPart = long(perPart);
    for (std::size_t c = 0; c < columns.size(); c++) {
        SplitParamCheck pc;
        pc.name = names[c];
        for (int a = 0; a < parts; a++) {
            for (int b = a + 1; b < parts; b++) {
                std::vector<double> sa(columns[c].begin() + long(a) * long(perPart),
                                       columns[c].begin() + (long(a) + 1) * long(perPart));
                std::vector<double> sb(columns[c].begin() + long(b) * long(perPart),
                                       columns[c].begin() + (long(b) + 1) * long(perPart));
                SplitPairCheck pair;
                pair.partA = a;
                pair.partB = b;
                pair.stat = ksTwoSampleStat(std::move(sa), std::move(sb));
                pair.p = ksTwoSampleP(pair.stat, perPart, perPart);
                pc.flagged = pc.flagged || pair.p < pThreshold;
                pc.pairs.push_back(pair);
            }
        }
        report.params.push_back(std::move(pc));
    }
    return report;
}

namespace {

/// post-burn record slice plus the per-parameter columns diagnostics look at
struct RecordColumns {
    long burned = 0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
};

RecordColumns extractColumns(const std::vector<ChainRecordEntry>& record, const RadialGrid& grid,
                             double burnFraction) {
    if (!(burnFraction >= 0) || !(burnFraction < 1))
        throw ConfigError("record summary: burn fraction must lie in [0, 1)");
    if (record.empty())
        throw DataError("record summary: empty record");
    std::size_t nX = std::size_t(grid.nX);
    for (const ChainRecordEntry& e : record)
        if (e.delta.size() != nX)
            throw DataError("record summary: record does not match the radial grid");

    RecordColumns out;
    std::size_t burn = std::size_t(std::floor(burnFraction * double(record.size())));
    out.burned = long(burn);
    std::size_t kept = record.size() - burn;
    for (std::size_t b = 0; b < nX; b++) {
        out.names.push_back("rho[" + std::to_string(b) + "]");
        out.columns.emplace_back();
        out.columns.back().reserve(kept);
    }
    out.names.push_back("log_post");
    out.columns.emplace_back();
    out.columns.back().reserve(kept);
    for (std::size_t i = burn; i < record.size(); i++) {
        std::vector<double> rho = rhoFromDelta(record[i].delta);
        for (std::size_t b = 0; b < nX; b++)
            out.columns[b].push_back(rho[b]);
        out.columns[nX].push_back(record[i].logPost);
    }
    return out;
}

}  // namespace

SplitCheckReport splitChainCheck(const std::vector<ChainRecordEntry>& record,
                                 const RadialGrid& grid, int parts, double burnFraction,
                                 double pThreshold) {
    RecordColumns cols = extractColumns(record, grid, burnFraction);
    SplitCheckReport report = splitCheck(cols.names, cols.columns, parts, pThreshold);
    report.burned = cols.burned;
    return report;
}

RecordSummary summarizeRecord(const std::vector<ChainRecordEntry>& record, const RadialGrid& grid,
                              double burnFraction) {
    RecordColumns cols = extractColumns(record, grid, burnFraction);
    std::size_t nX = std::size_t(grid.nX);
    requireSamples(cols.columns[0].size(), "record summary");

    RecordSummary out;
    out.grid = grid;
    out.burned = cols.burned;
    out.used = long(cols.columns[0].size());

    auto summarize = [](std::string name, std::vector<double> samples) {
        IntervalSummary s;
        s.name = std::move(name);
        s.mode = marginalMode(samples);
        std::pair<double, double> w = hpdInterval(std::move(samples));
        s.hpdLo = w.first;
        s.hpdHi = w.second;
        return s;
    };

    for (std::size_t b = 0; b < nX; b++)
        out.rho.push_back(summarize(cols.names[b], cols.columns[b]));
    out.logPost = summarize("log_post", cols.columns[nX]);

    // the mass is summarized per recorded state, not taken from the density
    // summary: its marginal mode is not the transform of the density modes
    std::vector<std::vector<double>> massCols(nX);
    for (std::vector<double>& c : massCols)
        c.reserve(cols.columns[0].size());
    DensityProfile p;
    p.grid = grid;
    std::size_t burn = std::size_t(out.burned);
    for (std::size_t i = burn; i < record.size(); i++) {
        p.rho = rhoFromDelta(record[i].delta);
        std::vector<double> m = enclosedMass(p);
        for (std::size_t b = 0; b < nX; b++)
            massCols[b].push_back(m[b]);
        out.nEllCounts[record[i].nEll]++;
    }
    for (std::size_t b = 0; b < nX; b++)
        out.mass.push_back(summarize("mass[" + std::to_string(b) + "]", std::move(massCols[b])));
    return out;
}

void writeSummaryCsv(std::ostream& os, const std::vector<IntervalSummary>& rows) {
    os << "name,mode,hpd_lo,hpd_hi\n";
    for (const IntervalSummary& r : rows)
        os << r.name << ',' << csvNum(r.mode) << ',' << csvNum(r.hpdLo) << ','
           << csvNum(r.hpdHi) << '\n';
}

void writeProfileCsv(std::ostream& os, const RadialGrid& grid,
                     const std::vector<IntervalSummary>& rho,
                     const std::vector<IntervalSummary>& mass) {
    if (rho.size() != std::size_t(grid.nX) || mass.size() != std::size_t(grid.nX))
        throw ConfigError("profile csv: summaries do not match the grid");
    os << "r_b,rho_mode,rho_hpd_lo,rho_hpd_hi,mass_mode,mass_hpd_lo,mass_hpd_hi\n";
    for (std::size_t b = 0; b < std::size_t(grid.nX); b++) {
        double rb = grid.rMin + double(b + 1) * grid.deltaR;  // bin outer edge
        os << csvNum(rb) << ',' << csvNum(rho[b].mode) << ',' << csvNum(rho[b].hpdLo) << ','
           << csvNum(rho[b].hpdHi) << ',' << csvNum(mass[b].mode) << ','
           << csvNum(mass[b].hpdLo) << ',' << csvNum(mass[b].hpdHi) << '\n';
    }
}

}  // namespace kinemass
