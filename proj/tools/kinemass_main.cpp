#include <cstdint>
#include <string>

#include <CLI11.hpp>

#include "kinemass/cli.h"
#include "kinemass/errors.h"

/// Batch driver: load the config file if given, then apply flag overrides
/// and dispatch. Exit codes: 0 ok, 2 config, 3 data, 4 numerical.
int main(int argc, char** argv) {
    CLI::App app{"radial mass-density inference from projected stellar kinematics"};
    app.footer("modes: generate (synthetic catalog), infer (run the chain), "
               "summarize (re-summarize an existing record)");

    std::string mode, configPath, catalogPath, outDir, resumePath;
    std::uint64_t seed = 0;
    long iters = -1;
    bool isotropic = false;

    app.add_option("--mode", mode, "generate | infer | summarize");
    app.add_option("--config", configPath, "flat key-value config file");
    app.add_option("--catalog", catalogPath,
                   "catalog CSV (infer input, generate output, summarize record override)");
    app.add_option("--out", outDir, "output directory");
    app.add_option("--seed", seed, "random seed override");
    app.add_option("--iters", iters, "iteration count override");
    app.add_flag("--isotropic", isotropic, "fix the momentum binning to a single bin");
    app.add_option("--resume", resumePath, "checkpoint file to continue from");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    kinemass::RunConfig cfg;
    try {
        if (!configPath.empty())
            cfg = kinemass::loadRunConfig(configPath);
        if (app.count("--mode"))
            cfg.mode = mode;
        if (app.count("--catalog"))
            cfg.catalogPath = catalogPath;
        if (app.count("--out"))
            cfg.outDir = outDir;
        if (app.count("--seed"))
            cfg.seed = seed;
        if (app.count("--iters")) {
            if (iters < 0)
                throw kinemass::ConfigError("config: --iters must be non-negative");
            cfg.sampler.nIter = iters;
        }
        if (isotropic)
            cfg.isotropic = true;
        if (app.count("--resume"))
            cfg.resumePath = resumePath;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "{\"error\":\"config\",\"message\":\"%s\"}\n", e.what());
        return 2;
    }
    return kinemass::runMode(cfg);
}
