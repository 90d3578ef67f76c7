#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "fsskit/episode.hpp"
#include "fsskit/fst.hpp"
#include "fsskit/kernels.hpp"
#include "fsskit/metrics.hpp"
#include "oracle/oracle_suite.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// exit codes: 0 ok, 1 validation/config, 2 io/format, 3 oracle failure
constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitIo = 2;
constexpr int kExitOracle = 3;

struct SizeSpec {
    std::size_t c = 16, h = 8, w = 8;
};

SizeSpec parse_size(const std::string& s) {
    SizeSpec out;
    unsigned long c = 0, h = 0, w = 0;
    char x1 = 0, x2 = 0;
    if (std::sscanf(s.c_str(), "%lu%c%lu%c%lu", &c, &x1, &h, &x2, &w) != 5 ||
        (x1 != 'x' && x1 != 'X') || (x2 != 'x' && x2 != 'X') || c == 0 || h == 0 ||
        w == 0)
        throw fsskit::ConfigError("--size expects CxHxW, e.g. 16x8x8, got '" + s + "'");
    out.c = c;
    out.h = h;
    out.w = w;
    return out;
}

json config_json(const fsskit::SyntheticConfig& sc, std::size_t n) {
    return json{{"seed", sc.seed},
                {"n", n},
                {"size", {{"c", sc.channels}, {"h", sc.height}, {"w", sc.width}}},
                {"signal", sc.signal},
                {"noise", sc.noise},
                {"cam_fidelity", sc.cam_fidelity},
                {"distractor", sc.distractor},
                {"shots", sc.shots}};
}

std::vector<fs::path> discover_episodes(const std::vector<std::string>& paths) {
    std::vector<fs::path> out;
    for (const std::string& p : paths) {
        const fs::path path(p);
        if (fs::exists(path / "manifest.json")) {
            out.push_back(path);
            continue;
        }
        if (!fs::is_directory(path))
            throw fsskit::IoError("episode path does not exist: " + p);
        std::vector<fs::path> subs;
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.is_directory() && fs::exists(entry.path() / "manifest.json"))
                subs.push_back(entry.path());
        std::sort(subs.begin(), subs.end());
        out.insert(out.end(), subs.begin(), subs.end());
    }
    if (out.empty())
        throw fsskit::ConfigError("no episodes found under the given paths");
    return out;
}

fsskit::BinaryMask threshold_prior(const fsskit::PriorMap& prior) {
    const std::size_t h = prior.grid.dim(1), w = prior.grid.dim(2);
    fsskit::BinaryMask m(h, w);
    for (std::size_t i = 0; i < h * w; ++i)
        m.set(i / w, i % w, prior.grid.data()[i] >= 0.5f);
    return m;
}

int cmd_gen(const fsskit::SyntheticConfig& cfg, std::size_t n, const fs::path& out_dir) {
    if (n == 0)
        throw fsskit::ConfigError("gen: --n must be >= 1");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec)
        throw fsskit::IoError("cannot create output directory " + out_dir.string());

    json index;
    index["seed"] = cfg.seed;
    index["n"] = n;
    index["config"] = config_json(cfg, n);
    json eps = json::array();
    for (std::size_t i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "episode_%05zu", i);
        const fsskit::SyntheticEpisode se = fsskit::generate_synthetic_episode(cfg, i);
        fsskit::write_episode(out_dir / name, se.episode);
        eps.push_back(name);
    }
    index["episodes"] = eps;
    std::ofstream os(out_dir / "index.json", std::ios::trunc);
    if (!os)
        throw fsskit::IoError("cannot write " + (out_dir / "index.json").string());
    os << index.dump(2) << "\n";
    std::cout << "wrote " << n << " episodes under " << out_dir.string() << "\n";
    return kExitOk;
}

int cmd_run(const fsskit::PipelineConfig& pc, double epsilon,
            const std::vector<std::string>& episode_paths, const fs::path& out_dir) {
    const std::vector<fs::path> dirs = discover_episodes(episode_paths);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec)
        throw fsskit::IoError("cannot create output directory " + out_dir.string());

    json report;
    report["config"] = {{"delta", pc.delta},
                        {"strategy", fsskit::strategy_name(pc.strategy)},
                        {"blocks", pc.decoder_blocks},
                        {"cab", pc.cab},
                        {"d_k", pc.d_k},
                        {"weight_seed", pc.weight_seed},
                        {"epsilon", epsilon}};
    json episodes = json::array();
    std::vector<fsskit::EpisodeMetrics> metrics;

    for (std::size_t i = 0; i < dirs.size(); ++i) {
        const fsskit::Episode ep = fsskit::read_episode(dirs[i]);
        const fsskit::PipelineResult res = fsskit::run_pipeline(ep, pc);

        const std::string name = dirs[i].filename().string();
        const fs::path edir = out_dir / name;
        fs::create_directories(edir, ec);
        if (ec)
            throw fsskit::IoError("cannot create " + edir.string());
        fsskit::write_fst(edir / "prior.fst", res.prior.grid);
        fsskit::write_fst(edir / "fused_query.fst", res.fused_query);
        fsskit::write_fst(edir / "decoder_output.fst", res.decoder_output);

        json je;
        je["episode"] = name;
        je["class_id"] = ep.class_id;
        je["k"] = ep.k();
        je["distractor"] = ep.distractor;
        je["outputs"] = {{"prior", name + "/prior.fst"},
                         {"fused_query", name + "/fused_query.fst"},
                         {"decoder_output", name + "/decoder_output.fst"}};
        json jmask = json::array();
        for (const fsskit::MaskingReport& r : res.reports)
            jmask.push_back(fsskit::to_json(r));
        je["masking"] = jmask;

        if (ep.query_mask) {
            const fsskit::BinaryMask pred = threshold_prior(res.prior);
            fsskit::EpisodeMetrics em;
            em.class_id = ep.class_id;
            em.fg = fsskit::confusion(pred, *ep.query_mask);
            em.bg = fsskit::confusion_background(pred, *ep.query_mask);
            em.prior_ce = fsskit::prior_cross_entropy(res.prior, *ep.query_mask, epsilon);
            metrics.push_back(em);
            je["metrics"] = {{"iou", fsskit::iou(pred, *ep.query_mask)},
                             {"prior_ce", em.prior_ce}};
        } else {
            je["metrics"] = nullptr;  // inference mode: no query ground truth
        }
        episodes.push_back(je);
    }
    report["episodes"] = episodes;
    if (!metrics.empty()) {
        const fsskit::MetricSummary s = fsskit::aggregate(metrics);
        report["summary"] = fsskit::to_json(s);
        std::ofstream cs(out_dir / "metrics.csv", std::ios::trunc);
        if (!cs)
            throw fsskit::IoError("cannot write " + (out_dir / "metrics.csv").string());
        cs << "fold,miou,fb_iou,ce_mean,ce_std,n\n"
           << fsskit::to_csv_row(s, "all") << "\n";
    } else {
        report["summary"] = nullptr;
    }

    std::ofstream os(out_dir / "report.json", std::ios::trunc);
    if (!os)
        throw fsskit::IoError("cannot write " + (out_dir / "report.json").string());
    os << report.dump(2) << "\n";
    std::cout << "processed " << dirs.size() << " episodes -> "
              << (out_dir / "report.json").string() << "\n";
    return kExitOk;
}

int cmd_mask_stats(fsskit::SyntheticConfig cfg, fsskit::PipelineConfig pc,
                   std::size_t n, const fs::path& out_dir) {
    if (n == 0)
        throw fsskit::ConfigError("mask-stats: --n must be >= 1");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec)
        throw fsskit::IoError("cannot create output directory " + out_dir.string());

    const fsskit::Strategy strategies[] = {fsskit::Strategy::Dicm,
                                           fsskit::Strategy::Cyctr};
    const std::size_t blocks = static_cast<std::size_t>(pc.cab);
    // accumulators indexed [strategy][block]
    std::vector<std::vector<double>> ratio_sum(2, std::vector<double>(blocks, 0.0));
    std::vector<std::vector<double>> ratio_max(2, std::vector<double>(blocks, 0.0));
    std::vector<std::vector<double>> cells_sum(2, std::vector<double>(blocks, 0.0));
    std::vector<std::vector<double>> cols_sum(2, std::vector<double>(blocks, 0.0));

    std::ofstream per_ep(out_dir / "mask_stats_episodes.csv", std::ios::trunc);
    if (!per_ep)
        throw fsskit::IoError("cannot write mask_stats_episodes.csv");
    per_ep << "episode,strategy,block,total_cells,masked_cells,masked_columns,ratio,"
              "skipped\n";

    for (std::size_t i = 0; i < n; ++i) {
        const fsskit::SyntheticEpisode se = fsskit::generate_synthetic_episode(cfg, i);
        for (int si = 0; si < 2; ++si) {
            fsskit::PipelineConfig run_pc = pc;
            run_pc.strategy = strategies[si];
            const fsskit::PipelineResult res = fsskit::run_pipeline(se.episode, run_pc);
            for (const fsskit::MaskingReport& r : res.reports) {
                const auto b = static_cast<std::size_t>(r.block_index);
                ratio_sum[si][b] += r.ratio;
                ratio_max[si][b] = std::max(ratio_max[si][b], r.ratio);
                cells_sum[si][b] += static_cast<double>(r.masked_cells);
                cols_sum[si][b] += static_cast<double>(r.masked_columns);
                char line[224];
                // %.17g so the ratio round-trips exactly for downstream checks
                std::snprintf(line, sizeof(line), "%zu,%s,%d,%zu,%zu,%zu,%.17g,%d", i,
                              fsskit::strategy_name(r.strategy).c_str(), r.block_index,
                              r.total_cells, r.masked_cells, r.masked_columns, r.ratio,
                              r.skipped ? 1 : 0);
                per_ep << line << "\n";
            }
        }
    }

    std::ofstream os(out_dir / "mask_stats.csv", std::ios::trunc);
    if (!os)
        throw fsskit::IoError("cannot write mask_stats.csv");
    os << "strategy,block,episodes,mean_masked_cells,mean_masked_columns,mean_ratio,"
          "max_ratio\n";
    for (int si : {1, 0}) {  // CyCTR rows first, matching the paper's table order
        for (std::size_t b = 0; b < blocks; ++b) {
            char line[192];
            std::snprintf(line, sizeof(line), "%s,%zu,%zu,%.9g,%.9g,%.9g,%.9g",
                          fsskit::strategy_name(strategies[si]).c_str(), b, n,
                          cells_sum[si][b] / static_cast<double>(n),
                          cols_sum[si][b] / static_cast<double>(n),
                          ratio_sum[si][b] / static_cast<double>(n), ratio_max[si][b]);
            os << line << "\n";
        }
    }
    std::cout << "wrote " << (out_dir / "mask_stats.csv").string() << "\n";
    return kExitOk;
}

int cmd_oracle(std::uint64_t seed, bool inject_fault) {
    fsskit::oracle::Options opts;
    opts.seed = seed;
    opts.inject_fault = inject_fault;
    const std::vector<fsskit::oracle::SuiteResult> results = fsskit::oracle::run_all(opts);
    bool all_pass = true;
    std::printf("%-28s %8s %14s %12s  %s\n", "suite", "cases", "max_abs_diff",
                "tolerance", "status");
    for (const auto& r : results) {
        std::printf("%-28s %8zu %14.3e %12.1e  %s\n", r.name.c_str(), r.cases,
                    r.max_abs_diff, r.tolerance, r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    if (!all_pass) {
        std::fprintf(stderr, "oracle: at least one suite exceeded its tolerance\n");
        return kExitOracle;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* threads = std::getenv("FSSK_THREADS")) {
        const int t = std::atoi(threads);
        if (t > 0) omp_set_num_threads(t);
    }

    CLI::App app{"fsskit: few-shot segmentation math core (prior maps, "
                 "cross-attention masking, metrics)"};
    app.require_subcommand(1);

    // ---- gen ----
    auto* gen = app.add_subcommand("gen", "generate seeded synthetic episodes");
    fsskit::SyntheticConfig gen_cfg;
    std::size_t gen_n = 10;
    std::string gen_size = "16x8x8";
    std::string gen_out = "episodes";
    std::size_t gen_shots = 1;
    gen->add_option("--seed", gen_cfg.seed, "master seed");
    gen->add_option("--n", gen_n, "episode count");
    gen->add_option("--size", gen_size, "feature extents CxHxW");
    gen->add_option("--out", gen_out, "output directory");
    gen->add_flag("--distractor", gen_cfg.distractor,
                  "plant a confusing background region sharing the class signature");
    gen->add_option("--cam-fidelity", gen_cfg.cam_fidelity,
                    "probability a CAM+ pixel truly covers foreground");
    gen->add_option("--noise", gen_cfg.noise, "feature noise scale");
    gen->add_option("--signal", gen_cfg.signal, "class signal strength");
    gen->add_option("--shots", gen_shots, "support shots per episode (k)");

    // ---- run ----
    auto* run = app.add_subcommand("run", "run the pipeline over episode directories");
    fsskit::PipelineConfig run_pc;
    std::string run_strategy = "none";
    double run_epsilon = 1e-6;
    std::string run_out = "run_out";
    std::vector<std::string> run_paths;
    run->add_option("--delta", run_pc.delta, "CAM threshold in (0,1)");
    run->add_option("--strategy", run_strategy, "attention masking: none|dicm|cyctr");
    run->add_option("--blocks", run_pc.decoder_blocks, "decoder block count (recorded)");
    run->add_option("--cab", run_pc.cab, "cross-attention block count");
    run->add_option("--epsilon", run_epsilon, "CE clamp epsilon");
    run->add_option("--weight-seed", run_pc.weight_seed, "projection/fusion weight seed");
    run->add_option("--out", run_out, "output directory");
    run->add_option("paths", run_paths, "episode directories (or a directory of them)")
        ->required();

    // ---- mask-stats ----
    auto* ms = app.add_subcommand(
        "mask-stats", "per-block DICM vs CyCTR mask ratios over seeded episodes");
    fsskit::SyntheticConfig ms_cfg;
    ms_cfg.distractor = true;  // the contrast needs confusable regions
    fsskit::PipelineConfig ms_pc;
    std::size_t ms_n = 20;
    std::string ms_size = "64x30x30";
    std::string ms_out = "mask_stats_out";
    ms->add_option("--seed", ms_cfg.seed, "master seed");
    ms->add_option("--n", ms_n, "episode count");
    ms->add_option("--size", ms_size, "feature extents CxHxW");
    ms->add_option("--out", ms_out, "output directory");
    ms->add_option("--cab", ms_pc.cab, "cross-attention block count");
    ms->add_option("--blocks", ms_pc.decoder_blocks, "decoder block count (recorded)");
    ms->add_option("--delta", ms_pc.delta, "CAM threshold");
    ms->add_option("--cam-fidelity", ms_cfg.cam_fidelity, "CAM fidelity");
    ms->add_flag("--distractor,!--no-distractor", ms_cfg.distractor,
                 "plant the confusing background region (default on here)");

    // ---- oracle ----
    auto* orc = app.add_subcommand("oracle", "run every derived-oracle suite");
    std::uint64_t orc_seed = 42;
    bool orc_fault = false;
    orc->add_option("--seed", orc_seed, "oracle case seed");
    orc->add_flag("--inject-fault", orc_fault,
                  "perturb one kernel output to exercise the failure path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (gen->parsed()) {
            const SizeSpec sz = parse_size(gen_size);
            gen_cfg.channels = sz.c;
            gen_cfg.height = sz.h;
            gen_cfg.width = sz.w;
            gen_cfg.shots = gen_shots;
            return cmd_gen(gen_cfg, gen_n, gen_out);
        }
        if (run->parsed()) {
            run_pc.strategy = fsskit::strategy_from_name(run_strategy);
            if (!(run_epsilon > 0.0 && run_epsilon < 0.5))
                throw fsskit::ConfigError("--epsilon must lie in (0, 0.5)");
            return cmd_run(run_pc, run_epsilon, run_paths, run_out);
        }
        if (ms->parsed()) {
            const SizeSpec sz = parse_size(ms_size);
            ms_cfg.channels = sz.c;
            ms_cfg.height = sz.h;
            ms_cfg.width = sz.w;
            return cmd_mask_stats(ms_cfg, ms_pc, ms_n, ms_out);
        }
        if (orc->parsed()) return cmd_oracle(orc_seed, orc_fault);
    } catch (const fsskit::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitIo;
    } catch (const fsskit::FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return kExitIo;
    } catch (const fsskit::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return kExitConfig;
}
