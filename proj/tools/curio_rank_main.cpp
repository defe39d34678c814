// curio-rank: curiosity-weighted serendipitous recommendation pipeline.
//
// Subcommands mirror the pipeline stages; `run` chains all of them. Stages
// skip themselves when their snapshot matches the current config hash, pass
// --force to redo them.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "curio/errors.hpp"
#include "curio/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 2;
constexpr int kExitMissingDependency = 3;
constexpr int kExitBadArgument = 4;

struct CliOptions {
    std::string config_path;
    std::string ratings, movies, out;
    std::string k_csv, sweep_csv;
    long long seed = -1;
    int x = -1;
    int threads = -1;
    int top_n = -1;
    long long max_users = -1;
    bool force = false;
};

curio::PipelineConfig build_config(const CliOptions& opt) {
    curio::PipelineConfig cfg;
    if (!opt.config_path.empty()) cfg = curio::PipelineConfig::from_file(opt.config_path);
    if (!opt.ratings.empty()) cfg.set_key("ratings", opt.ratings);
    if (!opt.movies.empty()) cfg.set_key("movies", opt.movies);
    if (!opt.out.empty()) cfg.set_key("out", opt.out);
    if (!opt.k_csv.empty()) cfg.set_key("k", opt.k_csv);
    if (!opt.sweep_csv.empty()) cfg.set_key("sweep_x", opt.sweep_csv);
    if (opt.seed >= 0) cfg.set_key("seed", std::to_string(opt.seed));
    if (opt.x >= 0) cfg.set_key("x", std::to_string(opt.x));
    if (opt.threads >= 0) cfg.set_key("threads", std::to_string(opt.threads));
    if (opt.top_n >= 0) cfg.set_key("top_n", std::to_string(opt.top_n));
    if (opt.max_users >= 0) cfg.set_key("max_users", std::to_string(opt.max_users));
    return cfg;
}

void add_common_flags(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--config", opt.config_path, "key = value config file");
    cmd->add_option("--ratings", opt.ratings, "ratings .dat path");
    cmd->add_option("--movies", opt.movies, "movies .dat path");
    cmd->add_option("--out", opt.out, "output directory");
    cmd->add_option("--seed", opt.seed, "master seed");
    cmd->add_option("--x", opt.x, "session suffix percentage (1-100)");
    cmd->add_option("--k", opt.k_csv, "comma separated k list");
    cmd->add_option("--sweep-x", opt.sweep_csv, "comma separated sweep x list");
    cmd->add_option("--threads", opt.threads, "thread count for parallel sections");
    cmd->add_option("--top-n", opt.top_n, "recommendation list length");
    cmd->add_option("--max-users", opt.max_users, "seeded user subsample size (0 = all)");
    cmd->add_flag("--force", opt.force, "redo the stage even if its snapshot is fresh");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"curio-rank: curiosity-weighted serendipitous recommendation pipeline"};
    app.require_subcommand(1);

    CliOptions opt;
    long long inspect_id = -1;
    long long dump_clusters_id = -1;

    CLI::App* ingest = app.add_subcommand("ingest", "parse data and write the split");
    CLI::App* train_mf = app.add_subcommand("train-mf", "train the preference factor model");
    CLI::App* train_seq = app.add_subcommand("train-seq", "train the short-term sequence model");
    CLI::App* train_ctr = app.add_subcommand("train-ctr", "train the usefulness model");
    CLI::App* curiosity = app.add_subcommand("curiosity", "compute per-user curiosity profiles");
    CLI::App* recommend = app.add_subcommand("recommend", "score and re-rank test candidates");
    CLI::App* evaluate = app.add_subcommand("evaluate", "compute metrics for all strategies");
    CLI::App* sweep = app.add_subcommand("sweep-x", "re-run curiosity across the x grid");
    CLI::App* inspect = app.add_subcommand("inspect-user", "print one user's preference lists");
    CLI::App* run = app.add_subcommand("run", "run every stage in order");

    for (CLI::App* cmd :
         {ingest, train_mf, train_seq, train_ctr, curiosity, recommend, evaluate, sweep, inspect, run})
        add_common_flags(cmd, opt);
    inspect->add_option("user", inspect_id, "user id")->required();
    recommend->add_option("--dump-clusters", dump_clusters_id,
                          "also write clusters_<user>.json for this user");

    CLI11_PARSE(app, argc, argv);

    try {
        curio::Pipeline pipeline(build_config(opt));
        if (ingest->parsed()) pipeline.ingest(opt.force);
        if (train_mf->parsed()) pipeline.train_mf(opt.force);
        if (train_seq->parsed()) pipeline.train_seq(opt.force);
        if (train_ctr->parsed()) pipeline.train_ctr(opt.force);
        if (curiosity->parsed()) pipeline.curiosity(opt.force);
        if (recommend->parsed()) {
            pipeline.recommend(opt.force);
            if (dump_clusters_id >= 0) pipeline.dump_clusters(dump_clusters_id);
        }
        if (evaluate->parsed()) pipeline.evaluate(opt.force);
        if (sweep->parsed()) pipeline.sweep(opt.force);
        if (run->parsed()) pipeline.run(opt.force);
        if (inspect->parsed()) std::cout << pipeline.inspect_user(inspect_id);
    } catch (const curio::MissingSnapshotError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissingDependency;
    } catch (const curio::ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadArgument;
    } catch (const curio::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const curio::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const curio::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
