#include <CLI11.hpp>

#include <iostream>

#include "aush/pipeline.hpp"

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::size_t workers = 1;
    std::string out;
    std::string profiles_dir;
    bool quiet = false;
};

aush::RunContext make_context(const Options& o) {
    aush::RunContext ctx;
    ctx.config = aush::parse_config(o.config);
    if (o.seed) ctx.config.seed = *o.seed;
    ctx.out_dir = o.out.empty() ? ctx.config.resolve(ctx.config.output_dir) : o.out;
    ctx.workers = std::max<std::size_t>(1, o.workers);
    ctx.quiet = o.quiet;
    return ctx;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AUSH shilling-attack pipeline"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "override the master seed");
        sub->add_option("--workers", o.workers, "parallel jobs")->check(CLI::PositiveNumber);
        sub->add_option("--out", o.out, "output directory (default: output_dir from the config)");
        sub->add_flag("--quiet,-q", o.quiet, "no progress output");
    };

    auto* prepare = app.add_subcommand("prepare-data", "load, filter and split the dataset; pick targets");
    auto* train = app.add_subcommand("train-victim", "train clean victim recommenders");
    auto* gen = app.add_subcommand("gen-attack", "generate attack profile sets");
    auto* eval = app.add_subcommand("evaluate", "inject profiles, retrain victims, score the attacks");
    auto* detect = app.add_subcommand("detect", "score detection-size profile sets with TVD/JS");
    auto* all = app.add_subcommand("run-all", "prepare-data, train-victim, gen-attack, detect, evaluate");
    auto* dump = app.add_subcommand("dump-config", "print the config with defaults filled in");
    for (auto* s : {prepare, train, gen, eval, detect, all, dump}) add_common(s);
    eval->add_option("--profiles", o.profiles_dir, "directory of profile sets (default: <out>/profiles)");

    CLI11_PARSE(app, argc, argv);

    try {
        auto ctx = make_context(o);
        if (*dump) {
            std::cout << aush::dump_config(ctx.config);
        } else if (*prepare) {
            aush::stage_prepare(ctx);
        } else if (*train) {
            aush::stage_train_victims(ctx);
        } else if (*gen) {
            aush::stage_generate_attacks(ctx);
        } else if (*eval) {
            aush::stage_evaluate(ctx, o.profiles_dir);
        } else if (*detect) {
            aush::stage_detect(ctx);
        } else if (*all) {
            aush::run_all(ctx);
        }
    } catch (const aush::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
