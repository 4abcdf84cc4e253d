#include "wdyn/cli.hpp"

#include "wdyn/checkpoint_store.hpp"
#include "wdyn/covariance_probe.hpp"
#include "wdyn/detector.hpp"
#include "wdyn/dynamics_stats.hpp"
#include "wdyn/error.hpp"
#include "wdyn/io_util.hpp"
#include "wdyn/parallel.hpp"
#include "wdyn/perplexity.hpp"
#include "wdyn/svg.hpp"
#include "wdyn/synth.hpp"
#include "wdyn/toy_lm.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <chrono>
#include <iostream>
#include <sstream>
#include <thread>

namespace wdyn::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kDefaultSeed = 42;

struct Options {
    std::string series;
    std::string tensor;
    std::size_t stride = 1;
    std::size_t bins = 100;
    std::string range = "quantile";
    std::string config;
    std::uint64_t seed = kDefaultSeed;
    std::string out;
    std::size_t limit = ppl::kDefaultLimit;
    std::size_t unmask_limit = 0;
    std::string tolerances = "0.1,0.3,0.5,0.7,0.9";
    std::size_t batch = 0;
    std::size_t threads = 0;
    std::string corpus;
    std::string traces;
    std::string demean = "step";
    int steps = 0;
    int checkpoint_every = 0;
    std::int64_t spacing = 1;
    detect::DetectorConfig detector;
};

// Bookkeeping for manifest.json.
struct Run {
    std::string command;
    std::vector<std::string> argv;
    ordered_json config = ordered_json::object();
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
    std::uint64_t seed = kDefaultSeed;
};

using FileSet = std::vector<std::pair<fs::path, std::string>>;

void ensure_parent(const fs::path& path) {
    const fs::path parent = path.parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        fs::create_directories(parent, ec);
        if (ec) {
            throw DataError("cannot create directory " + parent.string() + ": " + ec.message());
        }
    }
}

// Writes every file only after all of them have been computed.
void commit(Run& run, const FileSet& files) {
    for (const auto& [path, text] : files) {
        ensure_parent(path);
        io::write_file_atomic(path, text);
        run.outputs.push_back(path);
    }
}

void write_manifest(const Run& run, const fs::path& path, double seconds) {
    ordered_json j;
    j["command"] = run.command;
    j["argv"] = run.argv;
    j["config"] = run.config;
    std::vector<std::string> in;
    for (const auto& p : run.inputs) {
        in.push_back(p.string());
    }
    std::vector<std::string> out;
    for (const auto& p : run.outputs) {
        out.push_back(p.string());
    }
    j["inputs"] = in;
    j["outputs"] = out;
    j["seed"] = run.seed;
    j["version"] = kVersion;
    j["wall_clock_seconds"] = seconds;
    ensure_parent(path);
    io::write_file_atomic(path, j.dump(2) + "\n");
}

fs::path file_manifest(const fs::path& out) {
    return fs::path(out.string() + ".manifest.json");
}

fs::path sibling(const fs::path& out, const char* name) {
    return out.parent_path() / name;
}

std::vector<double> parse_tolerances(const std::string& text) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find(',', pos);
        if (end == std::string::npos) {
            end = text.size();
        }
        const std::string item = text.substr(pos, end - pos);
        double v = 0.0;
        const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || res.ec != std::errc() || res.ptr != item.data() + item.size()) {
            throw UsageError("invalid tolerance '" + item + "' in --tolerances");
        }
        out.push_back(v);
        pos = end + 1;
    }
    return out;
}

stats::RangePolicy parse_range(const std::string& name) {
    if (name == "quantile") {
        return {};
    }
    if (name == "minmax") {
        return stats::RangePolicy::minmax();
    }
    throw UsageError("--range must be 'quantile' or 'minmax'");
}

stats::MsdDemeaning parse_demean(const std::string& name) {
    if (name == "step") {
        return stats::MsdDemeaning::per_step;
    }
    if (name == "step-and-particle") {
        return stats::MsdDemeaning::per_step_and_particle;
    }
    throw UsageError("--demean must be 'step' or 'step-and-particle'");
}

std::string pick_tensor(const store::CheckpointSeries& series, const std::string& requested) {
    if (!requested.empty()) {
        series.tensor(requested);
        return requested;
    }
    for (const char* name : {"W_U", synth::kSimTensor}) {
        if (series.tensors.contains(name)) {
            return name;
        }
    }
    if (series.tensors.size() == 1) {
        return series.tensors.begin()->first;
    }
    throw UsageError("--tensor is required: the series holds several tensors");
}

store::CheckpointSeries open_input_series(Run& run, const Options& o) {
    if (o.series.empty()) {
        throw UsageError("--series is required");
    }
    run.inputs.emplace_back(o.series);
    run.config["series"] = o.series;
    return store::open_series(o.series);
}

std::string read_input(Run& run, const std::string& path, const char* what) {
    if (path.empty()) {
        throw UsageError(std::string("--") + what + " is required");
    }
    if (!fs::is_regular_file(path)) {
        throw DataError(std::string(what) + " file not found: " + path);
    }
    run.inputs.emplace_back(path);
    return io::read_file(path);
}

fs::path require_out(const Options& o) {
    if (o.out.empty()) {
        throw UsageError("--out is required");
    }
    return o.out;
}

void record_detector(Run& run, const detect::DetectorConfig& d) {
    run.config["theta"] = d.drop_fraction;
    run.config["persistence"] = d.persistence;
    run.config["window"] = d.stationarity_window;
    run.config["eps"] = d.stationarity_eps;
}

std::vector<lm::TokenSequence> load_sentences(Run& run, const Options& o, const fs::path& series_dir,
                                              const lm::ModelConfig& cfg) {
    std::string path = o.corpus;
    if (path.empty()) {
        path = (series_dir / "corpus.txt").string();
    }
    run.config["corpus"] = path;
    auto sentences = ppl::split_sentences(read_input(run, path, "corpus"), static_cast<std::size_t>(cfg.n_ctx));
    if (sentences.empty()) {
        throw DataError("corpus " + path + " holds no sentence of two or more bytes");
    }
    return sentences;
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_simulate(Run& run, const Options& o, bool seed_given) {
    const fs::path out = require_out(o);
    const std::string text = read_input(run, o.config, "config");
    synth::SdeConfig cfg = synth::parse_sde_config(text);
    if (seed_given) {
        cfg.seed = o.seed;
    } else {
        const auto j = nlohmann::json::parse(text);
        cfg.seed = j.contains("seed") ? cfg.seed : kDefaultSeed;
    }
    if (o.spacing < 1) {
        throw UsageError("--spacing must be >= 1");
    }
    run.seed = cfg.seed;
    run.config["sde"] = ordered_json::parse(synth::sde_config_json(cfg));
    run.config["spacing"] = o.spacing;

    const synth::Simulation sim = synth::simulate(cfg);
    const store::CheckpointSeries series = synth::export_series(sim.slice, o.spacing, out);
    for (const auto& e : series.entries) {
        run.outputs.push_back(e.path);
    }
    commit(run, {{out / "sde_config.json", synth::sde_config_json(cfg)},
                 {out / "ground_truth.json", synth::ground_truth_json(sim.truth)}});
}

void cmd_train(Run& run, const Options& o, bool seed_given) {
    const fs::path out = require_out(o);
    const std::string text = read_input(run, o.config, "config");
    lm::ModelConfig cfg = lm::parse_model_config(text);
    lm::TrainOptions train;
    try {
        const auto j = nlohmann::json::parse(text);
        train.steps = j.value("steps", train.steps);
        train.checkpoint_every = j.value("checkpoint_every", train.checkpoint_every);
        train.batch = j.value("batch", train.batch);
        train.lr = j.value("lr", train.lr);
        if (!seed_given && !j.contains("seed")) {
            cfg.seed = kDefaultSeed;
        }
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("invalid training config: ") + e.what());
    }
    if (seed_given) {
        cfg.seed = o.seed;
    }
    if (o.steps > 0) {
        train.steps = o.steps;
    }
    if (o.checkpoint_every > 0) {
        train.checkpoint_every = o.checkpoint_every;
    }
    if (o.batch > 0) {
        train.batch = static_cast<int>(o.batch);
    }
    const std::string corpus = read_input(run, o.corpus, "corpus");
    run.seed = cfg.seed;
    run.config["model"] = ordered_json::parse(lm::model_config_json(cfg));
    run.config["steps"] = train.steps;
    run.config["checkpoint_every"] = train.checkpoint_every;
    run.config["batch"] = train.batch;
    run.config["lr"] = train.lr;

    const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(corpus.data()), corpus.size());
    const lm::TrainResult result = lm::train(cfg, bytes, train, out);
    for (const auto& e : result.series.entries) {
        run.outputs.push_back(e.path);
    }
    run.outputs.push_back(out / lm::kConfigFile);
    std::ostringstream losses;
    losses << "step,loss\n";
    for (std::size_t i = 0; i < result.losses.size(); ++i) {
        losses << i + 1 << ',' << io::format_number(result.losses[i]) << '\n';
    }
    commit(run, {{out / "corpus.txt", corpus}, {out / "losses.csv", losses.str()}});
}

void cmd_msd(Run& run, const Options& o) {
    const fs::path out = require_out(o);
    const auto series = open_input_series(run, o);
    const std::string tensor = pick_tensor(series, o.tensor);
    const auto demean = parse_demean(o.demean);
    run.config["tensor"] = tensor;
    run.config["stride"] = o.stride;
    run.config["demean"] = o.demean;
    const auto slice = store::flatten_series(series, tensor, o.stride);
    commit(run, {{out, stats::msd_csv(stats::msd(slice, demean))}});
}

void cmd_density(Run& run, const Options& o) {
    const fs::path out = require_out(o);
    const auto series = open_input_series(run, o);
    const std::string tensor = pick_tensor(series, o.tensor);
    const auto policy = parse_range(o.range);
    run.config["tensor"] = tensor;
    run.config["stride"] = o.stride;
    run.config["bins"] = o.bins;
    run.config["range"] = policy.describe();
    const auto slice = store::flatten_series(series, tensor, o.stride);
    const auto movie = stats::density_movie(slice, o.bins, policy);
    std::vector<stats::BimodalityReport> reports;
    for (const auto& h : movie.histograms) {
        reports.push_back(stats::bimodality(h));
    }
    commit(run, {{out, stats::density_csv(movie)},
                 {sibling(out, "bimodality.csv"), stats::bimodality_csv(movie.steps, reports)}});
}

void cmd_detect(Run& run, const Options& o) {
    const fs::path out = require_out(o);
    o.detector.validate();
    const auto series = open_input_series(run, o);
    const std::string tensor = pick_tensor(series, o.tensor);
    const auto policy = parse_range(o.range);
    run.config["tensor"] = tensor;
    run.config["stride"] = o.stride;
    run.config["bins"] = o.bins;
    run.config["range"] = policy.describe();
    record_detector(run, o.detector);
    const auto slice = store::flatten_series(series, tensor, o.stride);
    const auto curve = stats::msd(slice);
    const auto movie = stats::density_movie(slice, o.bins, policy);
    const auto signal = detect::early_stop(curve, movie, o.detector);
    commit(run, {{out, detect::report_json(signal, o.detector)}});
}

std::pair<std::string, std::string> rank_outputs(const store::CheckpointSeries& series, const std::string& tensor,
                                                 std::size_t batch, const std::vector<double>& tolerances,
                                                 std::uint64_t seed, probe::RankCurve* keep) {
    const probe::RankCurve curve = probe::probe_rank(series, tensor, batch, tolerances, seed);
    std::string derivative = probe::rank_derivative_csv({});
    if (curve.steps.size() >= 2) {
        derivative = probe::rank_derivative_csv(probe::rank_series_derivative(curve));
    }
    std::string rank = probe::rank_csv(curve);
    if (keep != nullptr) {
        *keep = curve;
    }
    return {std::move(rank), std::move(derivative)};
}

void cmd_probe(Run& run, const Options& o) {
    const fs::path out = require_out(o);
    const auto series = open_input_series(run, o);
    const std::string tensor = pick_tensor(series, o.tensor);
    const auto tolerances = parse_tolerances(o.tolerances);
    const std::size_t batch = o.batch > 0 ? o.batch : 64;
    run.seed = o.seed;
    run.config["tensor"] = tensor;
    run.config["batch"] = batch;
    run.config["tolerances"] = tolerances;
    auto [rank, derivative] = rank_outputs(series, tensor, batch, tolerances, o.seed, nullptr);
    commit(run, {{out, rank}, {sibling(out, "rank_derivative.csv"), derivative}});
}

void cmd_ppl(Run& run, const Options& o) {
    const fs::path out = require_out(o);
    const auto series = open_input_series(run, o);
    const auto cfg = lm::load_model_config(series.dir);
    const auto sentences = load_sentences(run, o, series.dir, cfg);
    run.config["limit"] = o.limit;
    const auto curve = ppl::ppl_forward_dataset(series, sentences, o.limit);
    commit(run, {{out, ppl::ppl_csv({curve})}});
}

void cmd_unmask(Run& run, const Options& o) {
    const fs::path out = require_out(o);
    const auto series = open_input_series(run, o);
    const auto cfg = lm::load_model_config(series.dir);
    const auto sentences = load_sentences(run, o, series.dir, cfg);
    run.config["limit"] = o.limit;
    const auto result = ppl::causal_unmask_eval(series, sentences, o.limit);
    FileSet files{{out, ppl::ppl_csv({result.curve})}};
    if (!o.traces.empty()) {
        files.emplace_back(o.traces, ppl::traces_jsonl(result.traces));
    }
    commit(run, files);
}

void cmd_report(Run& run, const Options& o) {
    const fs::path out = require_out(o);
    o.detector.validate();
    const auto series = open_input_series(run, o);
    const std::string tensor = pick_tensor(series, o.tensor);
    const auto policy = parse_range(o.range);
    const auto tolerances = parse_tolerances(o.tolerances);
    const std::size_t batch = o.batch > 0 ? o.batch : 64;
    run.seed = o.seed;
    run.config["tensor"] = tensor;
    run.config["stride"] = o.stride;
    run.config["bins"] = o.bins;
    run.config["range"] = policy.describe();
    run.config["batch"] = batch;
    run.config["tolerances"] = tolerances;
    record_detector(run, o.detector);

    const auto slice = store::flatten_series(series, tensor, o.stride);
    const auto curve = stats::msd(slice);
    const auto movie = stats::density_movie(slice, o.bins, policy);
    std::vector<stats::BimodalityReport> reports;
    for (const auto& h : movie.histograms) {
        reports.push_back(stats::bimodality(h));
    }
    const auto signal = detect::early_stop(curve, movie, o.detector);

    FileSet files{{out / "msd.csv", stats::msd_csv(curve)},
                  {out / "density.csv", stats::density_csv(movie)},
                  {out / "bimodality.csv", stats::bimodality_csv(movie.steps, reports)},
                  {out / "report.json", detect::report_json(signal, o.detector)}};

    svg::ReportPlots plots;
    plots.msd = &curve;
    plots.peak_step = signal.peak_step;
    plots.density = &movie;

    probe::RankCurve rank_curve;
    if (series.tensor(tensor).shape.size() == 2) {
        auto [rank, derivative] = rank_outputs(series, tensor, batch, tolerances, o.seed, &rank_curve);
        files.emplace_back(out / "rank.csv", std::move(rank));
        files.emplace_back(out / "rank_derivative.csv", std::move(derivative));
        plots.rank = &rank_curve;
    } else {
        files.emplace_back(out / "rank.csv", probe::rank_csv({}));
        files.emplace_back(out / "rank_derivative.csv", probe::rank_derivative_csv({}));
    }

    std::vector<ppl::PerplexityCurve> ppl_curves;
    const bool has_model = fs::exists(series.dir / lm::kConfigFile);
    const bool has_corpus = !o.corpus.empty() || fs::exists(series.dir / "corpus.txt");
    if (has_model && has_corpus) {
        const auto cfg = lm::load_model_config(series.dir);
        const auto sentences = load_sentences(run, o, series.dir, cfg);
        run.config["limit"] = o.limit;
        ppl_curves.push_back(ppl::ppl_forward_dataset(series, sentences, o.limit));
        if (o.unmask_limit > 0) {
            run.config["unmask_limit"] = o.unmask_limit;
            ppl_curves.push_back(ppl::causal_unmask_eval(series, sentences, o.unmask_limit).curve);
        }
        files.emplace_back(out / "ppl.csv", ppl::ppl_csv(ppl_curves));
        for (const auto& c : ppl_curves) {
            plots.perplexity.push_back(&c);
        }
    }
    files.emplace_back(out / "plots.svg", svg::render(plots));
    commit(run, files);
}

// ---------------------------------------------------------------------------

void add_series_options(CLI::App* sub, Options& o) {
    sub->add_option("--series", o.series, "checkpoint series directory");
    sub->add_option("--tensor", o.tensor, "tensor name (default: W_U, else W_SIM)");
    sub->add_option("--stride", o.stride, "take every N-th element")->check(CLI::PositiveNumber);
}

void add_histogram_options(CLI::App* sub, Options& o) {
    sub->add_option("--bins", o.bins, "histogram bins")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20));
    sub->add_option("--range", o.range, "shared bin range: quantile | minmax");
}

void add_detector_options(CLI::App* sub, Options& o) {
    sub->add_option("--theta", o.detector.drop_fraction, "MSD drop fraction");
    sub->add_option("--persistence", o.detector.persistence, "values below theta * peak");
    sub->add_option("--window", o.detector.stationarity_window, "stationarity window (transitions)");
    sub->add_option("--eps", o.detector.stationarity_eps, "W1 threshold");
}

} // namespace

int dispatch(const std::vector<std::string>& args) {
    Options o;
    CLI::App app{"Weight-checkpoint dynamics diagnostics", "wdyn"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", kVersion);
    app.add_option("--threads", o.threads, "worker threads (default: hardware concurrency)");

    auto out_opt = [&](CLI::App* sub, const char* what) { sub->add_option("--out", o.out, what); };

    auto* simulate = app.add_subcommand("simulate", "simulate an SDE ensemble into a checkpoint series");
    simulate->add_option("--config", o.config, "SDE config JSON");
    simulate->add_option("--spacing", o.spacing, "training steps between checkpoints");
    simulate->add_option("--seed", o.seed, "random seed");
    out_opt(simulate, "output series directory");

    auto* train = app.add_subcommand("train-toy", "train the toy transformer on a byte corpus");
    train->add_option("--config", o.config, "model config JSON");
    train->add_option("--corpus", o.corpus, "training text");
    train->add_option("--steps", o.steps, "optimizer steps");
    train->add_option("--checkpoint-every", o.checkpoint_every, "steps between checkpoints");
    train->add_option("--batch", o.batch, "sequences per step");
    train->add_option("--seed", o.seed, "random seed");
    out_opt(train, "output series directory");

    auto* msd = app.add_subcommand("msd", "mean square displacement curve");
    add_series_options(msd, o);
    msd->add_option("--demean", o.demean, "step | step-and-particle");
    out_opt(msd, "msd.csv path");

    auto* density = app.add_subcommand("density", "density movie and bimodality");
    add_series_options(density, o);
    add_histogram_options(density, o);
    out_opt(density, "density.csv path (bimodality.csv is written alongside)");

    auto* detect = app.add_subcommand("detect", "early-stop verdict");
    add_series_options(detect, o);
    add_histogram_options(detect, o);
    add_detector_options(detect, o);
    out_opt(detect, "report.json path");

    auto* probe = app.add_subcommand("probe-rank", "probe rank of a (d, v) tensor across checkpoints");
    add_series_options(probe, o);
    probe->add_option("--batch", o.batch, "probe batch size (default 64)");
    probe->add_option("--tolerances", o.tolerances, "comma-separated tolerances in (0, 1]");
    probe->add_option("--seed", o.seed, "probe seed");
    out_opt(probe, "rank.csv path (rank_derivative.csv is written alongside)");

    auto* ppl_cmd = app.add_subcommand("ppl", "forward-protocol perplexity per checkpoint");
    ppl_cmd->add_option("--series", o.series, "toy-model series directory");
    ppl_cmd->add_option("--corpus", o.corpus, "evaluation text, one sentence per line (default: series corpus.txt)");
    ppl_cmd->add_option("--limit", o.limit, "first N sentences")->check(CLI::PositiveNumber);
    out_opt(ppl_cmd, "ppl.csv path");

    auto* unmask = app.add_subcommand("unmask", "causal-unmasking perplexity per checkpoint");
    unmask->add_option("--series", o.series, "toy-model series directory");
    unmask->add_option("--corpus", o.corpus, "evaluation text, one sentence per line (default: series corpus.txt)");
    unmask->add_option("--limit", o.limit, "first N sentences")->check(CLI::PositiveNumber);
    unmask->add_option("--traces", o.traces, "write per-sentence traces as JSON lines");
    out_opt(unmask, "ppl.csv path");

    auto* report = app.add_subcommand("report", "all diagnostics and plots for one series");
    add_series_options(report, o);
    add_histogram_options(report, o);
    add_detector_options(report, o);
    report->add_option("--batch", o.batch, "probe batch size (default 64)");
    report->add_option("--tolerances", o.tolerances, "comma-separated tolerances in (0, 1]");
    report->add_option("--seed", o.seed, "probe seed");
    report->add_option("--corpus", o.corpus, "evaluation text (default: series corpus.txt)");
    report->add_option("--limit", o.limit, "first N sentences")->check(CLI::PositiveNumber);
    report->add_option("--unmask-limit", o.unmask_limit, "also run causal unmasking on N sentences");
    out_opt(report, "output directory");

    std::vector<std::string> argv_store{"wdyn"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) {
        argv.push_back(a.data());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    CLI::App* sub = app.get_subcommands().front();
    Run run;
    run.command = sub->get_name();
    run.argv = args;
    const bool seed_given = sub->get_option_no_throw("--seed") != nullptr && sub->count("--seed") > 0;

    const auto started = std::chrono::steady_clock::now();
    try {
        set_worker_count(o.threads > 0 ? o.threads : std::max(1u, std::thread::hardware_concurrency()));
        fs::path manifest;
        const std::string& name = run.command;
        if (name == "simulate") {
            cmd_simulate(run, o, seed_given);
            manifest = fs::path(o.out) / "manifest.json";
        } else if (name == "train-toy") {
            cmd_train(run, o, seed_given);
            manifest = fs::path(o.out) / "manifest.json";
        } else if (name == "report") {
            cmd_report(run, o);
            manifest = fs::path(o.out) / "manifest.json";
        } else {
            if (name == "msd") {
                cmd_msd(run, o);
            } else if (name == "density") {
                cmd_density(run, o);
            } else if (name == "detect") {
                cmd_detect(run, o);
            } else if (name == "probe-rank") {
                cmd_probe(run, o);
            } else if (name == "ppl") {
                cmd_ppl(run, o);
            } else {
                cmd_unmask(run, o);
            }
            manifest = file_manifest(o.out);
        }
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
        write_manifest(run, manifest, elapsed.count());
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << sub->help();
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace wdyn::cli
