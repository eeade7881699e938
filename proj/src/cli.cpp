#include "evseq/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>

#include "evseq/error.hpp"
#include "evseq/eval.hpp"
#include "evseq/event.hpp"
#include "evseq/frames.hpp"
#include "evseq/neural.hpp"
#include "evseq/seqslam.hpp"
#include "evseq/synth.hpp"

namespace evseq {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GlobalOptions {
    std::uint64_t seed = 1;
    int threads = 1;
    bool verbose = false;
};

struct FramesOptions {
    std::string in;
    std::string out;
    double window_ms = 10.0;
    int size = 16;
    int patch = 8;
    bool no_normalize = false;
    bool absolute = false;
    double clip = 0.0;
    bool sort = false;
    int sensor_width = EventStream::kDefaultWidth;
    int sensor_height = EventStream::kDefaultHeight;
};

struct MatchOptions {
    std::string ref;
    std::string query;
    std::string out;
    std::string ref_speed;
    std::string query_speed;
    std::string pgm;
    std::string pgm_normalized;
    std::string matrix_csv;
    SeqParams params;
};

struct NeuralTrainOptions {
    std::string in;
    std::string out;
    std::string winners;
    NetConfig config;
    int patch = 8;
    bool no_normalize = false;
};

struct NeuralTestOptions {
    std::string net;
    std::string in;
    std::string out;
    std::string activations;
    std::string pgm;
    int patch = 8;
    bool no_normalize = false;
};

struct SynthEventsOptions {
    std::string out;
    double duration_ms = 1000.0;
    double speed = 300.0;
    std::string speed_profile;
    std::string profile_out;
    TextureParams texture;
};

struct SynthImagesOptions {
    std::string out_train;
    std::string out_test;
    std::string truth;
    int places = 200;
    int width = 32;
    int height = 24;
    double noise = 0.0;
    double brightness = 0.0;
};

struct SynthTruthOptions {
    std::string ref_events;
    std::string query_events;
    std::string ref_profile;
    std::string query_profile;
    std::string out;
    double window_ms = 10.0;
    int sensor_width = EventStream::kDefaultWidth;
    int sensor_height = EventStream::kDefaultHeight;
};

struct EvalOptions {
    std::string matches;
    std::string traverse;
    std::string winners;
    std::string truth;
    std::string out;
    int tolerance = 5;
};

std::uint32_t window_us_from_ms(double ms) {
    const double us = ms * 1000.0;
    if (!(us >= 1.0) || us > 4.0e9 || std::abs(us - std::round(us)) > 1e-6) {
        throw UsageError("--window-ms must be a positive whole number of microseconds");
    }
    return static_cast<std::uint32_t>(std::llround(us));
}

void run_frames(const FramesOptions& o, const GlobalOptions& g, std::ostream& out) {
    FrameParams params;
    params.window_us = window_us_from_ms(o.window_ms);
    params.out_width = o.size;
    params.out_height = o.size;
    params.patch_size = o.patch;
    params.normalize = !o.no_normalize;
    AccumulateOptions acc;
    acc.absolute = o.absolute;
    acc.clip = o.clip;
    acc.threads = g.threads;

    const EventStream stream = read_event_file(o.in, o.sensor_width, o.sensor_height,
                                               ParseOptions{o.sort});
    const FrameSequence frames = build_frames(stream, params, acc);
    write_frame_file(frames, o.out);
    out << "events=" << stream.size() << " frames=" << frames.size()
        << " origin_us=" << frames.origin_us << '\n';
}

std::vector<double> speeds_for(const std::string& path, const FrameSequence& frames) {
    const SpeedProfile profile = read_speed_profile(path);
    return frame_speeds(profile, FrameTiming::of(frames));
}

void run_match(const MatchOptions& o, const GlobalOptions& g, std::ostream& out) {
    if (o.ref_speed.empty() != o.query_speed.empty()) {
        throw UsageError("--ref-speed and --query-speed must be given together");
    }
    o.params.validate();
    const FrameSequence ref = read_frame_file(o.ref);
    const FrameSequence query = read_frame_file(o.query);
    const DifferenceMatrix raw = difference_matrix(ref, query, g.threads);
    const DifferenceMatrix dn = contrast_normalize(raw, o.params.contrast_window, g.threads);

    SpeedPrior prior = SpeedPrior::uniform(ref.size(), query.size());
    if (!o.ref_speed.empty()) {
        prior.ref_speed = speeds_for(o.ref_speed, ref);
        prior.query_speed = speeds_for(o.query_speed, query);
    }
    const auto results = sequence_match(dn, o.params, prior, g.threads);
    write_match_file(results, o.out);
    if (!o.pgm.empty()) export_pgm(raw, o.pgm);
    if (!o.pgm_normalized.empty()) export_pgm(dn, o.pgm_normalized);
    if (!o.matrix_csv.empty()) write_matrix_csv(raw, o.matrix_csv);

    std::size_t accepted = 0;
    for (const auto& r : results) accepted += r.accepted ? 1 : 0;
    out << "ref_frames=" << ref.size() << " query_frames=" << query.size()
        << " matched_queries=" << results.size() << " accepted=" << accepted << '\n';
}

FrameSequence network_input(const std::string& path, int patch, bool no_normalize) {
    FrameSequence frames = read_frame_file(path);
    return no_normalize ? frames : normalize_for_network(frames, patch);
}

void run_neural_train(NeuralTrainOptions o, const GlobalOptions& g, std::ostream& out) {
    o.config.seed = g.seed;
    const FrameSequence images = network_input(o.in, o.patch, o.no_normalize);
    const Network net = init_network(o.config);
    const TrainResult trained = train_traverse(net, images);
    save_network(trained.network, o.out);
    if (!o.winners.empty()) write_winners_csv(trained.winners, o.winners);
    out << "images=" << images.size() << " increments=" << trained.increments << '\n';
}

void run_neural_test(const NeuralTestOptions& o, std::ostream& out) {
    const Network net = load_network(o.net);
    const FrameSequence images = network_input(o.in, o.patch, o.no_normalize);
    const TraverseResult result = test_traverse(net, images);
    write_traverse_csv(result, o.out);
    if (!o.activations.empty()) write_activation_csv(result, o.activations);
    if (!o.pgm.empty()) {
        // Rows are output units, columns are steps.
        const std::size_t n3 = static_cast<std::size_t>(net.config().n3);
        const std::size_t steps = result.activations.size();
        std::vector<double> m(n3 * steps);
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t i = 0; i < n3; ++i) m[i * steps + t] = result.activations[t][i];
        export_pgm(m, n3, steps, o.pgm);
    }
    out << "steps=" << result.hypotheses.size() << '\n';
}

void run_synth_events(const SynthEventsOptions& o, const GlobalOptions& g, std::ostream& out) {
    const double us = o.duration_ms * 1000.0;
    if (!(us >= 0.0) || std::abs(us - std::round(us)) > 1e-6) {
        throw UsageError("--duration-ms must be a non-negative whole number of microseconds");
    }
    const auto duration_us = static_cast<std::int64_t>(std::llround(us));
    SpeedProfile profile;
    if (!o.speed_profile.empty()) {
        profile = read_speed_profile(o.speed_profile);
    } else {
        if (!(o.speed >= 0.0)) throw UsageError("--speed must be >= 0");
        profile = SpeedProfile::constant(o.speed, (duration_us + 999) / 1000);
    }
    const EventStream stream = synth_event_stream(g.seed, duration_us, profile, o.texture);
    write_event_file(stream, o.out);
    if (!o.profile_out.empty()) write_speed_profile(profile, o.profile_out);
    out << "events=" << stream.size() << " offset_px=" << profile.offset_at(us) << '\n';
}

void run_synth_images(const SynthImagesOptions& o, const GlobalOptions& g, std::ostream& out) {
    const ImageTraverse t =
        synth_image_traverse(g.seed, o.places, o.width, o.height, o.noise, o.brightness);
    write_frame_file(t.train, o.out_train);
    write_frame_file(t.test, o.out_test);
    write_truth_csv(t.truth, o.truth);
    out << "places=" << t.train.size() << '\n';
}

void run_synth_truth(const SynthTruthOptions& o, std::ostream& out) {
    const std::uint32_t window = window_us_from_ms(o.window_ms);
    const EventStream ref = read_event_file(o.ref_events, o.sensor_width, o.sensor_height);
    const EventStream query = read_event_file(o.query_events, o.sensor_width, o.sensor_height);
    const auto ref_offsets =
        frame_offsets(read_speed_profile(o.ref_profile), FrameTiming::of(ref, window));
    const auto query_offsets =
        frame_offsets(read_speed_profile(o.query_profile), FrameTiming::of(query, window));
    const GroundTruth truth = truth_from_offsets(ref_offsets, query_offsets, 0);
    write_truth_csv(truth, o.out);
    out << "ref_frames=" << ref_offsets.size() << " query_frames=" << query_offsets.size() << '\n';
}

void run_eval(const EvalOptions& o, std::ostream& out) {
    if (o.matches.empty() == o.traverse.empty()) {
        throw UsageError("eval needs exactly one of --matches or --traverse");
    }
    if (!o.traverse.empty() && o.winners.empty()) {
        throw UsageError("--traverse requires --winners");
    }
    const GroundTruth truth = read_truth_csv(o.truth, o.tolerance);
    std::ofstream file;
    if (!o.out.empty()) {
        file.open(o.out, std::ios::binary);
        if (!file) throw IoError("cannot open " + o.out + " for writing");
    }
    if (!o.matches.empty()) {
        const auto results = read_match_file(o.matches);
        const EvalReport report = score_matches(results, truth);
        write_report(report, out);
        if (file.is_open()) write_report(report, file);
    } else {
        const auto hypotheses = read_winner_column(o.traverse);
        const auto winners = read_winner_column(o.winners);
        const double accuracy = score_hypotheses(hypotheses, winners, truth);
        out << "steps=" << hypotheses.size() << "\naccuracy=" << accuracy << '\n';
        if (file.is_open()) file << "steps=" << hypotheses.size() << "\naccuracy=" << accuracy << '\n';
    }
    if (file.is_open() && !file) throw IoError("write failure on " + o.out);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Event-camera place recognition: sequence matching and a neural sequence memory",
                 "evseq"};
    app.set_config("--config", "", "key=value configuration file (flags take precedence)");
    app.require_subcommand(1);
    app.fallthrough();

    // Checked after parsing so unknown flags are reported before missing ones.
    std::vector<std::pair<CLI::App*, CLI::Option*>> required;
    auto req = [&required](CLI::App* sub, CLI::Option* opt) {
        opt->description(opt->get_description() + " (required)");
        required.emplace_back(sub, opt);
        return opt;
    };

    GlobalOptions g;
    app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
    app.add_option("--threads", g.threads, "Upper bound on worker threads")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_flag("--verbose", g.verbose, "Extra progress output");

    FramesOptions fo;
    auto* frames = app.add_subcommand("frames", "Accumulate events into an EVFR frame file");
    req(frames, frames->add_option("--in", fo.in, "Event CSV (t_us,x,y,p)"));
    req(frames, frames->add_option("--out", fo.out, "Output frame file"));
    frames->add_option("--window-ms", fo.window_ms, "Accumulation window")->capture_default_str();
    frames->add_option("--size", fo.size, "Output frame edge after downsampling")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    frames->add_option("--patch", fo.patch, "Patch-normalization patch size")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    frames->add_flag("--no-normalize", fo.no_normalize, "Skip patch normalization");
    frames->add_flag("--absolute", fo.absolute, "Accumulate |polarity|");
    frames->add_option("--clip", fo.clip, "Clamp accumulated values to [-clip, clip]; 0 = off")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    frames->add_flag("--sort", fo.sort, "Sort events by time before validation");
    frames->add_option("--sensor-width", fo.sensor_width)->check(CLI::PositiveNumber)->capture_default_str();
    frames->add_option("--sensor-height", fo.sensor_height)->check(CLI::PositiveNumber)->capture_default_str();

    MatchOptions mo;
    auto* match = app.add_subcommand("match", "Sequence-match a query frame file against a reference");
    req(match, match->add_option("--ref", mo.ref, "Reference frame file"));
    req(match, match->add_option("--query", mo.query, "Query frame file"));
    req(match, match->add_option("--out", mo.out, "Match CSV"));
    match->add_option("--ref-speed", mo.ref_speed, "Reference speed profile CSV (ms,px_per_s)");
    match->add_option("--query-speed", mo.query_speed, "Query speed profile CSV (ms,px_per_s)");
    match->add_option("--pgm", mo.pgm, "Write the raw difference matrix as PGM");
    match->add_option("--pgm-normalized", mo.pgm_normalized, "Write the normalized matrix as PGM");
    match->add_option("--matrix-csv", mo.matrix_csv, "Write the raw difference matrix as CSV");
    match->add_option("--ds", mo.params.ds, "Sequence length in frames")->capture_default_str();
    match->add_option("--v-step", mo.params.v_step, "Slope grid step")->capture_default_str();
    match->add_option("--band", mo.params.prior_band, "Slope band half-width around the prior")
        ->capture_default_str();
    match->add_option("--contrast-window", mo.params.contrast_window, "Rows per contrast window")
        ->capture_default_str();
    match->add_option("--accept-gap", mo.params.accept_gap, "Acceptance gap in score std units")
        ->capture_default_str();
    match->add_option("--exclude", mo.params.exclude_width, "Rows excluded around the best match")
        ->capture_default_str();

    auto* neural = app.add_subcommand("neural", "Neural sequence memory");
    neural->require_subcommand(1);

    NeuralTrainOptions nto;
    auto* ntrain = neural->add_subcommand("train", "Learn recurrent weights from a traverse");
    req(ntrain, ntrain->add_option("--in", nto.in, "Training frame file"));
    req(ntrain, ntrain->add_option("--out", nto.out, "Checkpoint file"));
    ntrain->add_option("--winners", nto.winners, "Write training winners CSV");
    ntrain->add_option("--n1", nto.config.n1, "Input units")->capture_default_str();
    ntrain->add_option("--n2", nto.config.n2, "Sparsification units")->capture_default_str();
    ntrain->add_option("--n3", nto.config.n3, "Output units")->capture_default_str();
    ntrain->add_option("--density", nto.config.density, "Feedforward connection density")
        ->capture_default_str();
    ntrain->add_option("--k", nto.config.k, "Active sparsification units")->capture_default_str();
    ntrain->add_option("--beta", nto.config.beta, "Recurrent mixing weight")->capture_default_str();
    ntrain->add_option("--eta", nto.config.eta, "Recurrent learning increment")->capture_default_str();
    ntrain->add_option("--w-max", nto.config.w_max, "Recurrent weight cap")->capture_default_str();
    ntrain->add_option("--patch", nto.patch, "Patch-normalization patch size")->capture_default_str();
    ntrain->add_flag("--no-normalize", nto.no_normalize, "Inputs are already normalized");

    NeuralTestOptions nte;
    auto* ntest = neural->add_subcommand("test", "Recall a traverse with a trained network");
    req(ntest, ntest->add_option("--net", nte.net, "Checkpoint file"));
    req(ntest, ntest->add_option("--in", nte.in, "Test frame file"));
    req(ntest, ntest->add_option("--out", nte.out, "Traverse CSV (step,winner,degenerate)"));
    ntest->add_option("--activations", nte.activations, "Full activation dump CSV");
    ntest->add_option("--pgm", nte.pgm, "Activation matrix as PGM");
    ntest->add_option("--patch", nte.patch, "Patch-normalization patch size")->capture_default_str();
    ntest->add_flag("--no-normalize", nte.no_normalize, "Inputs are already normalized");

    auto* synth = app.add_subcommand("synth", "Synthetic data generators");
    synth->require_subcommand(1);

    SynthEventsOptions seo;
    auto* sevents = synth->add_subcommand("events", "Scrolling-texture event stream");
    req(sevents, sevents->add_option("--out", seo.out, "Event CSV"));
    sevents->add_option("--duration-ms", seo.duration_ms)->capture_default_str();
    sevents->add_option("--speed", seo.speed, "Constant speed in px/s")->capture_default_str();
    sevents->add_option("--speed-profile", seo.speed_profile, "Speed CSV (ms,px_per_s)");
    sevents->add_option("--profile-out", seo.profile_out, "Write the speed profile used");
    sevents->add_option("--density", seo.texture.density, "Fraction of texture cells on")
        ->capture_default_str();
    sevents->add_option("--cell", seo.texture.cell_size, "Texture cell size in pixels")
        ->capture_default_str();

    SynthImagesOptions sio;
    auto* simages = synth->add_subcommand("images", "Place images and a perturbed revisit");
    req(simages, simages->add_option("--out-train", sio.out_train));
    req(simages, simages->add_option("--out-test", sio.out_test));
    req(simages, simages->add_option("--truth", sio.truth, "Ground truth CSV"));
    simages->add_option("--places", sio.places)->capture_default_str();
    simages->add_option("--width", sio.width)->capture_default_str();
    simages->add_option("--height", sio.height)->capture_default_str();
    simages->add_option("--noise", sio.noise, "Noise std as a fraction of image std")
        ->capture_default_str();
    simages->add_option("--brightness", sio.brightness, "Brightness shift as a fraction of the mean")
        ->capture_default_str();

    SynthTruthOptions sto;
    auto* struth = synth->add_subcommand("truth", "Ground truth for two synthetic event traverses");
    req(struth, struth->add_option("--ref-events", sto.ref_events));
    req(struth, struth->add_option("--query-events", sto.query_events));
    req(struth, struth->add_option("--ref-profile", sto.ref_profile));
    req(struth, struth->add_option("--query-profile", sto.query_profile));
    req(struth, struth->add_option("--out", sto.out));
    struth->add_option("--window-ms", sto.window_ms)->capture_default_str();
    struth->add_option("--sensor-width", sto.sensor_width)->capture_default_str();
    struth->add_option("--sensor-height", sto.sensor_height)->capture_default_str();

    EvalOptions eo;
    auto* eval = app.add_subcommand("eval", "Score matches or a neural traverse against ground truth");
    eval->add_option("--matches", eo.matches, "Match CSV");
    eval->add_option("--traverse", eo.traverse, "Neural traverse CSV");
    eval->add_option("--winners", eo.winners, "Training winners CSV");
    req(eval, eval->add_option("--truth", eo.truth, "Ground truth CSV"));
    eval->add_option("--tolerance", eo.tolerance, "Frames")->check(CLI::NonNegativeNumber)->capture_default_str();
    eval->add_option("--out", eo.out, "Report file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        CLI::App* sub = &app;
        for (auto* s = sub; s != nullptr;) {
            auto subs = s->get_subcommands();
            if (subs.empty()) break;
            s = subs.front();
            sub = s;
        }
        err << sub->help();
        return 2;
    }

    CLI::App* leaf = app.get_subcommands().front();
    while (!leaf->get_subcommands().empty()) leaf = leaf->get_subcommands().front();
    for (const auto& [sub, opt] : required) {
        if (sub == leaf && opt->count() == 0) {
            err << "error: " << opt->get_name() << " is required\n\n" << leaf->help();
            return 2;
        }
    }

    // Resolved parameters of the selected command path.
    out << "seed=" << g.seed << "\nthreads=" << g.threads << '\n';
    out << leaf->config_to_str(true, false);

    const auto started = std::chrono::steady_clock::now();
    try {
        if (frames->parsed()) {
            run_frames(fo, g, out);
        } else if (match->parsed()) {
            run_match(mo, g, out);
        } else if (ntrain->parsed()) {
            run_neural_train(nto, g, out);
        } else if (ntest->parsed()) {
            run_neural_test(nte, out);
        } else if (sevents->parsed()) {
            run_synth_events(seo, g, out);
        } else if (simages->parsed()) {
            run_synth_images(sio, g, out);
        } else if (struth->parsed()) {
            run_synth_truth(sto, out);
        } else if (eval->parsed()) {
            run_eval(eo, out);
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << leaf->help();
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    if (g.verbose) {
        const std::chrono::duration<double> took = std::chrono::steady_clock::now() - started;
        err << leaf->get_name() << " finished in " << took.count() << " s\n";
    }
    return 0;
}

}  // namespace evseq
