#include "fepagent/cli.hpp"

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "fepagent/arena.hpp"
#include "fepagent/error.hpp"
#include "fepagent/gateway.hpp"
#include "fepagent/io.hpp"
#include "fepagent/pipeline.hpp"
#include "fepagent/random.hpp"
#include "fepagent/signal.hpp"

namespace fep::cli {

namespace {

std::vector<Recording> read_recordings(const std::vector<std::string>& paths) {
    std::vector<Recording> out;
    for (const auto& p : paths) out.push_back(io::read_recording(p));
    return out;
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v;
    return s.str();
}

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Free-energy gesture agent: preprocessing, model training, simulation and live serving", "fepagent"};
    app.require_subcommand(1);
    app.fallthrough(false);

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "Outlier removal, resampling and low-pass filtering of pose data");
    std::string pre_in, pre_out;
    signal::PreprocessConfig pre_cfg;
    double csv_rate = 30.0;
    pre->add_option("--in", pre_in, "Input pose file (.json recording or sequence, or .csv)")->required();
    pre->add_option("--out", pre_out, "Output file (.json, or .csv for single sequences)")->required();
    pre->add_option("--resample-hz", pre_cfg.resample_hz, "Target frame rate")->capture_default_str();
    pre->add_option("--cutoff-hz", pre_cfg.cutoff_hz, "Low-pass cutoff")->capture_default_str();
    pre->add_option("--outlier-z", pre_cfg.outlier_z, "Robust z-score threshold")->capture_default_str();
    pre->add_option("--csv-rate", csv_rate, "Frame rate of CSV input")->capture_default_str();

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic agent/partner recording");
    std::size_t gen_frames = 0;
    double gen_coupling = 0.8;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    signal::SyntheticConfig gen_cfg;
    gen->add_option("--frames", gen_frames, "Number of frames")->required();
    gen->add_option("--coupling", gen_coupling, "Coupling in [0, 1]")->capture_default_str();
    gen->add_option("--seed", gen_seed, "Random seed")->capture_default_str();
    gen->add_option("--dim", gen_cfg.dim, "Pose dimension")->capture_default_str();
    gen->add_option("--out", gen_out, "Output recording (.json)")->required();

    // train-discriminator
    auto* tdisc = app.add_subcommand("train-discriminator", "Train the interaction discriminator on recordings");
    std::vector<std::string> tdisc_data;
    std::string tdisc_out;
    std::uint64_t tdisc_seed = 0;
    discriminator::TrainConfig tdisc_cfg;
    discriminator::CorpusConfig corpus_cfg;
    tdisc->add_option("--data", tdisc_data, "Recording files")->required();
    tdisc->add_option("--out", tdisc_out, "Model file")->required();
    tdisc->add_option("--seed", tdisc_seed)->capture_default_str();
    tdisc->add_option("--epochs", tdisc_cfg.epochs)->capture_default_str();
    tdisc->add_option("--lr", tdisc_cfg.learning_rate)->capture_default_str();
    tdisc->add_option("--batch", tdisc_cfg.batch)->capture_default_str();
    tdisc->add_option("--window", corpus_cfg.window)->capture_default_str();
    tdisc->add_option("--stride", corpus_cfg.stride)->capture_default_str();
    tdisc->add_option("--shift-min", corpus_cfg.shift_min)->capture_default_str();

    // eval-discriminator
    auto* edisc = app.add_subcommand("eval-discriminator", "Accuracy of a discriminator on a coupled-vs-shifted corpus");
    std::string edisc_model;
    std::vector<std::string> edisc_data;
    std::uint64_t edisc_seed = 0;
    discriminator::CorpusConfig ecorpus_cfg;
    edisc->add_option("--model", edisc_model)->required();
    edisc->add_option("--data", edisc_data, "Recording files")->required();
    edisc->add_option("--seed", edisc_seed)->capture_default_str();
    edisc->add_option("--stride", ecorpus_cfg.stride)->capture_default_str();
    edisc->add_option("--shift-min", ecorpus_cfg.shift_min)->capture_default_str();

    // build-roadmap
    auto* broad = app.add_subcommand("build-roadmap", "Build the posture roadmap from agent motion");
    std::vector<std::string> broad_data;
    std::string broad_out;
    roadmap::BuildConfig broad_cfg;
    broad_cfg.max_feasibility_edges = pipeline::PipelineConfig{}.roadmap.max_feasibility_edges;
    broad->add_option("--data", broad_data, "Recording files (agent stream) or agent sequences")->required();
    broad->add_option("--out", broad_out)->required();
    broad->add_option("--fuse-eps", broad_cfg.fuse_eps)->capture_default_str();
    broad->add_option("--lambda", broad_cfg.lambda)->capture_default_str();
    broad->add_option("--max-feasibility-edges", broad_cfg.max_feasibility_edges, "0 keeps all")->capture_default_str();

    // sample
    auto* samp = app.add_subcommand("sample", "Random walks on a roadmap");
    std::string samp_map;
    std::size_t samp_node = 0, samp_horizon = roadmap::kDefaultHorizon, samp_count = roadmap::kDefaultCandidates;
    std::uint64_t samp_seed = 0;
    samp->add_option("--map", samp_map)->required();
    samp->add_option("--node", samp_node)->capture_default_str();
    samp->add_option("--horizon", samp_horizon)->capture_default_str();
    samp->add_option("--count", samp_count)->capture_default_str();
    samp->add_option("--seed", samp_seed)->capture_default_str();

    // label-observations
    auto* lab = app.add_subcommand("label-observations", "Score recordings with a discriminator into IO-HMM training data");
    std::string lab_disc, lab_actions, lab_obs;
    std::vector<std::string> lab_data;
    std::size_t lab_block = pipeline::PipelineConfig{}.observation_block;
    std::uint64_t lab_seed = 0;
    lab->add_option("--disc", lab_disc)->required();
    lab->add_option("--data", lab_data, "Recording files")->required();
    lab->add_option("--block", lab_block, "Frames per coupled/shifted block")->capture_default_str();
    lab->add_option("--seed", lab_seed)->capture_default_str();
    lab->add_option("--out-actions", lab_actions)->required();
    lab->add_option("--out-observations", lab_obs)->required();

    // train-iohmm
    auto* thmm = app.add_subcommand("train-iohmm", "Fit the IO-HMM by generalised EM");
    std::string thmm_actions, thmm_obs, thmm_out;
    std::size_t thmm_states = 5;
    std::uint64_t thmm_seed = 0;
    iohmm::EmConfig em_cfg;
    thmm->add_option("--actions", thmm_actions)->required();
    thmm->add_option("--observations", thmm_obs)->required();
    thmm->add_option("--states", thmm_states)->capture_default_str();
    thmm->add_option("--seed", thmm_seed)->capture_default_str();
    thmm->add_option("--max-iter", em_cfg.max_iter)->capture_default_str();
    thmm->add_option("--tol", em_cfg.tol)->capture_default_str();
    thmm->add_option("--restarts", em_cfg.restarts)->capture_default_str();
    thmm->add_option("--out", thmm_out)->required();

    // select
    auto* sel = app.add_subcommand("select", "Score roadmap candidates by free energy and pick the minimum");
    std::string sel_hmm, sel_map, sel_belief, sel_cfg;
    std::size_t sel_node = 0;
    std::optional<std::size_t> sel_prev;
    std::uint64_t sel_seed = 0;
    sel->add_option("--hmm", sel_hmm)->required();
    sel->add_option("--map", sel_map)->required();
    sel->add_option("--belief", sel_belief)->required();
    sel->add_option("--cfg", sel_cfg, "FEP config JSON (defaults when omitted)");
    sel->add_option("--node", sel_node, "Current roadmap node")->capture_default_str();
    sel->add_option("--previous", sel_prev, "Node walked in from");
    sel->add_option("--seed", sel_seed)->capture_default_str();

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run one closed-loop episode and write a JSON-lines log");
    std::string sim_method = "fep", sim_partner, sim_hmm, sim_map, sim_disc, sim_out, sim_cfg;
    std::size_t sim_ticks = 500, sim_replan = 0;
    std::uint64_t sim_seed = 0;
    sim->add_option("--method", sim_method, "fep, random_prm or perlin")->capture_default_str();
    sim->add_option("--partner", sim_partner, "Partner stream (.json recording/sequence or .csv)")->required();
    sim->add_option("--hmm", sim_hmm)->required();
    sim->add_option("--map", sim_map)->required();
    sim->add_option("--disc", sim_disc)->required();
    sim->add_option("--cfg", sim_cfg, "FEP config JSON");
    sim->add_option("--ticks", sim_ticks)->capture_default_str();
    sim->add_option("--replan-every", sim_replan, "Ticks between plans (0 = horizon)")->capture_default_str();
    sim->add_option("--seed", sim_seed)->capture_default_str();
    sim->add_option("--out", sim_out, "Episode log (.jsonl)")->required();

    // compare
    auto* cmp = app.add_subcommand("compare", "Mann-Whitney comparison of episode logs grouped by method");
    std::vector<std::string> cmp_in;
    bool cmp_json = false;
    cmp->add_option("--in", cmp_in, "Episode logs (.jsonl)")->required();
    cmp->add_flag("--json", cmp_json, "Emit JSON instead of a table");

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "Synthetic world to trained discriminator, roadmap and IO-HMM in one go");
    std::string pipe_dir = ".";
    std::uint64_t pipe_seed = 0;
    pipeline::PipelineConfig pipe_cfg;
    pipe->add_option("--out-dir", pipe_dir, "Directory for disc.json, map.json, hmm.json")->capture_default_str();
    pipe->add_option("--seed", pipe_seed)->capture_default_str();
    pipe->add_option("--recordings", pipe_cfg.world.recordings)->capture_default_str();
    pipe->add_option("--frames", pipe_cfg.world.frames)->capture_default_str();
    pipe->add_option("--coupling", pipe_cfg.world.coupling)->capture_default_str();
    pipe->add_option("--epochs", pipe_cfg.train.epochs)->capture_default_str();
    pipe->add_option("--states", pipe_cfg.states)->capture_default_str();

    // serve
    auto* srv = app.add_subcommand("serve", "WebSocket gateway for live sessions (FEP_BIND, FEP_LOG)");
    std::string srv_hmm, srv_map, srv_disc, srv_bind;
    std::size_t srv_heartbeat_ms = 5000, srv_threads = 2;
    srv->add_option("--hmm", srv_hmm)->required();
    srv->add_option("--map", srv_map)->required();
    srv->add_option("--disc", srv_disc)->required();
    srv->add_option("--bind", srv_bind, "host:port, overrides FEP_BIND");
    srv->add_option("--heartbeat-ms", srv_heartbeat_ms)->capture_default_str();
    srv->add_option("--threads", srv_threads)->capture_default_str();

    if (argc <= 1) {
        err << app.help();
        return kExitUsage;
    }
    if (const std::string first = argv[1]; !first.empty() && first[0] != '-') {
        const auto subs = app.get_subcommands([](const CLI::App*) { return true; });
        const bool known = std::any_of(subs.begin(), subs.end(), [&](const CLI::App* a) { return a->get_name() == first; });
        if (!known) {
            err << "error: unknown subcommand '" << first << "'\n\n" << app.help();
            return kExitUsage;
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << e.what() << '\n';
            return kExitOk;
        }
        err << "error: " << e.what() << "\n\n";
        const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return kExitUsage;
    }

    try {
        if (pre->parsed()) {
            const auto j = pre_in.size() >= 4 && pre_in.substr(pre_in.size() - 4) == ".csv" ? io::Json()
                                                                                           : io::load_json(pre_in);
            if (!j.is_null() && io::is_recording(j)) {
                const auto rec = signal::preprocess(io::recording_from_json(j), pre_cfg);
                io::save_json(pre_out, io::to_json(rec));
                out << "preprocessed recording: " << rec.size() << " frames at " << rec.rate_hz() << " Hz\n";
            } else {
                const auto seq = j.is_null() ? io::read_sequence(pre_in, Person::partner_side, csv_rate)
                                             : io::sequence_from_json(j);
                const auto res = signal::preprocess(seq, pre_cfg);
                if (pre_out.size() >= 4 && pre_out.substr(pre_out.size() - 4) == ".csv") {
                    io::write_text(pre_out, io::to_csv(res));
                } else {
                    io::save_json(pre_out, io::to_json(res));
                }
                out << "preprocessed sequence: " << res.size() << " frames at " << res.rate_hz << " Hz\n";
            }
        } else if (gen->parsed()) {
            const auto rec = signal::gen_synthetic_interaction(gen_frames, gen_coupling, gen_seed, gen_cfg);
            io::save_json(gen_out, io::to_json(rec));
            out << "wrote " << rec.size() << " frames (dim " << rec.dim() << ") to " << gen_out << '\n';
        } else if (tdisc->parsed()) {
            const auto recs = read_recordings(tdisc_data);
            const auto corpus = discriminator::build_corpus(recs, corpus_cfg, mix_seed(tdisc_seed, 1));
            auto [params, report] = discriminator::train(corpus, tdisc_cfg, tdisc_seed);
            io::save_json(tdisc_out, io::to_json(params));
            out << "windows " << corpus.size() << ", epochs " << report.epochs.size() << ", held-out accuracy "
                << fmt(params.meta.heldout_accuracy) << '\n';
        } else if (edisc->parsed()) {
            const auto params = io::classifier_from_json(io::load_json(edisc_model));
            ecorpus_cfg.window = params.window;
            const auto corpus = discriminator::build_corpus(read_recordings(edisc_data), ecorpus_cfg, edisc_seed);
            const auto ev = discriminator::evaluate(params, corpus);
            out << "windows " << ev.count << ", accuracy " << fmt(ev.accuracy) << ", mean BCE " << fmt(ev.mean_bce)
                << '\n';
        } else if (broad->parsed()) {
            std::vector<PoseSequence> seqs;
            for (const auto& p : broad_data) seqs.push_back(io::read_sequence(p, Person::agent_side));
            const auto bound = roadmap::fit_kinematic_bound(seqs);
            const auto map = roadmap::build_roadmap(seqs, bound, broad_cfg);
            io::save_json(broad_out, io::to_json(map));
            out << "nodes " << map.size() << ", edges " << map.edge_count() << '\n';
        } else if (samp->parsed()) {
            const auto map = io::roadmap_from_json(io::load_json(samp_map));
            const auto walks = roadmap::sample_sequences(map, samp_node, samp_horizon, samp_count, samp_seed);
            io::Json arr = io::Json::array();
            for (const auto& w : walks) arr.push_back(io::to_json(w));
            out << arr.dump(2) << '\n';
        } else if (lab->parsed()) {
            const auto params = io::classifier_from_json(io::load_json(lab_disc));
            const auto corpus = pipeline::label_observations(params, read_recordings(lab_data), lab_block, lab_seed);
            io::save_json(lab_actions, io::Json{{"actions", corpus.actions}});
            io::save_json(lab_obs, io::Json{{"observations", corpus.observations}, {"scores", corpus.scores}});
            out << "labelled " << corpus.observations.size() << " steps\n";
        } else if (thmm->parsed()) {
            const auto actions = io::actions_from_json(io::load_json(thmm_actions));
            const auto obs = io::observations_from_json(io::load_json(thmm_obs));
            const auto fit = iohmm::em_fit(obs, actions, thmm_states, em_cfg, thmm_seed);
            io::save_json(thmm_out, io::to_json(fit.params, &fit.trace));
            out << "states " << thmm_states << ", iterations " << fit.trace.iterations << ", log-likelihood "
                << fmt(fit.trace.log_likelihood.back()) << (fit.trace.converged ? " (converged)" : "") << '\n';
        } else if (sel->parsed()) {
            const auto hmm = io::hmm_from_json(io::load_json(sel_hmm));
            const auto map = io::roadmap_from_json(io::load_json(sel_map));
            const auto belief = io::belief_from_json(io::load_json(sel_belief));
            const auto cfg = sel_cfg.empty() ? policy::FepConfig{} : io::fep_config_from_json(io::load_json(sel_cfg));
            const auto s = policy::select_action(hmm, belief.probabilities, map, sel_node, cfg, sel_seed, sel_prev);
            out << io::to_json(s).dump(2) << '\n';
        } else if (sim->parsed()) {
            const auto models = io::load_models(sim_disc, sim_map, sim_hmm);
            const auto partner = io::read_sequence(sim_partner, Person::partner_side);
            arena::EpisodeConfig cfg;
            cfg.ticks = sim_ticks;
            cfg.agent.method = arena::method_from_string(sim_method);
            cfg.agent.replan_every = sim_replan;
            if (!sim_cfg.empty()) cfg.agent.fep = io::fep_config_from_json(io::load_json(sim_cfg));
            const auto rep = arena::run_episode(models, partner, cfg, sim_seed);
            io::write_text(sim_out, arena::to_jsonl(rep.log));
            out << arena::to_string(rep.method) << ": ticks " << rep.ticks << ", mean score " << fmt(rep.mean_score)
                << ", intensity " << fmt(rep.intensity) << '\n';
        } else if (cmp->parsed()) {
            std::map<std::string, std::vector<arena::EpisodeReport>> groups;
            for (const auto& path : cmp_in) {
                std::istringstream lines(io::read_text(path));
                std::vector<arena::TickRecord> log;
                std::string line;
                while (std::getline(lines, line)) {
                    if (!line.empty()) log.push_back(arena::tick_from_json_line(line));
                }
                if (log.empty()) throw InvalidDataset("'" + path + "' holds no ticks");
                groups[arena::to_string(log.front().method)].push_back(arena::report_from_log(log));
            }
            const auto rows = arena::compare_methods(groups);
            if (cmp_json) {
                io::Json arr = io::Json::array();
                auto summary = [](const arena::Summary& s) {
                    return io::Json{{"median", s.median}, {"q1", s.q1}, {"q3", s.q3}};
                };
                auto test = [](const arena::MannWhitney& t) {
                    return io::Json{{"u", t.u_x},
                                    {"p_two_sided", t.p_two_sided},
                                    {"p_greater", t.p_greater},
                                    {"p_less", t.p_less},
                                    {"exact", t.exact}};
                };
                for (const auto& r : rows) {
                    arr.push_back({{"a", r.a},
                                   {"b", r.b},
                                   {"score", {{"a", summary(r.score_a)}, {"b", summary(r.score_b)}, {"test", test(r.score_test)}}},
                                   {"intensity",
                                    {{"a", summary(r.intensity_a)}, {"b", summary(r.intensity_b)}, {"test", test(r.intensity_test)}}}});
                }
                out << arr.dump(2) << '\n';
            } else {
                out << std::left << std::setw(26) << "pair" << std::setw(11) << "metric" << std::setw(26)
                    << "a median [q1, q3]" << std::setw(26) << "b median [q1, q3]" << std::setw(9) << "U"
                    << std::setw(10) << "p(two)" << "p(a>b)\n";
                auto row = [&](const std::string& pair, const char* metric, const arena::Summary& a,
                               const arena::Summary& b, const arena::MannWhitney& t) {
                    auto s = [](const arena::Summary& v) {
                        return fmt(v.median, 3) + " [" + fmt(v.q1, 3) + ", " + fmt(v.q3, 3) + "]";
                    };
                    out << std::left << std::setw(26) << pair << std::setw(11) << metric << std::setw(26) << s(a)
                        << std::setw(26) << s(b) << std::setw(9) << fmt(t.u_x, 1) << std::setw(10)
                        << fmt(t.p_two_sided) << fmt(t.p_greater) << '\n';
                };
                for (const auto& r : rows) {
                    const std::string pair = r.a + " vs " + r.b;
                    row(pair, "score", r.score_a, r.score_b, r.score_test);
                    row(pair, "intensity", r.intensity_a, r.intensity_b, r.intensity_test);
                }
            }
        } else if (pipe->parsed()) {
            const auto res = pipeline::build_models(pipe_cfg, pipe_seed);
            io::save_json(pipe_dir + "/disc.json", io::to_json(res.models.disc));
            io::save_json(pipe_dir + "/map.json", io::to_json(res.models.map));
            io::save_json(pipe_dir + "/hmm.json", io::to_json(res.models.hmm, &res.hmm_trace));
            for (std::size_t r = 0; r < res.world.size(); ++r) {
                io::save_json(pipe_dir + "/world_" + std::to_string(r) + ".json", io::to_json(res.world[r]));
            }
            out << "discriminator held-out accuracy " << fmt(res.models.disc.meta.heldout_accuracy) << ", roadmap "
                << res.models.map.size() << " nodes, IO-HMM log-likelihood " << fmt(res.hmm_trace.log_likelihood.back())
                << '\n';
        } else if (srv->parsed()) {
            gateway::configure_logging_from_env();
            const auto models = io::load_models(srv_disc, srv_map, srv_hmm);
            auto cfg = gateway::config_from_env();
            if (!srv_bind.empty()) cfg.bind = gateway::parse_endpoint(srv_bind);
            cfg.heartbeat = std::chrono::milliseconds(srv_heartbeat_ms);
            cfg.threads = srv_threads;
            gateway::Server server(models, cfg);
            const auto port = server.start();
            out << "listening on " << cfg.bind.host << ":" << port << std::endl;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            server.stop();
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

int dispatch(int argc, const char* const* argv) { return dispatch(argc, argv, std::cout, std::cerr); }

}  // namespace fep::cli
