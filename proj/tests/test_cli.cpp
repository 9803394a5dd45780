#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <sstream>

#include "fepagent/arena.hpp"
#include "fepagent/cli.hpp"
#include "fepagent/io.hpp"
#include "fixtures.hpp"

using namespace fep;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "fepagent");
    std::vector<const char*> argv;
    for (auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

struct Workspace {
    fs::path dir;
    Workspace() {
        dir = fs::temp_directory_path() / ("fepagent_cli_" + std::to_string(::getpid()));
        fs::create_directories(dir);
        const auto& m = fixture::tiny_models();
        io::save_json(file("disc.json"), io::to_json(m.disc));
        io::save_json(file("map.json"), io::to_json(m.map));
        io::save_json(file("hmm.json"), io::to_json(m.hmm));
    }
    ~Workspace() { fs::remove_all(dir); }
    std::string file(const std::string& name) const { return (dir / name).string(); }
};

const char* const kSubcommands[] = {"preprocess",  "gen-synthetic", "train-discriminator", "eval-discriminator",
                                    "build-roadmap", "sample",      "label-observations",  "train-iohmm",
                                    "select",      "simulate",      "compare",             "pipeline",
                                    "serve"};

}  // namespace

TEST_CASE("usage errors") {
    auto none = run({});
    CHECK(none.code == cli::kExitUsage);
    CHECK(none.err.find("Subcommands") != std::string::npos);

    auto unknown = run({"frobnicate"});
    CHECK(unknown.code == cli::kExitUsage);
    CHECK(unknown.err.find("unknown subcommand 'frobnicate'") != std::string::npos);

    auto missing = run({"gen-synthetic", "--frames", "10"});
    CHECK(missing.code == cli::kExitUsage);
    CHECK(missing.err.find("--out") != std::string::npos);

    CHECK(run({"gen-synthetic", "--frames", "ten", "--out", "x.json"}).code == cli::kExitUsage);
}

TEST_CASE("help on every subcommand") {
    CHECK(run({"--help"}).code == cli::kExitOk);
    for (const char* sub : kSubcommands) {
        CAPTURE(sub);
        auto r = run({sub, "--help"});
        CHECK(r.code == cli::kExitOk);
        CHECK(r.out.find(sub) != std::string::npos);
    }
}

TEST_CASE("gen-synthetic") {
    Workspace ws;
    auto r = run({"gen-synthetic", "--frames", "100", "--coupling", "0", "--seed", "1", "--out", ws.file("f.json")});
    CHECK(r.code == cli::kExitOk);
    REQUIRE(fs::exists(ws.file("f.json")));
    const auto rec = io::read_recording(ws.file("f.json"));
    CHECK(rec.agent.size() == 100);
    CHECK(rec.partner.size() == 100);

    auto bad = run({"gen-synthetic", "--frames", "10", "--out", ws.file("g.json")});
    CHECK(bad.code == cli::kExitRuntime);
}

TEST_CASE("simulate") {
    Workspace ws;
    run({"gen-synthetic", "--frames", "200", "--seed", "3", "--out", ws.file("partner.json")});

    SUBCASE("missing model file") {
        const auto missing = ws.file("absent_hmm.json");
        auto r = run({"simulate", "--partner", ws.file("partner.json"), "--hmm", missing, "--map", ws.file("map.json"),
                      "--disc", ws.file("disc.json"), "--out", ws.file("log.jsonl")});
        CHECK(r.code == cli::kExitRuntime);
        CHECK(r.err.find(missing) != std::string::npos);
    }
    SUBCASE("byte-identical logs for a fixed seed") {
        auto sim = [&](const std::string& out, const std::string& seed) {
            return run({"simulate", "--partner", ws.file("partner.json"), "--hmm", ws.file("hmm.json"), "--map",
                        ws.file("map.json"), "--disc", ws.file("disc.json"), "--ticks", "120", "--seed", seed, "--out",
                        ws.file(out)});
        };
        CHECK(sim("a.jsonl", "5").code == cli::kExitOk);
        CHECK(sim("b.jsonl", "5").code == cli::kExitOk);
        CHECK(sim("c.jsonl", "6").code == cli::kExitOk);
        const auto a = io::read_text(ws.file("a.jsonl"));
        CHECK(a == io::read_text(ws.file("b.jsonl")));
        CHECK(a != io::read_text(ws.file("c.jsonl")));
        CHECK(std::count(a.begin(), a.end(), '\n') == 120);
    }
    SUBCASE("bad method") {
        auto r = run({"simulate", "--method", "greedy", "--partner", ws.file("partner.json"), "--hmm",
                      ws.file("hmm.json"), "--map", ws.file("map.json"), "--disc", ws.file("disc.json"), "--out",
                      ws.file("log.jsonl")});
        CHECK(r.code == cli::kExitRuntime);
    }
}

TEST_CASE("compare") {
    Workspace ws;
    run({"gen-synthetic", "--frames", "200", "--seed", "3", "--out", ws.file("partner.json")});
    std::vector<std::string> logs;
    for (const char* method : {"fep", "perlin"}) {
        for (int seed = 0; seed < 3; ++seed) {
            const auto out = ws.file(std::string(method) + std::to_string(seed) + ".jsonl");
            REQUIRE(run({"simulate", "--method", method, "--partner", ws.file("partner.json"), "--hmm",
                         ws.file("hmm.json"), "--map", ws.file("map.json"), "--disc", ws.file("disc.json"), "--ticks",
                         "60", "--seed", std::to_string(seed), "--out", out})
                        .code == cli::kExitOk);
            logs.push_back(out);
        }
    }
    std::vector<std::string> args{"compare", "--json", "--in"};
    args.insert(args.end(), logs.begin(), logs.end());
    auto r = run(args);
    REQUIRE(r.code == cli::kExitOk);
    const auto rows = io::Json::parse(r.out);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0]["a"] == "fep");
    CHECK(rows[0]["b"] == "perlin");
    CHECK(rows[0]["score"]["test"]["exact"] == true);

    std::vector<arena::EpisodeReport> fep, perlin;
    for (std::size_t i = 0; i < logs.size(); ++i) {
        std::vector<arena::TickRecord> log;
        std::istringstream in(io::read_text(logs[i]));
        for (std::string line; std::getline(in, line);) log.push_back(arena::tick_from_json_line(line));
        (i < 3 ? fep : perlin).push_back(arena::report_from_log(log));
    }
    const auto direct = arena::compare_methods({{"fep", fep}, {"perlin", perlin}});
    CHECK(rows[0]["score"]["test"]["p_greater"].get<double>() == direct[0].score_test.p_greater);

    args[1] = "--in";
    args.erase(args.begin() + 2);
    auto table = run(args);
    CHECK(table.code == cli::kExitOk);
    CHECK(table.out.find("fep vs perlin") != std::string::npos);

    CHECK(run({"compare", "--in", logs[0]}).code == cli::kExitRuntime);
}

TEST_CASE("offline model building commands") {
    Workspace ws;
    for (int s = 0; s < 2; ++s) {
        REQUIRE(run({"gen-synthetic", "--frames", "200", "--seed", std::to_string(s), "--dim", "4", "--out",
                     ws.file("rec" + std::to_string(s) + ".json")})
                    .code == cli::kExitOk);
    }
    const auto r0 = ws.file("rec0.json"), r1 = ws.file("rec1.json");

    auto pre = run({"preprocess", "--in", r0, "--out", ws.file("pre.json"), "--resample-hz", "8"});
    CHECK(pre.code == cli::kExitOk);
    CHECK(io::read_recording(ws.file("pre.json")).dim() == 4);

    auto disc = run({"train-discriminator", "--data", r0, r1, "--epochs", "1", "--out", ws.file("d.json")});
    REQUIRE(disc.code == cli::kExitOk);
    CHECK(disc.out.find("held-out accuracy") != std::string::npos);
    auto eval = run({"eval-discriminator", "--model", ws.file("d.json"), "--data", r0});
    CHECK(eval.code == cli::kExitOk);

    REQUIRE(run({"build-roadmap", "--data", r0, r1, "--out", ws.file("m.json")}).code == cli::kExitOk);
    auto walks = run({"sample", "--map", ws.file("m.json"), "--count", "3"});
    CHECK(walks.code == cli::kExitOk);
    CHECK(io::Json::parse(walks.out).size() == 3);

    REQUIRE(run({"label-observations", "--disc", ws.file("d.json"), "--data", r0, r1, "--block", "40",
                 "--out-actions", ws.file("a.json"), "--out-observations", ws.file("o.json")})
                .code == cli::kExitOk);
    auto hmm = run({"train-iohmm", "--actions", ws.file("a.json"), "--observations", ws.file("o.json"), "--states",
                    "2", "--max-iter", "3", "--restarts", "1", "--out", ws.file("h.json")});
    REQUIRE(hmm.code == cli::kExitOk);
    const auto h = io::load_json(ws.file("h.json"));
    CHECK(h["n_states"] == 2);
    CHECK(h["trace"]["log_likelihood"].size() == h["trace"]["iterations"].get<std::size_t>() + 1);

    io::save_json(ws.file("b.json"), io::Json::array({0.5, 0.5}));
    auto pick = run({"select", "--hmm", ws.file("h.json"), "--map", ws.file("m.json"), "--belief", ws.file("b.json")});
    REQUIRE(pick.code == cli::kExitOk);
    const auto s = io::Json::parse(pick.out);
    CHECK(s["candidates"].size() == 32);
    CHECK(s["chosen"]["nodes"].size() == 8);

    auto sim = run({"simulate", "--partner", r1, "--hmm", ws.file("h.json"), "--map", ws.file("m.json"), "--disc",
                    ws.file("d.json"), "--ticks", "50", "--out", ws.file("run.jsonl")});
    CHECK(sim.code == cli::kExitOk);
}

TEST_CASE("serve rejects a bad bind address") {
    Workspace ws;
    auto r = run({"serve", "--hmm", ws.file("hmm.json"), "--map", ws.file("map.json"), "--disc", ws.file("disc.json"),
                  "--bind", "nowhere"});
    CHECK(r.code == cli::kExitRuntime);
}
