#include "fepagent/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fepagent/error.hpp"

namespace fep::io {

namespace {

template <typename T>
T get(const Json& j, const char* key) {
    if (!j.contains(key)) throw InvalidDataset(std::string("missing field '") + key + "'");
    return j.at(key).get<T>();
}

Json shape_json(const nn::Shape& s) { return {{"c", s.c}, {"h", s.h}, {"w", s.w}}; }

}  // namespace

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
    if (!out) throw Error("write to '" + path + "' failed");
}

Json load_json(const std::string& path) {
    const auto text = read_text(path);
    try {
        return Json::parse(text);
    } catch (const Json::exception& e) {
        throw Error("'" + path + "' is not valid JSON: " + e.what());
    }
}

void save_json(const std::string& path, const Json& j) { write_text(path, j.dump() + "\n"); }

Json to_json(const PoseSequence& seq) {
    return {{"rate_hz", seq.rate_hz}, {"person", to_string(seq.person)}, {"frames", seq.frames}};
}

Json to_json(const Recording& rec) {
    return {{"rate_hz", rec.rate_hz()}, {"agent", rec.agent.frames}, {"partner", rec.partner.frames}};
}

bool is_recording(const Json& j) { return j.is_object() && j.contains("agent") && j.contains("partner"); }

namespace {

void check_frames(const std::vector<PoseVector>& frames) {
    for (const auto& f : frames) {
        if (f.size() != frames.front().size()) throw InvalidDataset("pose frames have inconsistent dimensions");
    }
}

}  // namespace

PoseSequence sequence_from_json(const Json& j, Person fallback) {
    try {
        if (is_recording(j)) {
            const auto rec = recording_from_json(j);
            return fallback == Person::agent_side ? rec.agent : rec.partner;
        }
        PoseSequence seq;
        seq.frames = get<std::vector<PoseVector>>(j, "frames");
        seq.rate_hz = j.value("rate_hz", 8.0);
        seq.person = j.contains("person") ? person_from_string(j["person"].get<std::string>()) : fallback;
        check_frames(seq.frames);
        return seq;
    } catch (const Json::exception& e) {
        throw InvalidDataset(std::string("malformed pose sequence: ") + e.what());
    }
}

Recording recording_from_json(const Json& j) {
    try {
        Recording rec;
        const double rate = j.value("rate_hz", 8.0);
        rec.agent.frames = get<std::vector<PoseVector>>(j, "agent");
        rec.partner.frames = get<std::vector<PoseVector>>(j, "partner");
        rec.agent.rate_hz = rec.partner.rate_hz = rate;
        rec.agent.person = Person::agent_side;
        rec.partner.person = Person::partner_side;
        check_frames(rec.agent.frames);
        check_frames(rec.partner.frames);
        if (rec.agent.dim() != rec.partner.dim()) throw InvalidDataset("agent and partner dims differ");
        return rec;
    } catch (const Json::exception& e) {
        throw InvalidDataset(std::string("malformed recording: ") + e.what());
    }
}

PoseSequence parse_csv(const std::string& text, double rate_hz) {
    PoseSequence seq;
    seq.rate_hz = rate_hz;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        PoseVector row;
        std::istringstream cells(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(cells, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (cell.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
            } catch (const std::exception&) {
                numeric = false;
            }
            if (!numeric) break;
        }
        if (!numeric) {
            if (seq.frames.empty()) continue;  // header
            throw InvalidDataset("non-numeric CSV cell on line " + std::to_string(lineno));
        }
        if (!seq.frames.empty() && row.size() != seq.dim()) {
            throw InvalidDataset("CSV line " + std::to_string(lineno) + " has " + std::to_string(row.size()) +
                                 " values, expected " + std::to_string(seq.dim()));
        }
        seq.frames.push_back(std::move(row));
    }
    return seq;
}

std::string to_csv(const PoseSequence& seq) {
    std::ostringstream out;
    out.precision(17);
    for (const auto& f : seq.frames) {
        for (std::size_t k = 0; k < f.size(); ++k) out << (k ? "," : "") << f[k];
        out << '\n';
    }
    return out.str();
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Parse errors keep their type but gain the file name.
template <typename F>
auto from_file(const std::string& path, F parse) {
    try {
        return parse();
    } catch (const InvalidDataset& e) {
        throw InvalidDataset("'" + path + "': " + e.what());
    } catch (const InvalidConfiguration& e) {
        throw InvalidConfiguration("'" + path + "': " + e.what());
    } catch (const InvalidArgument& e) {
        throw InvalidArgument("'" + path + "': " + e.what());
    }
}

}  // namespace

PoseSequence read_sequence(const std::string& path, Person person, double csv_rate_hz) {
    if (ends_with(path, ".csv")) {
        const auto text = read_text(path);
        auto seq = from_file(path, [&] { return parse_csv(text, csv_rate_hz); });
        seq.person = person;
        return seq;
    }
    const auto j = load_json(path);
    return from_file(path, [&] { return sequence_from_json(j, person); });
}

Recording read_recording(const std::string& path) {
    const auto j = load_json(path);
    if (!is_recording(j)) throw InvalidDataset("'" + path + "' holds no agent/partner recording");
    return from_file(path, [&] { return recording_from_json(j); });
}

Json to_json(const discriminator::ClassifierParams& p) {
    Json layers = Json::array();
    for (const auto& l : p.net.layers()) {
        const auto& s = l.spec;
        layers.push_back({{"kind", nn::to_string(s.kind)},
                          {"in", s.in},
                          {"out", s.out},
                          {"kh", s.kh},
                          {"kw", s.kw},
                          {"sh", s.sh},
                          {"sw", s.sw},
                          {"ph", s.ph},
                          {"pw", s.pw},
                          {"rate", s.rate},
                          {"weights", l.weights},
                          {"bias", l.bias}});
    }
    std::vector<int> degenerate(p.scale.degenerate.begin(), p.scale.degenerate.end());
    return {{"window", p.window},
            {"dim", p.dim},
            {"input", shape_json(p.net.input_shape())},
            {"layers", layers},
            {"scale", {{"min", p.scale.min}, {"max", p.scale.max}, {"degenerate", degenerate}}},
            {"meta",
             {{"epochs", p.meta.epochs},
              {"train_accuracy", p.meta.train_accuracy},
              {"heldout_accuracy", p.meta.heldout_accuracy}}}};
}

discriminator::ClassifierParams classifier_from_json(const Json& j) {
    try {
        discriminator::ClassifierParams p;
        p.window = get<std::size_t>(j, "window");
        p.dim = get<std::size_t>(j, "dim");
        const auto& in = j.at("input");
        nn::Shape shape{in.at("c").get<std::size_t>(), in.at("h").get<std::size_t>(), in.at("w").get<std::size_t>()};
        std::vector<nn::LayerSpec> specs;
        for (const auto& l : j.at("layers")) {
            nn::LayerSpec s;
            s.kind = nn::layer_kind_from_string(l.at("kind").get<std::string>());
            s.in = l.at("in");
            s.out = l.at("out");
            s.kh = l.at("kh");
            s.kw = l.at("kw");
            s.sh = l.at("sh");
            s.sw = l.at("sw");
            s.ph = l.at("ph");
            s.pw = l.at("pw");
            s.rate = l.at("rate");
            specs.push_back(s);
        }
        p.net = nn::Network(shape, specs);
        const auto& layers = j.at("layers");
        for (std::size_t i = 0; i < specs.size(); ++i) {
            auto& layer = p.net.layers()[i];
            auto w = layers[i].at("weights").get<std::vector<double>>();
            auto b = layers[i].at("bias").get<std::vector<double>>();
            if (w.size() != layer.weights.size() || b.size() != layer.bias.size()) {
                throw InvalidDataset("layer " + std::to_string(i) + " parameter count does not match its spec");
            }
            layer.weights = std::move(w);
            layer.bias = std::move(b);
        }
        const auto& sc = j.at("scale");
        p.scale.min = sc.at("min").get<std::vector<double>>();
        p.scale.max = sc.at("max").get<std::vector<double>>();
        for (int d : sc.at("degenerate").get<std::vector<int>>()) p.scale.degenerate.push_back(d != 0);
        if (p.scale.features() != 2 * p.dim || p.scale.max.size() != p.scale.min.size() ||
            p.scale.degenerate.size() != p.scale.min.size()) {
            throw InvalidDataset("scale parameters do not match the pose dimension");
        }
        if (j.contains("meta")) {
            const auto& m = j["meta"];
            p.meta.epochs = m.value("epochs", std::size_t{0});
            p.meta.train_accuracy = m.value("train_accuracy", 0.0);
            p.meta.heldout_accuracy = m.value("heldout_accuracy", 0.0);
        }
        return p;
    } catch (const Json::exception& e) {
        throw InvalidDataset(std::string("malformed discriminator model: ") + e.what());
    }
}

Json to_json(const roadmap::Roadmap& map) {
    Json edges = Json::array();
    for (const auto& list : map.out) {
        Json row = Json::array();
        for (const auto& e : list) row.push_back({{"to", e.to}, {"p", e.prob}, {"observed", e.observed}});
        edges.push_back(std::move(row));
    }
    std::vector<int> idle(map.idle.begin(), map.idle.end());
    return {{"frame_rate_hz", map.frame_rate_hz},
            {"nodes", map.nodes},
            {"edges", edges},
            {"provenance", map.provenance},
            {"start_nodes", map.start_nodes},
            {"idle", idle},
            {"trace", map.trace},
            {"bound",
             {{"slope", map.bound.slope},
              {"intercept", map.bound.intercept},
              {"max_speed", map.bound.max_speed},
              {"samples", map.bound.samples}}}};
}

roadmap::Roadmap roadmap_from_json(const Json& j) {
    try {
        roadmap::Roadmap map;
        map.frame_rate_hz = j.value("frame_rate_hz", 8.0);
        map.nodes = get<std::vector<PoseVector>>(j, "nodes");
        const auto& edges = j.at("edges");
        if (edges.size() != map.nodes.size()) throw InvalidDataset("edge list count differs from node count");
        for (const auto& row : edges) {
            std::vector<roadmap::Edge> list;
            for (const auto& e : row) {
                roadmap::Edge edge{e.at("to").get<std::size_t>(), e.at("p").get<double>(), e.value("observed", false)};
                if (edge.to >= map.nodes.size()) throw InvalidDataset("edge points past the last node");
                list.push_back(edge);
            }
            map.out.push_back(std::move(list));
        }
        map.provenance = j.value("provenance", std::vector<std::size_t>(map.nodes.size(), 1));
        map.start_nodes = j.value("start_nodes", std::vector<std::size_t>{});
        for (int v : j.value("idle", std::vector<int>(map.nodes.size(), 0))) map.idle.push_back(v != 0);
        map.trace = j.value("trace", std::vector<std::vector<std::size_t>>{});
        const auto& b = j.at("bound");
        map.bound.slope = b.at("slope");
        map.bound.intercept = b.at("intercept");
        map.bound.max_speed = b.at("max_speed").get<std::vector<double>>();
        map.bound.samples = b.value("samples", std::size_t{0});
        for (const auto& n : map.nodes) {
            if (n.size() != map.nodes.front().size()) throw InvalidDataset("roadmap nodes have inconsistent dims");
        }
        for (std::size_t s : map.start_nodes) {
            if (s >= map.nodes.size()) throw InvalidDataset("start node out of range");
        }
        return map;
    } catch (const Json::exception& e) {
        throw InvalidDataset(std::string("malformed roadmap: ") + e.what());
    }
}

Json to_json(const iohmm::Params& p, const iohmm::TrainingTrace* trace) {
    const std::size_t s = p.n_states, d = p.action_dim;
    Json in = Json::array(), tr = Json::array();
    for (std::size_t i = 0; i < s; ++i) {
        std::vector<double> row(d);
        for (std::size_t k = 0; k < d; ++k) row[k] = p.in(i, k);
        in.push_back(row);
        Json mat = Json::array();
        for (std::size_t jj = 0; jj < s; ++jj) {
            for (std::size_t k = 0; k < d; ++k) row[k] = p.tr(i, jj, k);
            mat.push_back(row);
        }
        tr.push_back(std::move(mat));
    }
    Json j = {{"n_states", s}, {"action_dim", d}, {"theta_in", in}, {"theta_tr", tr}, {"theta_em", p.theta_em}};
    if (trace) {
        std::vector<int> starved(trace->starved.begin(), trace->starved.end());
        j["trace"] = {{"log_likelihood", trace->log_likelihood},
                      {"converged", trace->converged},
                      {"iterations", trace->iterations},
                      {"starved", starved},
                      {"restart", trace->restart}};
    }
    return j;
}

iohmm::Params hmm_from_json(const Json& j) {
    try {
        iohmm::Params p(get<std::size_t>(j, "n_states"), get<std::size_t>(j, "action_dim"));
        const auto in = get<std::vector<std::vector<double>>>(j, "theta_in");
        const auto tr = get<std::vector<std::vector<std::vector<double>>>>(j, "theta_tr");
        p.theta_em = get<std::vector<double>>(j, "theta_em");
        if (in.size() != p.n_states || tr.size() != p.n_states) throw InvalidDataset("IO-HMM matrices have wrong shape");
        for (std::size_t i = 0; i < p.n_states; ++i) {
            if (in[i].size() != p.action_dim || tr[i].size() != p.n_states) {
                throw InvalidDataset("IO-HMM matrices have wrong shape");
            }
            for (std::size_t k = 0; k < p.action_dim; ++k) p.in(i, k) = in[i][k];
            for (std::size_t jj = 0; jj < p.n_states; ++jj) {
                if (tr[i][jj].size() != p.action_dim) throw InvalidDataset("IO-HMM matrices have wrong shape");
                for (std::size_t k = 0; k < p.action_dim; ++k) p.tr(i, jj, k) = tr[i][jj][k];
            }
        }
        p.validate();
        return p;
    } catch (const Json::exception& e) {
        throw InvalidDataset(std::string("malformed IO-HMM model: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw InvalidDataset(std::string("invalid IO-HMM model: ") + e.what());
    }
}

Json to_json(const iohmm::Belief& b) { return {{"probabilities", b.probabilities}, {"log_evidence", b.log_evidence}}; }

iohmm::Belief belief_from_json(const Json& j) {
    try {
        iohmm::Belief b;
        if (j.is_array()) {
            b.probabilities = j.get<std::vector<double>>();
        } else {
            b.probabilities = get<std::vector<double>>(j, "probabilities");
            b.log_evidence = j.value("log_evidence", 0.0);
        }
        double total = 0.0;
        for (double v : b.probabilities) {
            if (!(v >= 0.0)) throw InvalidArgument("belief entries must be nonnegative");
            total += v;
        }
        if (b.probabilities.empty() || std::abs(total - 1.0) > 1e-6) {
            throw InvalidArgument("belief must sum to 1");
        }
        return b;
    } catch (const Json::exception& e) {
        throw InvalidArgument(std::string("malformed belief: ") + e.what());
    }
}

Json to_json(const policy::FepConfig& cfg) {
    return {{"w_epistemic", cfg.w_epistemic},
            {"w_pragmatic", cfg.w_pragmatic},
            {"horizon", cfg.horizon},
            {"candidates", cfg.candidates},
            {"preferred", cfg.preferred}};
}

policy::FepConfig fep_config_from_json(const Json& j) {
    try {
        policy::FepConfig cfg;
        cfg.w_epistemic = j.value("w_epistemic", cfg.w_epistemic);
        cfg.w_pragmatic = j.value("w_pragmatic", cfg.w_pragmatic);
        cfg.horizon = j.value("horizon", cfg.horizon);
        cfg.candidates = j.value("candidates", cfg.candidates);
        cfg.preferred = j.value("preferred", cfg.preferred);
        cfg.validate();
        return cfg;
    } catch (const Json::exception& e) {
        throw InvalidConfiguration(std::string("malformed FEP config: ") + e.what());
    }
}

Json to_json(const roadmap::ActionSequence& seq) {
    return {{"source", roadmap::to_string(seq.source)}, {"nodes", seq.nodes}, {"poses", seq.poses}};
}

Json to_json(const policy::Selection& sel) {
    Json cands = Json::array();
    for (const auto& c : sel.scored) {
        cands.push_back({{"nodes", c.sequence.nodes},
                         {"free_energy", c.free_energy},
                         {"entropy", c.entropy},
                         {"pragmatic", c.pragmatic}});
    }
    return {{"chosen", to_json(sel.chosen)},
            {"index", sel.index},
            {"free_energy", sel.scored[sel.index].free_energy},
            {"candidates", cands}};
}

std::vector<int> observations_from_json(const Json& j) {
    try {
        auto o = j.is_array() ? j.get<std::vector<int>>() : get<std::vector<int>>(j, "observations");
        for (int v : o) {
            if (v != 0 && v != 1) throw InvalidDataset("observations must be 0 or 1");
        }
        return o;
    } catch (const Json::exception& e) {
        throw InvalidDataset(std::string("malformed observations: ") + e.what());
    }
}

std::vector<iohmm::Action> actions_from_json(const Json& j) {
    try {
        return j.is_array() ? j.get<std::vector<iohmm::Action>>() : get<std::vector<iohmm::Action>>(j, "actions");
    } catch (const Json::exception& e) {
        throw InvalidDataset(std::string("malformed actions: ") + e.what());
    }
}

arena::Models load_models(const std::string& disc_path, const std::string& map_path, const std::string& hmm_path) {
    arena::Models m;
    const auto dj = load_json(disc_path), mj = load_json(map_path), hj = load_json(hmm_path);
    m.disc = from_file(disc_path, [&] { return classifier_from_json(dj); });
    m.map = from_file(map_path, [&] { return roadmap_from_json(mj); });
    m.hmm = from_file(hmm_path, [&] { return hmm_from_json(hj); });
    m.check();
    return m;
}

}  // namespace fep::io
