#include "fepagent/arena.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "fepagent/error.hpp"
#include "fepagent/random.hpp"

namespace fep::arena {

using nlohmann::ordered_json;

std::string to_string(Method m) {
    switch (m) {
        case Method::fep: return "fep";
        case Method::random_prm: return "random_prm";
        case Method::perlin: return "perlin";
    }
    return "unknown";
}

Method method_from_string(const std::string& s) {
    for (auto m : {Method::fep, Method::random_prm, Method::perlin}) {
        if (to_string(m) == s) return m;
    }
    throw InvalidArgument("unknown method '" + s + "' (expected fep, random_prm or perlin)");
}

void Models::check() const {
    if (map.size() == 0) throw InvalidConfiguration("roadmap is empty");
    if (disc.dim != map.dim()) {
        throw InvalidConfiguration("discriminator pose dim " + std::to_string(disc.dim) + " differs from roadmap dim " +
                                   std::to_string(map.dim()));
    }
    if (hmm.action_dim != map.dim() + 1) {
        throw InvalidConfiguration("IO-HMM action dim " + std::to_string(hmm.action_dim) + " does not fit poses of dim " +
                                   std::to_string(map.dim()));
    }
    if (disc.window == 0) throw InvalidConfiguration("discriminator window length is zero");
    hmm.validate();
}

Agent::Agent(const Models& models, AgentConfig cfg, std::uint64_t seed)
    : models_(&models), cfg_(std::move(cfg)), seed_(seed) {
    models.check();
    cfg_.fep.validate();
    if (cfg_.perlin_amplitude < 0.0) throw InvalidConfiguration("perlin amplitude must be nonnegative");
    node_ = pick_start();
    idle_ = models.map.nodes[roadmap::most_visited_node(models.map)];
}

std::size_t Agent::pick_start() {
    const auto& map = models_->map;
    std::vector<std::size_t> pool;
    for (std::size_t s : map.start_nodes) {
        if (!map.terminal(s)) pool.push_back(s);
    }
    if (pool.empty()) {
        for (std::size_t i = 0; i < map.size(); ++i) {
            if (!map.terminal(i)) pool.push_back(i);
        }
    }
    if (pool.empty()) throw DeadEnd("roadmap has no node with outgoing edges");
    Rng rng = make_rng(seed_, 1000000 + resets_++);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    return pool[pick(rng)];
}

void Agent::plan() {
    const auto& map = models_->map;
    const std::size_t horizon = cfg_.fep.horizon;
    const std::size_t keep = cfg_.replan_every == 0 ? horizon : std::min(cfg_.replan_every, horizon);
    const std::uint64_t plan_seed = mix_seed(seed_, plans_++);
    plan_poses_.clear();
    plan_nodes_.clear();
    plan_free_energy_.reset();

    if (cfg_.method == Method::perlin) {
        for (std::size_t k = 0; k < keep; ++k) {
            const double t = static_cast<double>(tick_ + k) / map.frame_rate_hz;
            plan_poses_.push_back(
                policy::perlin_motion(idle_, cfg_.perlin_amplitude, cfg_.perlin_frequency_hz, t, seed_));
        }
        return;
    }

    roadmap::ActionSequence seq;
    for (int attempt = 0;; ++attempt) {
        try {
            if (cfg_.method == Method::fep) {
                const auto belief = tick_ == 0
                                        ? iohmm::prior_belief(models_->hmm, roadmap::action_features(map.nodes[node_]))
                                        : belief_;
                auto sel = policy::select_action(models_->hmm, belief.probabilities, map, node_, cfg_.fep, plan_seed,
                                                 prev_node_);
                pending_candidates_.clear();
                for (const auto& c : sel.scored) pending_candidates_.push_back(c.free_energy);
                plan_free_energy_ = sel.scored[sel.index].free_energy;
                seq = std::move(sel.chosen);
            } else {
                seq = policy::random_prm_motion(map, node_, horizon, plan_seed, prev_node_);
            }
            break;
        } catch (const DeadEnd&) {
            if (attempt >= 8) throw;
            node_ = pick_start();
            prev_node_.reset();
        }
    }
    for (std::size_t k = 0; k < keep; ++k) {
        plan_poses_.push_back(seq.poses[k]);
        plan_nodes_.push_back(seq.nodes[k]);
    }
}

TickRecord Agent::step(const PoseVector& partner_pose) {
    const auto& models = *models_;
    if (partner_pose.size() != models.dim()) {
        throw InvalidArgument("partner pose has " + std::to_string(partner_pose.size()) + " values, expected " +
                              std::to_string(models.dim()));
    }
    if (plan_poses_.empty()) plan();

    TickRecord rec;
    rec.tick = tick_;
    rec.method = cfg_.method;
    rec.agent = plan_poses_.front();
    plan_poses_.pop_front();
    if (!plan_nodes_.empty()) {
        prev_node_ = node_;
        node_ = plan_nodes_.front();
        plan_nodes_.pop_front();
        rec.node = node_;
    }
    rec.chosen_free_energy = plan_free_energy_;
    rec.candidate_free_energies = std::move(pending_candidates_);
    pending_candidates_.clear();

    const std::size_t window = models.window();
    agent_buf_.push_back(rec.agent);
    partner_buf_.push_back(partner_pose);
    if (agent_buf_.size() > window) {
        agent_buf_.pop_front();
        partner_buf_.pop_front();
    }

    const auto a = roadmap::action_features(rec.agent);
    if (agent_buf_.size() == window) {
        InteractionWindow w;
        w.agent.assign(agent_buf_.begin(), agent_buf_.end());
        w.partner.assign(partner_buf_.begin(), partner_buf_.end());
        const double s = discriminator::score(models.disc, w);
        const int o = s >= discriminator::kThreshold ? 1 : 0;
        rec.disc_score = s;
        rec.o = o;
        belief_ = tick_ > 0 ? iohmm::forward_update(models.hmm, belief_, a, o) : iohmm::initial_belief(models.hmm, a, o);
    } else if (tick_ == 0) {
        belief_ = iohmm::prior_belief(models.hmm, a);
    } else {
        belief_.probabilities = iohmm::predict_step(models.hmm, belief_.probabilities, a);
    }
    rec.belief = belief_.probabilities;
    ++tick_;
    return rec;
}

EpisodeReport run_episode(const Models& models, const PoseSequence& partner, const EpisodeConfig& cfg,
                          std::uint64_t seed) {
    models.check();
    if (partner.dim() != models.dim()) {
        throw InvalidConfiguration("partner pose dim " + std::to_string(partner.dim()) + " differs from model dim " +
                                   std::to_string(models.dim()));
    }
    if (partner.size() < models.window() + cfg.agent.fep.horizon) {
        throw InvalidArgument("partner stream shorter than window plus horizon");
    }
    if (cfg.ticks > partner.size()) {
        throw InvalidArgument("episode of " + std::to_string(cfg.ticks) + " ticks needs that many partner frames, got " +
                              std::to_string(partner.size()));
    }
    Agent agent(models, cfg.agent, seed);
    EpisodeReport rep;
    rep.method = cfg.agent.method;
    rep.log.reserve(cfg.ticks);
    for (std::size_t t = 0; t < cfg.ticks; ++t) rep.log.push_back(agent.step(partner.frames[t]));
    const auto summary = report_from_log(rep.log);
    rep.scores = summary.scores;
    rep.mean_score = summary.mean_score;
    rep.intensity = summary.intensity;
    rep.ticks = summary.ticks;
    return rep;
}

EpisodeReport report_from_log(const std::vector<TickRecord>& log) {
    EpisodeReport rep;
    if (!log.empty()) rep.method = log.front().method;
    rep.ticks = log.size();
    for (const auto& r : log) {
        if (r.disc_score) rep.scores.push_back(*r.disc_score);
    }
    if (!rep.scores.empty()) {
        rep.mean_score = std::accumulate(rep.scores.begin(), rep.scores.end(), 0.0) /
                         static_cast<double>(rep.scores.size());
    }
    double moved = 0.0;
    for (std::size_t t = 1; t < log.size(); ++t) {
        double sq = 0.0;
        for (std::size_t k = 0; k < log[t].agent.size(); ++k) {
            const double d = log[t].agent[k] - log[t - 1].agent[k];
            sq += d * d;
        }
        moved += std::sqrt(sq);
    }
    if (log.size() > 1) rep.intensity = moved / static_cast<double>(log.size() - 1);
    return rep;
}

std::string to_json_line(const TickRecord& r) {
    ordered_json j;
    j["tick"] = r.tick;
    j["method"] = to_string(r.method);
    j["node"] = r.node ? ordered_json(*r.node) : ordered_json(nullptr);
    j["agent"] = r.agent;
    j["belief"] = r.belief;
    j["chosen_F"] = r.chosen_free_energy ? ordered_json(*r.chosen_free_energy) : ordered_json(nullptr);
    j["candidate_Fs"] = r.candidate_free_energies;
    j["disc_score"] = r.disc_score ? ordered_json(*r.disc_score) : ordered_json(nullptr);
    j["o"] = r.o ? ordered_json(*r.o) : ordered_json(nullptr);
    return j.dump();
}

std::string to_jsonl(const std::vector<TickRecord>& log) {
    std::string out;
    for (const auto& r : log) {
        out += to_json_line(r);
        out += '\n';
    }
    return out;
}

TickRecord tick_from_json_line(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        TickRecord r;
        r.tick = j.at("tick").get<std::size_t>();
        r.method = method_from_string(j.value("method", std::string("fep")));
        if (!j.at("node").is_null()) r.node = j["node"].get<std::size_t>();
        r.agent = j.value("agent", std::vector<double>{});
        r.belief = j.at("belief").get<std::vector<double>>();
        if (!j.at("chosen_F").is_null()) r.chosen_free_energy = j["chosen_F"].get<double>();
        r.candidate_free_energies = j.at("candidate_Fs").get<std::vector<double>>();
        if (!j.at("disc_score").is_null()) r.disc_score = j["disc_score"].get<double>();
        if (!j.at("o").is_null()) r.o = j["o"].get<int>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed episode log line: ") + e.what());
    }
}

namespace {

std::vector<double> midranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

MannWhitney mann_whitney_u(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.empty() || y.empty()) throw InvalidArgument("Mann-Whitney U needs two non-empty samples");
    const std::size_t nx = x.size(), ny = y.size(), n = nx + ny;
    std::vector<double> all(x);
    all.insert(all.end(), y.begin(), y.end());
    const auto ranks = midranks(all);
    const double rx = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(nx), 0.0);
    const double base = static_cast<double>(nx) * static_cast<double>(nx + 1) / 2.0;
    const double prod = static_cast<double>(nx) * static_cast<double>(ny);
    const double mean = prod / 2.0;

    MannWhitney res;
    res.u_x = rx - base;
    res.u_y = prod - res.u_x;

    if (n <= kExactMaxTotal) {
        // Every assignment of nx of the pooled ranks to x is equally likely.
        // Midrank sums are multiples of 1/2, so the comparisons are exact.
        res.exact = true;
        const double dev = std::abs(res.u_x - mean);
        std::size_t total = 0, two = 0, ge = 0, le = 0;
        std::vector<bool> pick(n, false);
        std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(nx), true);
        do {
            double r = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (pick[i]) r += ranks[i];
            }
            const double u = r - base;
            ++total;
            if (std::abs(u - mean) >= dev) ++two;
            if (u >= res.u_x) ++ge;
            if (u <= res.u_x) ++le;
        } while (std::prev_permutation(pick.begin(), pick.end()));
        const auto t = static_cast<double>(total);
        res.p_two_sided = static_cast<double>(two) / t;
        res.p_greater = static_cast<double>(ge) / t;
        res.p_less = static_cast<double>(le) / t;
        return res;
    }

    std::vector<double> sorted(all);
    std::sort(sorted.begin(), sorted.end());
    double ties = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && sorted[j] == sorted[i]) ++j;
        const auto tcount = static_cast<double>(j - i);
        ties += tcount * tcount * tcount - tcount;
        i = j;
    }
    const auto nn = static_cast<double>(n);
    const double var = prod / 12.0 * ((nn + 1.0) - ties / (nn * (nn - 1.0)));
    if (var <= 0.0) return res;  // every value tied
    const double sd = std::sqrt(var);
    res.p_greater = upper_tail((res.u_x - mean - 0.5) / sd);
    res.p_less = 1.0 - upper_tail((res.u_x - mean + 0.5) / sd);
    res.p_two_sided = std::min(1.0, 2.0 * upper_tail((std::abs(res.u_x - mean) - 0.5) / sd));
    return res;
}

Summary summarize(std::vector<double> values) {
    if (values.empty()) throw InvalidArgument("cannot summarize an empty sample");
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    return {quantile(0.5), quantile(0.25), quantile(0.75)};
}

std::vector<Comparison> compare_methods(const std::map<std::string, std::vector<EpisodeReport>>& reports) {
    if (reports.size() < 2) throw InvalidArgument("comparison needs at least two methods");
    for (const auto& [name, list] : reports) {
        if (list.size() < 3) throw InvalidArgument("method '" + name + "' has fewer than 3 episodes");
    }
    auto column = [](const std::vector<EpisodeReport>& list, bool score) {
        std::vector<double> v;
        for (const auto& r : list) v.push_back(score ? r.mean_score : r.intensity);
        return v;
    };
    std::vector<Comparison> rows;
    for (auto i = reports.begin(); i != reports.end(); ++i) {
        for (auto j = std::next(i); j != reports.end(); ++j) {
            Comparison c;
            c.a = i->first;
            c.b = j->first;
            const auto sa = column(i->second, true), sb = column(j->second, true);
            const auto ia = column(i->second, false), ib = column(j->second, false);
            c.score_a = summarize(sa);
            c.score_b = summarize(sb);
            c.score_test = mann_whitney_u(sa, sb);
            c.intensity_a = summarize(ia);
            c.intensity_b = summarize(ib);
            c.intensity_test = mann_whitney_u(ia, ib);
            rows.push_back(std::move(c));
        }
    }
    return rows;
}

}  // namespace fep::arena
