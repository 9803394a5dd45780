#include "fepagent/roadmap.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include "fepagent/error.hpp"
#include "fepagent/kernels/roadmap_kernels.hpp"
#include "fepagent/random.hpp"

namespace fep::roadmap {

KinematicBound fit_kinematic_bound(const std::vector<PoseSequence>& sequences) {
    if (sequences.empty()) throw InvalidDataset("no sequences to fit a kinematic bound on");
    const std::size_t d = sequences.front().dim();
    KinematicBound b;
    b.max_speed.assign(d, 0.0);
    std::vector<double> xs, ys;
    for (const auto& seq : sequences) {
        if (seq.size() < 3) throw InvalidDataset("kinematic fit needs sequences of at least 3 frames");
        if (seq.dim() != d) throw InvalidDataset("sequences differ in pose dimension");
        const double r = seq.rate_hz;
        for (std::size_t t = 1; t < seq.size(); ++t) {
            for (std::size_t j = 0; j < d; ++j) {
                const double v = (seq.frames[t][j] - seq.frames[t - 1][j]) * r;
                b.max_speed[j] = std::max(b.max_speed[j], std::abs(v));
                if (t < 2) continue;
                const double v_prev = (seq.frames[t - 1][j] - seq.frames[t - 2][j]) * r;
                xs.push_back(std::abs(v));
                ys.push_back(std::abs((v - v_prev) * r));
            }
        }
    }
    if (xs.size() < 10) throw InvalidDataset("kinematic fit needs at least 10 samples");
    b.samples = xs.size();

    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
    }
    b.slope = sxx > 0.0 ? std::max(0.0, sxy / sxx) : 0.0;
    double lift = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) lift = std::max(lift, ys[k] - b.slope * xs[k]);
    b.intercept = lift;
    return b;
}

bool step_feasible(const KinematicBound& bound, double rate_hz, const PoseVector* prev, const PoseVector& cur,
                   const PoseVector& next, double slack) {
    const double grow = 1.0 + slack;
    // Relative round-off allowance so recorded transitions always pass.
    constexpr double fuzz = 1e-9;
    for (std::size_t j = 0; j < cur.size(); ++j) {
        const double v = (next[j] - cur[j]) * rate_hz;
        const double vmax = bound.max_speed[j] * grow;
        if (std::abs(v) > vmax + fuzz * (1.0 + vmax)) return false;
        if (prev != nullptr) {
            const double w = (v - (cur[j] - (*prev)[j]) * rate_hz) * rate_hz;
            const double wmax = bound.accel_limit(std::abs(v)) * grow;
            if (std::abs(w) > wmax + fuzz * (1.0 + wmax)) return false;
        }
    }
    return true;
}

std::size_t Roadmap::edge_count() const {
    std::size_t n = 0;
    for (const auto& e : out) n += e.size();
    return n;
}

namespace {

double squared_distance(const PoseVector& a, const PoseVector& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

struct CellHash {
    std::size_t operator()(const std::vector<long long>& key) const {
        std::uint64_t h = 1469598103934665603ULL;
        for (long long v : key) h = mix_seed(h, static_cast<std::uint64_t>(v));
        return static_cast<std::size_t>(h);
    }
};

}  // namespace

Fusing fuse_frames(const std::vector<PoseVector>& frames, double eps, FuseStrategy strategy) {
    if (eps < 0.0) throw InvalidArgument("fuse_eps must be nonnegative");
    Fusing f;
    f.assignment.resize(frames.size());
    if (frames.empty()) return f;
    const std::size_t d = frames.front().size();
    const double eps2 = eps * eps;

    // 3^d neighbour cells; past that a linear scan is cheaper.
    const bool use_grid = strategy == FuseStrategy::grid && eps > 0.0 && d <= 12;
    std::unordered_map<std::vector<long long>, std::vector<std::size_t>, CellHash> grid;
    auto cell_of = [&](const PoseVector& p) {
        std::vector<long long> key(d);
        for (std::size_t k = 0; k < d; ++k) key[k] = static_cast<long long>(std::floor(p[k] / eps));
        return key;
    };

    for (std::size_t t = 0; t < frames.size(); ++t) {
        const PoseVector& p = frames[t];
        std::size_t best = f.nodes.size();
        double best_d2 = eps2;
        auto consider = [&](std::size_t node) {
            const double d2 = squared_distance(p, f.nodes[node]);
            if (d2 < best_d2 || (d2 == best_d2 && d2 < eps2 && node < best)) {
                best = node;
                best_d2 = d2;
            }
        };
        if (eps > 0.0) {
            if (use_grid) {
                const auto home = cell_of(p);
                std::vector<long long> key(d);
                std::size_t total = 1;
                for (std::size_t k = 0; k < d; ++k) total *= 3;
                for (std::size_t code = 0; code < total; ++code) {
                    std::size_t c = code;
                    for (std::size_t k = 0; k < d; ++k) {
                        key[k] = home[k] + static_cast<long long>(c % 3) - 1;
                        c /= 3;
                    }
                    auto it = grid.find(key);
                    if (it == grid.end()) continue;
                    for (std::size_t node : it->second) consider(node);
                }
            } else {
                for (std::size_t node = 0; node < f.nodes.size(); ++node) consider(node);
            }
        }
        if (best == f.nodes.size()) {
            f.nodes.push_back(p);
            if (use_grid) grid[cell_of(p)].push_back(best);
        }
        f.assignment[t] = best;
    }
    return f;
}

Roadmap build_roadmap(const std::vector<PoseSequence>& sequences, const KinematicBound& bound,
                      const BuildConfig& cfg) {
    if (sequences.empty()) throw InvalidDataset("no sequences to build a roadmap from");
    if (cfg.lambda < 0.0) throw InvalidArgument("lambda must be nonnegative");
    const std::size_t d = sequences.front().dim();
    if (bound.max_speed.size() != d) throw InvalidArgument("kinematic bound dimension mismatch");

    std::vector<PoseVector> frames;
    for (const auto& s : sequences) {
        if (s.size() == 0) throw InvalidDataset("empty sequence");
        if (s.dim() != d) throw InvalidDataset("sequences differ in pose dimension");
        if (s.rate_hz != sequences.front().rate_hz) throw InvalidDataset("sequences differ in frame rate");
        frames.insert(frames.end(), s.frames.begin(), s.frames.end());
    }
    auto fused = fuse_frames(frames, cfg.fuse_eps, FuseStrategy::grid);

    Roadmap map;
    map.frame_rate_hz = sequences.front().rate_hz;
    map.bound = bound;
    map.nodes = std::move(fused.nodes);
    const std::size_t n = map.nodes.size();
    map.provenance.assign(n, 0);
    for (auto a : fused.assignment) ++map.provenance[a];

    std::vector<std::map<std::size_t, std::size_t>> counts(n);
    std::vector<std::vector<std::size_t>> preds(n);
    std::size_t offset = 0;
    for (const auto& s : sequences) {
        std::vector<std::size_t> tr(fused.assignment.begin() + static_cast<std::ptrdiff_t>(offset),
                                    fused.assignment.begin() + static_cast<std::ptrdiff_t>(offset + s.size()));
        offset += s.size();
        if (std::find(map.start_nodes.begin(), map.start_nodes.end(), tr.front()) == map.start_nodes.end()) {
            map.start_nodes.push_back(tr.front());
        }
        for (std::size_t t = 1; t < tr.size(); ++t) {
            ++counts[tr[t - 1]][tr[t]];
            auto& p = preds[tr[t]];
            if (std::find(p.begin(), p.end(), tr[t - 1]) == p.end()) p.push_back(tr[t - 1]);
        }
        map.trace.push_back(std::move(tr));
    }

    std::vector<std::vector<std::size_t>> chain(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& [to, c] : counts[i]) chain[i].push_back(to);
        std::sort(preds[i].begin(), preds[i].end());
    }
    std::vector<std::vector<std::size_t>> extra(n);
    if (cfg.lambda > 0.0) {
        extra = kernels::feasible_successors(map.nodes, preds, chain, bound, map.frame_rate_hz,
                                             cfg.max_feasibility_edges, cfg.exec);
    }

    map.out.assign(n, {});
    map.idle.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        double total = cfg.lambda * static_cast<double>(extra[i].size());
        for (const auto& [to, c] : counts[i]) total += static_cast<double>(c);
        if (total <= 0.0) continue;
        for (const auto& [to, c] : counts[i]) map.out[i].push_back({to, static_cast<double>(c) / total, true});
        for (std::size_t to : extra[i]) map.out[i].push_back({to, cfg.lambda / total, false});
        std::sort(map.out[i].begin(), map.out[i].end(),
                  [](const Edge& a, const Edge& b) { return a.to < b.to; });
        map.idle[i] = map.out[i].size() == 1 && map.out[i].front().to == i;
    }
    return map;
}

std::string to_string(Source s) {
    switch (s) {
        case Source::fep: return "fep";
        case Source::random_prm: return "random_prm";
        case Source::perlin: return "perlin";
        case Source::replay: return "replay";
    }
    return "unknown";
}

Source source_from_string(const std::string& s) {
    for (auto v : {Source::fep, Source::random_prm, Source::perlin, Source::replay}) {
        if (to_string(v) == s) return v;
    }
    throw InvalidArgument("unknown motion source '" + s + "'");
}

namespace {

std::optional<std::vector<std::size_t>> try_walk(const Roadmap& map, std::size_t start,
                                                 std::optional<std::size_t> previous, std::size_t horizon,
                                                 Rng& rng) {
    std::vector<std::size_t> path;
    path.reserve(horizon);
    std::size_t cur = start;
    std::optional<std::size_t> prev = previous;
    std::vector<const Edge*> options;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t k = 0; k < horizon; ++k) {
        options.clear();
        double mass = 0.0;
        for (const Edge& e : map.out[cur]) {
            const PoseVector* p = prev ? &map.nodes[*prev] : nullptr;
            if (!step_feasible(map.bound, map.frame_rate_hz, p, map.nodes[cur], map.nodes[e.to])) continue;
            options.push_back(&e);
            mass += e.prob;
        }
        if (options.empty() || mass <= 0.0) return std::nullopt;
        const double u = unit(rng) * mass;
        double acc = 0.0;
        std::size_t next = options.back()->to;
        for (const Edge* e : options) {
            acc += e->prob;
            if (u < acc) {
                next = e->to;
                break;
            }
        }
        path.push_back(next);
        prev = cur;
        cur = next;
    }
    return path;
}

}  // namespace

std::vector<ActionSequence> sample_sequences(const Roadmap& map, std::size_t start_node, std::size_t horizon,
                                             std::size_t count, std::uint64_t rng_seed,
                                             std::optional<std::size_t> previous, Exec exec) {
    if (start_node >= map.size()) throw InvalidArgument("start node out of range");
    if (previous && *previous >= map.size()) throw InvalidArgument("previous node out of range");
    if (horizon == 0 || count == 0) throw InvalidArgument("horizon and candidate count must be positive");
    if (map.terminal(start_node)) {
        throw DeadEnd("node " + std::to_string(start_node) + " has no outgoing edges");
    }
    std::vector<ActionSequence> out(count);
    for_each_index(count, exec, [&](std::size_t m) {
        Rng rng = make_rng(rng_seed, m);
        for (std::size_t attempt = 0; attempt < kMaxWalkAttempts; ++attempt) {
            auto path = try_walk(map, start_node, previous, horizon, rng);
            if (!path) continue;
            ActionSequence& seq = out[m];
            seq.source = Source::random_prm;
            seq.nodes = std::move(*path);
            for (std::size_t node : seq.nodes) seq.poses.push_back(map.nodes[node]);
            return;
        }
        throw DeadEnd("no feasible walk of " + std::to_string(horizon) + " steps from node " +
                      std::to_string(start_node));
    });
    return out;
}

std::vector<double> action_features(const PoseVector& pose) {
    std::vector<double> a(pose);
    a.push_back(1.0);
    return a;
}

std::vector<std::vector<double>> sequence_to_actions(const ActionSequence& seq) {
    std::vector<std::vector<double>> out;
    out.reserve(seq.poses.size());
    for (const auto& p : seq.poses) out.push_back(action_features(p));
    return out;
}

std::size_t most_visited_node(const Roadmap& map) {
    if (map.size() == 0) throw InvalidArgument("empty roadmap");
    return static_cast<std::size_t>(
        std::distance(map.provenance.begin(), std::max_element(map.provenance.begin(), map.provenance.end())));
}

}  // namespace fep::roadmap
