#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fepagent/discriminator.hpp"
#include "fepagent/exec.hpp"
#include "fepagent/iohmm.hpp"
#include "fepagent/policy.hpp"
#include "fepagent/roadmap.hpp"
#include "fepagent/types.hpp"

// Closed-loop simulator: an agent answers a partner stream tick by tick, the
// discriminator judges the joint window and the IO-HMM belief follows.
namespace fep::arena {

enum class Method { fep, random_prm, perlin };
std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct Models {
    discriminator::ClassifierParams disc;
    roadmap::Roadmap map;
    iohmm::Params hmm;

    std::size_t dim() const { return map.dim(); }
    std::size_t window() const { return disc.window; }
    // Throws InvalidConfiguration when the three models disagree on shape.
    void check() const;
};

struct AgentConfig {
    Method method = Method::fep;
    policy::FepConfig fep;
    std::size_t replan_every = 0;  // ticks between plans, 0 means the horizon
    double perlin_amplitude = 0.05;
    double perlin_frequency_hz = 0.5;
};

struct TickRecord {
    std::size_t tick = 0;
    Method method = Method::fep;
    std::optional<std::size_t> node;  // none for perlin
    PoseVector agent;
    std::vector<double> belief;
    std::optional<double> chosen_free_energy;
    std::vector<double> candidate_free_energies;  // filled on planning ticks only
    std::optional<double> disc_score;  // none until the window buffer is full
    std::optional<int> o;
};

// One live session. Shared by run_episode and the streaming gateway.
class Agent {
public:
    Agent(const Models& models, AgentConfig cfg, std::uint64_t seed);

    // Emits the agent pose for this tick, appends both poses to the window
    // buffer, scores it once full and updates the belief.
    TickRecord step(const PoseVector& partner_pose);

    std::size_t tick() const { return tick_; }
    const iohmm::Distribution& belief() const { return belief_.probabilities; }
    std::size_t buffered() const { return agent_buf_.size(); }

private:
    void plan();
    std::size_t pick_start();

    const Models* models_;
    AgentConfig cfg_;
    std::uint64_t seed_;
    std::size_t tick_ = 0;
    std::size_t plans_ = 0;
    std::size_t resets_ = 0;

    std::size_t node_ = 0;
    std::optional<std::size_t> prev_node_;
    PoseVector idle_;

    std::deque<PoseVector> plan_poses_;
    std::deque<std::size_t> plan_nodes_;
    std::optional<double> plan_free_energy_;
    std::vector<double> pending_candidates_;

    iohmm::Belief belief_;
    std::deque<PoseVector> agent_buf_;
    std::deque<PoseVector> partner_buf_;
};

struct EpisodeConfig {
    AgentConfig agent;
    std::size_t ticks = 500;
};

struct EpisodeReport {
    Method method = Method::fep;
    std::vector<double> scores;  // one per tick with a full window
    double mean_score = 0.0;
    double intensity = 0.0;      // mean per-tick L2 displacement of the agent pose
    std::size_t ticks = 0;
    std::vector<TickRecord> log;
};

EpisodeReport run_episode(const Models& models, const PoseSequence& partner, const EpisodeConfig& cfg,
                          std::uint64_t seed);

// One JSON object per line, fixed key order and number formatting.
std::string to_json_line(const TickRecord& r);
std::string to_jsonl(const std::vector<TickRecord>& log);
TickRecord tick_from_json_line(const std::string& line);

struct MannWhitney {
    double u_x = 0.0;
    double u_y = 0.0;
    double p_two_sided = 1.0;
    double p_greater = 1.0;  // H1: x tends to exceed y
    double p_less = 1.0;
    bool exact = false;
};

inline constexpr std::size_t kExactMaxTotal = 12;

// Midranks for ties. Exact permutation distribution of U when
// n_x + n_y <= kExactMaxTotal, otherwise the normal approximation with tie and
// continuity corrections.
MannWhitney mann_whitney_u(const std::vector<double>& x, const std::vector<double>& y);

struct Summary {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
};
Summary summarize(std::vector<double> values);

struct Comparison {
    std::string a;
    std::string b;
    Summary score_a;
    Summary score_b;
    MannWhitney score_test;  // x = a, y = b
    Summary intensity_a;
    Summary intensity_b;
    MannWhitney intensity_test;
};

// Pairwise tests on per-episode mean scores and intensities, one row per
// unordered method pair. Needs two methods with three episodes each.
std::vector<Comparison> compare_methods(const std::map<std::string, std::vector<EpisodeReport>>& reports);

// Per-episode (mean score, intensity) recovered from a JSON-lines log.
EpisodeReport report_from_log(const std::vector<TickRecord>& log);

}  // namespace fep::arena
