#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fepagent/arena.hpp"
#include "fepagent/discriminator.hpp"
#include "fepagent/iohmm.hpp"
#include "fepagent/policy.hpp"
#include "fepagent/roadmap.hpp"
#include "fepagent/types.hpp"

// File formats. Everything is JSON except plain pose tables, which may
// also be CSV (one frame per row, optional header line).
namespace fep::io {

using Json = nlohmann::json;

// Throws Error naming the path when the file cannot be opened or parsed.
Json load_json(const std::string& path);
void save_json(const std::string& path, const Json& j);
std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

Json to_json(const PoseSequence& seq);
Json to_json(const Recording& rec);
PoseSequence sequence_from_json(const Json& j, Person fallback = Person::partner_side);
Recording recording_from_json(const Json& j);
bool is_recording(const Json& j);

// A single pose sequence from .json or .csv. A recording file yields the
// stream of `person`.
PoseSequence read_sequence(const std::string& path, Person person = Person::partner_side, double csv_rate_hz = 8.0);
Recording read_recording(const std::string& path);
PoseSequence parse_csv(const std::string& text, double rate_hz);
std::string to_csv(const PoseSequence& seq);

Json to_json(const discriminator::ClassifierParams& p);
discriminator::ClassifierParams classifier_from_json(const Json& j);

Json to_json(const roadmap::Roadmap& map);
roadmap::Roadmap roadmap_from_json(const Json& j);

Json to_json(const iohmm::Params& p, const iohmm::TrainingTrace* trace = nullptr);
iohmm::Params hmm_from_json(const Json& j);

Json to_json(const iohmm::Belief& b);
iohmm::Belief belief_from_json(const Json& j);

Json to_json(const policy::FepConfig& cfg);
policy::FepConfig fep_config_from_json(const Json& j);

Json to_json(const roadmap::ActionSequence& seq);
Json to_json(const policy::Selection& sel);

std::vector<int> observations_from_json(const Json& j);
std::vector<iohmm::Action> actions_from_json(const Json& j);

arena::Models load_models(const std::string& disc_path, const std::string& map_path, const std::string& hmm_path);

}  // namespace fep::io
