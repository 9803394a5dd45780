#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace fep {

using Vec = std::vector<double>;

// One posture. Joint angles or flattened keypoints; the library treats both
// as an opaque d-dimensional real vector.
using PoseVector = std::vector<double>;

enum class Person { agent_side, partner_side };

std::string to_string(Person p);
Person person_from_string(const std::string& s);

struct PoseSequence {
    std::vector<PoseVector> frames;
    double rate_hz = 8.0;
    Person person = Person::agent_side;

    std::size_t size() const { return frames.size(); }
    std::size_t dim() const { return frames.empty() ? 0 : frames.front().size(); }
    double duration() const {
        return frames.size() < 2 ? 0.0 : static_cast<double>(frames.size() - 1) / rate_hz;
    }
};

// Paired agent/partner streams recorded together at a common rate.
struct Recording {
    PoseSequence agent;
    PoseSequence partner;

    std::size_t size() const { return agent.size() < partner.size() ? agent.size() : partner.size(); }
    std::size_t dim() const { return agent.dim(); }
    double rate_hz() const { return agent.rate_hz; }
};

// Where a window was cut from; needed to manufacture time-shifted negatives.
struct WindowOrigin {
    std::size_t recording = 0;
    std::size_t start = 0;  // first frame index, window covers [start, start + L)
};

struct InteractionWindow {
    std::vector<PoseVector> agent;
    std::vector<PoseVector> partner;
    std::optional<int> label;  // 1 = real interaction, 0 = decoupled fake
    std::optional<WindowOrigin> origin;

    std::size_t length() const { return agent.size(); }
    std::size_t dim() const { return agent.empty() ? 0 : agent.front().size(); }
};

}  // namespace fep
