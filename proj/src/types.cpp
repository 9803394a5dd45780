#include "fepagent/types.hpp"

#include "fepagent/error.hpp"

namespace fep {

std::string to_string(Person p) {
    return p == Person::agent_side ? "agent_side" : "partner_side";
}

Person person_from_string(const std::string& s) {
    if (s == "agent_side" || s == "agent") return Person::agent_side;
    if (s == "partner_side" || s == "partner") return Person::partner_side;
    throw InvalidArgument("unknown person '" + s + "'");
}

}  // namespace fep
