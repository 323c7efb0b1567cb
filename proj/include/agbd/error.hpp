#pragma once

#include <stdexcept>
#include <string>

namespace agbd {

// Every toolkit failure surfaces as an Error whose message is qualified by
// the subsystem it came from, e.g. "grid: row 2: expected 2 values, got 1".
class Error : public std::runtime_error {
public:
    Error(const std::string& module, const std::string& message)
        : std::runtime_error(module + ": " + message) {}
};

}  // namespace agbd
