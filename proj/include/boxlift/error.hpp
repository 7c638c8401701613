#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace boxlift {

/// Tensor/feature dimensions do not line up (channel or spatial mismatch).
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid configuration value (grid, schema, pooling ratio, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed wire bytes or out-of-range code.
struct DecodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Text input could not be parsed; carries the 1-based line number.
struct ParseError : std::runtime_error {
    int line;
    ParseError(const std::string& msg, int line_no)
        : std::runtime_error("line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
};

/// Total transmitted bits exceeded the communication budget.
struct BudgetError : std::runtime_error {
    std::size_t budget_bits;
    std::size_t used_bits;
    std::vector<std::pair<std::string, std::size_t>> bytes_per_agent;

    BudgetError(std::size_t budget, std::size_t used,
                std::vector<std::pair<std::string, std::size_t>> breakdown)
        : std::runtime_error(format(budget, used, breakdown)),
          budget_bits(budget),
          used_bits(used),
          bytes_per_agent(std::move(breakdown)) {}

  private:
    static std::string format(std::size_t budget, std::size_t used,
                              const std::vector<std::pair<std::string, std::size_t>>& bd) {
        std::string s = "communication budget exceeded: " + std::to_string(used) +
                        " bits > " + std::to_string(budget) + " bits (";
        for (std::size_t i = 0; i < bd.size(); ++i) {
            if (i) s += ", ";
            s += bd[i].first + "=" + std::to_string(bd[i].second) + "B";
        }
        s += ")";
        return s;
    }
};

}  // namespace boxlift
