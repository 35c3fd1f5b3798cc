#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace specdec {

using TokenId = int32_t;

// Error taxonomy. Everything thrown by the library derives from Error so the
// CLI can map failures to a nonzero exit with one catch.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration (bad dimensions, bad flag combinations).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

// A sequence or cache would exceed its fixed capacity.
struct CapacityError : Error {
    explicit CapacityError(const std::string& msg) : Error("capacity: " + msg) {}
};

// Caller broke an API precondition (mismatched lengths, out-of-range index).
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error("contract: " + msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io: " + msg) {}
};

#define SPECDEC_CHECK(cond, err_type, msg)      \
    do {                                        \
        if (!(cond)) throw err_type(msg);       \
    } while (0)

}  // namespace specdec
