#pragma once

#include <stdexcept>
#include <string>

namespace qceat {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input file or config.
struct ParseError : Error {
    using Error::Error;
};

}  // namespace qceat
