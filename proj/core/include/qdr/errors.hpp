// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_ERRORS_HPP
#define QDR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace qdr {

/// Malformed on-disk data: bad magic, truncation, inconsistent header.
/// The message names the offending field or byte offset.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Caller violated a precondition (bad shapes, non-finite input, ...).
class InvalidInput : public std::invalid_argument {
public:
    explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

} // namespace qdr

#endif
