#ifndef QUANTMERGE_ERRORS_HPP
#define QUANTMERGE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace quantmerge {

/// Malformed or inconsistent input data (bad rows, missing columns, ...).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A contract of the library was violated by the caller or internally.
struct InvariantError : std::logic_error {
    explicit InvariantError(const std::string& msg) : std::logic_error(msg) {}
};

/// Skill score with a zero reference score; callers are expected to
/// treat the affected entry as "undefined" rather than a number.
struct UndefinedSkillError : std::domain_error {
    explicit UndefinedSkillError(const std::string& msg) : std::domain_error(msg) {}
};

}  // namespace quantmerge

#endif  // QUANTMERGE_ERRORS_HPP
