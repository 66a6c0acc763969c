#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crisp {

/// Base of every exception thrown by the library.
struct Error : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

/// Malformed graph: cycles, dangling inputs, bad scopes.
struct StructuralError : Error { using Error::Error; };

/// Non-finite parameters, features, or losses.
struct NumericError : Error { using Error::Error; };

/// Arguments outside an operation's domain.
struct InvalidInput : Error { using Error::Error; };

/// A query needs a structural property the circuit does not have.
struct PropertyViolation : Error { using Error::Error; };

/// Parameter vector breaks a precondition (e.g. an unnormalized sum block).
struct PreconditionError : Error { using Error::Error; };

/// Two circuits cannot be multiplied because their scopes decompose differently.
struct CompatibilityError : Error { using Error::Error; };

/// A constraint leaves no assignment with nonzero mass.
struct UnsatisfiableError : Error { using Error::Error; };

/// Bad run configuration (unknown keys, missing fields, dimension mismatch).
struct ConfigError : Error { using Error::Error; };

/// Loss became infinite on a specific example.
struct InfiniteLossError : NumericError
{
    InfiniteLossError(std::size_t index, const std::string &what)
        : NumericError(what), example_index(index) { }
    std::size_t example_index;
};

/// Training produced a non-finite loss.
struct DivergenceError : NumericError
{
    DivergenceError(std::size_t at_step, const std::string &what)
        : NumericError(what), step(at_step) { }
    std::size_t step;
};

}
