#ifndef DECAYLAB_ERRORS_HPP
#define DECAYLAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace decaylab
{
// Bad input: malformed parameters, out-of-domain arguments, unparseable files.
// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// A numerical procedure failed to reach its tolerance (truncation, quadrature,
// root finding, eigenpair extrapolation). The CLI maps this to exit code 2.
class NumericError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

} // namespace decaylab

#endif // DECAYLAB_ERRORS_HPP
