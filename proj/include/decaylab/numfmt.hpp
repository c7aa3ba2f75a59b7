#ifndef DECAYLAB_NUMFMT_HPP
#define DECAYLAB_NUMFMT_HPP

#include <string>
#include <string_view>

namespace decaylab
{
// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

// Whole-string parse; throws ValidationError naming `what` on failure.
double parse_double(std::string_view text, std::string_view what);
long long parse_integer(std::string_view text, std::string_view what);

std::string_view trim(std::string_view text);

} // namespace decaylab

#endif // DECAYLAB_NUMFMT_HPP
