#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gnnpp {

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes: usage/config -> 1, data errors -> 2, numeric failures -> 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AlignmentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LookupError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kVersion = "gnnpp 0.1.0";

// Shortest decimal form that parses back to the identical double.
std::string format_double(double x);
bool try_parse_double(std::string_view s, double& out);
bool try_parse_int(std::string_view s, long long& out);
// Views into the input line; empty fields are kept.
std::vector<std::string_view> split_csv(std::string_view line);

}  // namespace gnnpp
