#pragma once

#include <string>

namespace ulab {

/// Decimal text with 17 significant digits; parses back to the identical double.
std::string format_double(double v);

}  // namespace ulab
