#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace iodiag::csv {

// RFC 4180: fields with comma, quote, CR or LF are quoted, quotes doubled.
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Reads one logical row (quoted fields may span lines). nullopt at EOF.
std::optional<std::vector<std::string>> read_row(std::istream& in);

}  // namespace iodiag::csv
