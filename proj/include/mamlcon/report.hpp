#pragma once

#include <span>
#include <string>

#include "mamlcon/harness.hpp"

namespace mamlcon {

/// Retention table: one line per label group with "S/E" and Delta columns
/// for each algorithm, and an Accuracy footer. Rows sharing an algorithm are
/// averaged first. Cells show one decimal with a trailing ".0" dropped; Delta
/// is recomputed from the displayed S and E. The last-learned group shows
/// "-/E" and "-".
std::string format_report(std::span<const ResultRow> rows);

/// One decimal, trailing ".0" dropped ("95", "77.5", "-5").
std::string format_cell_value(double v);

}  // namespace mamlcon
