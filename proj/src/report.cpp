#include "mamlcon/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mamlcon {

namespace {

double round1(double v) {
  const double r = std::round(v * 10.0) / 10.0;
  return r == 0.0 ? 0.0 : r;  // no "-0"
}

std::vector<std::string> group_labels(const ResultRow& row) {
  const std::size_t n = row.group_start.size();
  std::vector<std::string> out;
  try {
    const auto schedule = class_schedule(parse_scenario(row.scenario, row.k == 0 ? 1 : row.k));
    if (schedule.size() == n) {
      std::size_t first = 1;
      for (std::size_t size : schedule) {
        const std::size_t last = first + size - 1;
        out.push_back(size == 1 ? std::to_string(first) : std::to_string(first) + "-" + std::to_string(last));
        first = last + 1;
      }
      return out;
    }
  } catch (const std::exception&) {
  }
  for (std::size_t g = 0; g < n; ++g) out.push_back("group " + std::to_string(g + 1));
  return out;
}

std::string pad(const std::string& s, std::size_t width) {
  return s + std::string(width > s.size() ? width - s.size() : 0, ' ');
}

}  // namespace

std::string format_cell_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", round1(v));
  std::string s = buf;
  if (s.size() > 2 && s.compare(s.size() - 2, 2, ".0") == 0) s.resize(s.size() - 2);
  return s;
}

std::string format_report(std::span<const ResultRow> rows) {
  if (rows.empty()) throw std::invalid_argument("no result rows to report");

  std::vector<std::string> order;
  for (const auto& r : rows)
    if (std::find(order.begin(), order.end(), r.algorithm) == order.end()) order.push_back(r.algorithm);
  std::vector<ResultRow> columns;
  for (const auto& name : order) {
    std::vector<ResultRow> mine;
    for (const auto& r : rows)
      if (r.algorithm == name) mine.push_back(r);
    columns.push_back(mine.size() == 1 ? mine[0] : summarize(mine));
  }

  std::size_t n_groups = 0;
  for (const auto& c : columns) n_groups = std::max(n_groups, c.group_start.size());
  std::vector<std::string> labels;
  for (const auto& c : columns)
    if (c.group_start.size() == n_groups) {
      labels = group_labels(c);
      break;
    }

  // table[line][column]; line 0 is the header, the last line the footer.
  std::vector<std::vector<std::string>> table(n_groups + 2);
  table[0].push_back("Labels");
  for (std::size_t g = 0; g < n_groups; ++g) table[g + 1].push_back(labels[g]);
  table.back().push_back("Accuracy");
  for (const auto& c : columns) {
    table[0].push_back(c.algorithm + " S/E");
    table[0].push_back("Delta");
    const std::size_t n = c.group_start.size();
    for (std::size_t g = 0; g < n_groups; ++g) {
      if (g >= n) {
        table[g + 1].push_back("");
        table[g + 1].push_back("");
      } else if (g + 1 == n) {
        table[g + 1].push_back("-/" + format_cell_value(c.group_end[g]));
        table[g + 1].push_back("-");
      } else {
        const double s = round1(c.group_start[g]), e = round1(c.group_end[g]);
        table[g + 1].push_back(format_cell_value(s) + "/" + format_cell_value(e));
        table[g + 1].push_back(format_cell_value(e - s));
      }
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", round1(c.accuracy));
    table.back().push_back(buf);
    table.back().push_back("");
  }

  std::vector<std::size_t> width(table[0].size(), 0);
  for (const auto& line : table)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  std::string out;
  for (const auto& line : table) {
    std::string text;
    for (std::size_t i = 0; i < line.size(); ++i) text += (i ? "  " : "") + pad(line[i], width[i]);
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out += text + "\n";
  }
  return out;
}

}  // namespace mamlcon
