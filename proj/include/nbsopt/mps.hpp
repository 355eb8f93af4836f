#pragma once

// Free-format MPS writer for MilpModel.
//
// Dialect:
//   NAME <name>
//   ROWS        N obj, then one L/E/G line per constraint in model order
//   COLUMNS     one "<col> <row> <value>" line per nonzero, columns in
//               layout order; integer columns wrapped in INTORG/INTEND markers
//   RHS         "RHS <row> <value>" for every nonzero right-hand side
//   BOUNDS      "BV BND <col>" for binaries, "MI BND <col>" for free columns
//   ENDATA
// The objective constant is not written; it is MilpModel::objective_constant.
// Numbers use the shortest representation that round-trips to the same double.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nbsopt/error.hpp"
#include "nbsopt/model.hpp"

namespace nbsopt {

inline void append_number(std::string& out, double v) {
  char buf[64];
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

inline std::string format_number(double v) {
  std::string s;
  append_number(s, v);
  return s;
}

inline std::string write_mps(const MilpModel& m, std::string_view name = "nbsopt") {
  std::string out;
  out.reserve(64 * (m.row_count() + m.var_count()));
  out += "NAME ";
  out += name;
  out += "\nROWS\n N obj\n";
  for (const LinearConstraint& c : m.constraints) {
    out += c.sense == Sense::LessEqual ? " L " : c.sense == Sense::Equal ? " E " : " G ";
    out += c.name;
    out += '\n';
  }

  // transpose rows into columns
  std::vector<std::size_t> count(m.var_count() + 1, 0);
  for (const Term& t : m.objective) ++count[t.var + 1];
  for (const LinearConstraint& c : m.constraints)
    for (const Term& t : c.terms) ++count[t.var + 1];
  for (std::size_t k = 1; k < count.size(); ++k) count[k] += count[k - 1];
  struct Entry {
    std::uint32_t row;  // 0 = objective, r + 1 = constraint r
    double coef;
  };
  std::vector<Entry> entries(count.back());
  std::vector<std::size_t> fill(count.begin(), count.end() - 1);
  for (const Term& t : m.objective) entries[fill[t.var]++] = {0, t.coef};
  for (std::size_t r = 0; r < m.constraints.size(); ++r)
    for (const Term& t : m.constraints[r].terms)
      entries[fill[t.var]++] = {static_cast<std::uint32_t>(r + 1), t.coef};

  out += "COLUMNS\n";
  bool in_int = false;
  int marker = 0;
  for (std::size_t k = 0; k < m.var_count(); ++k) {
    const bool integer = m.variables[k].integer;
    if (integer != in_int) {
      out += "    M";
      out += std::to_string(marker++);
      out += integer ? " 'MARKER' 'INTORG'\n" : " 'MARKER' 'INTEND'\n";
      in_int = integer;
    }
    const std::string col = m.var_name(k);
    if (count[k] == count[k + 1]) {
      out += "    " + col + " obj 0\n";
      continue;
    }
    for (std::size_t e = count[k]; e < count[k + 1]; ++e) {
      out += "    ";
      out += col;
      out += ' ';
      out += entries[e].row == 0 ? std::string_view("obj") : std::string_view(m.constraints[entries[e].row - 1].name);
      out += ' ';
      append_number(out, entries[e].coef);
      out += '\n';
    }
  }
  if (in_int) out += "    M" + std::to_string(marker) + " 'MARKER' 'INTEND'\n";

  out += "RHS\n";
  for (const LinearConstraint& c : m.constraints) {
    if (c.rhs == 0.0) continue;
    out += "    RHS ";
    out += c.name;
    out += ' ';
    append_number(out, c.rhs);
    out += '\n';
  }

  out += "BOUNDS\n";
  for (std::size_t k = 0; k < m.var_count(); ++k) {
    const Variable& v = m.variables[k];
    if (v.integer && v.lower == 0.0 && v.upper == 1.0) {
      out += " BV BND " + m.var_name(k) + '\n';
      continue;
    }
    const bool free_below = std::isinf(v.lower) && v.lower < 0;
    if (free_below && std::isinf(v.upper)) {
      out += " FR BND " + m.var_name(k) + '\n';
      continue;
    }
    if (free_below) out += " MI BND " + m.var_name(k) + '\n';
    else if (v.lower != 0.0) out += " LO BND " + m.var_name(k) + ' ' + format_number(v.lower) + '\n';
    if (!std::isinf(v.upper)) out += " UP BND " + m.var_name(k) + ' ' + format_number(v.upper) + '\n';
  }
  out += "ENDATA\n";
  return out;
}

inline void export_interchange(const MilpModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const std::string text = write_mps(m);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace nbsopt
