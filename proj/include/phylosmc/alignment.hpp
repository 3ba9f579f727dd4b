#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "error.hpp"

namespace phylosmc {

// Nucleotide codes. The order A, C, G, T is the row/column order of every
// 4x4 matrix in the library.
using State = std::uint8_t;
inline constexpr State kA = 0;
inline constexpr State kC = 1;
inline constexpr State kG = 2;
inline constexpr State kT = 3;
inline constexpr State kMissing = 4;

inline State encode_nucleotide(char c, std::size_t position) {
  switch (std::toupper(static_cast<unsigned char>(c))) {
    case 'A': return kA;
    case 'C': return kC;
    case 'G': return kG;
    case 'T':
    case 'U': return kT;
    case 'R': case 'Y': case 'S': case 'W': case 'K': case 'M':
    case 'B': case 'D': case 'H': case 'V': case 'N':
    case '-': case '?': case '.':
      return kMissing;
    default:
      throw ParseError(std::string("unexpected sequence character '") + c + "'",
                       position);
  }
}

inline char decode_nucleotide(State s) {
  static constexpr char kChars[] = {'A', 'C', 'G', 'T', '-'};
  return kChars[std::min<State>(s, kMissing)];
}

using Column = std::vector<State>;

struct PatternCount {
  Column column;
  int count = 0;
};

/// Distinct columns with multiplicities, in order of first occurrence.
inline std::vector<PatternCount> compress_patterns(const std::vector<Column>& columns) {
  std::vector<PatternCount> out;
  std::map<Column, std::size_t> index;
  for (const auto& column : columns) {
    auto [it, inserted] = index.try_emplace(column, out.size());
    if (inserted) {
      out.push_back({column, 1});
    } else {
      ++out[it->second].count;
    }
  }
  return out;
}

/// Aligned DNA sequences plus their site-pattern compression. Immutable.
class Alignment {
 public:
  Alignment() = default;

  /// Rows are taken as already encoded; validates shape and names.
  static Alignment from_encoded(std::vector<std::string> names,
                                std::vector<std::vector<State>> rows) {
    if (names.empty()) throw Error(ErrorKind::kEmptyInput, "no sequences");
    if (names.size() != rows.size()) {
      throw Error(ErrorKind::kAlignmentShape, "name/row count mismatch");
    }
    std::set<std::string> seen;
    for (const auto& n : names) {
      if (n.empty()) throw Error(ErrorKind::kDuplicateTaxon, "empty taxon name");
      if (!seen.insert(n).second) throw Error(ErrorKind::kDuplicateTaxon, n);
    }
    const std::size_t length = rows.front().size();
    if (length == 0) throw Error(ErrorKind::kAlignmentShape, "zero-length sequences");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != length) {
        throw Error(ErrorKind::kAlignmentShape,
                    "sequence '" + names[i] + "' has length " +
                        std::to_string(rows[i].size()) + ", expected " +
                        std::to_string(length));
      }
    }
    Alignment a;
    a.names_ = std::move(names);
    a.rows_ = std::move(rows);
    a.build_index();
    return a;
  }

  static Alignment from_strings(std::vector<std::string> names,
                                const std::vector<std::string>& seqs) {
    std::vector<std::vector<State>> rows;
    rows.reserve(seqs.size());
    for (const auto& s : seqs) {
      std::vector<State> row;
      row.reserve(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) row.push_back(encode_nucleotide(s[i], i));
      rows.push_back(std::move(row));
    }
    return from_encoded(std::move(names), std::move(rows));
  }

  std::size_t taxon_count() const { return names_.size(); }
  std::size_t site_count() const { return rows_.empty() ? 0 : rows_.front().size(); }
  std::size_t pattern_count() const { return weights_.size(); }

  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t taxon) const { return names_[taxon]; }
  const std::vector<State>& row(std::size_t taxon) const { return rows_[taxon]; }

  /// Position of this taxon's name in lexicographic order of all names.
  /// Forest ordering uses it so results do not depend on input row order.
  int name_rank(std::size_t taxon) const { return name_rank_[taxon]; }

  int pattern_weight(std::size_t pattern) const { return weights_[pattern]; }
  const std::vector<int>& pattern_weights() const { return weights_; }
  State pattern_state(std::size_t taxon, std::size_t pattern) const {
    return patterns_[taxon][pattern];
  }

  Column column(std::size_t site) const {
    Column c(taxon_count());
    for (std::size_t t = 0; t < taxon_count(); ++t) c[t] = rows_[t][site];
    return c;
  }

  std::vector<Column> columns() const {
    std::vector<Column> out;
    out.reserve(site_count());
    for (std::size_t s = 0; s < site_count(); ++s) out.push_back(column(s));
    return out;
  }

  std::vector<PatternCount> patterns() const {
    std::vector<PatternCount> out(pattern_count());
    for (std::size_t p = 0; p < pattern_count(); ++p) {
      out[p].count = weights_[p];
      out[p].column.resize(taxon_count());
      for (std::size_t t = 0; t < taxon_count(); ++t) out[p].column[t] = patterns_[t][p];
    }
    return out;
  }

  std::optional<std::size_t> find_taxon(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i] == name) return i;
    }
    return std::nullopt;
  }

  /// Same content restricted to a set of taxa, in the given order.
  Alignment subset(const std::vector<std::size_t>& taxa) const {
    std::vector<std::string> names;
    std::vector<std::vector<State>> rows;
    for (auto t : taxa) {
      names.push_back(names_[t]);
      rows.push_back(rows_[t]);
    }
    return from_encoded(std::move(names), std::move(rows));
  }

  /// Drops every column in which any taxon has a missing state.
  Alignment without_missing_columns() const {
    std::vector<std::vector<State>> rows(taxon_count());
    for (std::size_t s = 0; s < site_count(); ++s) {
      bool complete = true;
      for (std::size_t t = 0; t < taxon_count() && complete; ++t) {
        complete = rows_[t][s] != kMissing;
      }
      if (!complete) continue;
      for (std::size_t t = 0; t < taxon_count(); ++t) rows[t].push_back(rows_[t][s]);
    }
    return from_encoded(names_, std::move(rows));
  }

  bool operator==(const Alignment& other) const {
    return names_ == other.names_ && rows_ == other.rows_;
  }

 private:
  void build_index() {
    const auto compressed = compress_patterns(columns());
    patterns_.assign(taxon_count(), std::vector<State>(compressed.size()));
    weights_.resize(compressed.size());
    for (std::size_t p = 0; p < compressed.size(); ++p) {
      weights_[p] = compressed[p].count;
      for (std::size_t t = 0; t < taxon_count(); ++t) {
        patterns_[t][p] = compressed[p].column[t];
      }
    }
    std::vector<std::size_t> order(taxon_count());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return names_[a] < names_[b]; });
    name_rank_.resize(taxon_count());
    for (std::size_t r = 0; r < order.size(); ++r) name_rank_[order[r]] = static_cast<int>(r);
  }

  std::vector<std::string> names_;
  std::vector<std::vector<State>> rows_;
  std::vector<std::vector<State>> patterns_;  // [taxon][pattern]
  std::vector<int> weights_;
  std::vector<int> name_rank_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline void encode_run(std::string_view text, std::size_t offset, std::vector<State>& out) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) continue;
    out.push_back(encode_nucleotide(text[i], offset + i));
  }
}

}  // namespace detail

inline Alignment parse_fasta(std::string_view text) {
  std::vector<std::string> names;
  std::vector<std::vector<State>> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty() && line.front() == '>') {
      std::string_view header = detail::trim(line.substr(1));
      // The name is the first whitespace-delimited token of the header.
      std::size_t space = 0;
      while (space < header.size() && !std::isspace(static_cast<unsigned char>(header[space]))) ++space;
      names.emplace_back(header.substr(0, space));
      rows.emplace_back();
    } else if (!detail::trim(line).empty()) {
      if (rows.empty()) throw ParseError("sequence data before first '>' header", pos);
      detail::encode_run(line, pos, rows.back());
    }
    pos = end + 1;
  }
  if (names.empty()) throw Error(ErrorKind::kEmptyInput, "no FASTA records");
  return Alignment::from_encoded(std::move(names), std::move(rows));
}

/// Sequential PHYLIP: header "ntax nchar", then one "name sequence" record
/// per taxon (sequence may continue on following lines).
inline Alignment parse_phylip(std::string_view text) {
  std::istringstream in{std::string(text)};
  long ntax = 0;
  long nchar = 0;
  if (!(in >> ntax >> nchar)) {
    if (detail::trim(text).empty()) throw Error(ErrorKind::kEmptyInput, "empty PHYLIP input");
    throw ParseError("malformed PHYLIP header", 0);
  }
  if (ntax <= 0 || nchar <= 0) throw Error(ErrorKind::kAlignmentShape, "non-positive PHYLIP dimensions");
  std::vector<std::string> names;
  std::vector<std::vector<State>> rows;
  std::string token;
  while (in >> token) {
    const auto offset = static_cast<std::size_t>(in.tellg()) - token.size();
    if (rows.empty() || static_cast<long>(rows.back().size()) >= nchar) {
      names.push_back(token);
      rows.emplace_back();
      continue;
    }
    detail::encode_run(token, offset, rows.back());
  }
  if (static_cast<long>(names.size()) != ntax) {
    throw Error(ErrorKind::kAlignmentShape,
                "header declares " + std::to_string(ntax) + " taxa, found " +
                    std::to_string(names.size()));
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<long>(rows[i].size()) != nchar) {
      throw Error(ErrorKind::kAlignmentShape,
                  "sequence '" + names[i] + "' has " + std::to_string(rows[i].size()) +
                      " sites, header declares " + std::to_string(nchar));
    }
  }
  return Alignment::from_encoded(std::move(names), std::move(rows));
}

inline std::string to_fasta(const Alignment& a, std::size_t width = 60) {
  std::string out;
  for (std::size_t t = 0; t < a.taxon_count(); ++t) {
    out += '>';
    out += a.name(t);
    out += '\n';
    const auto& row = a.row(t);
    for (std::size_t s = 0; s < row.size(); ++s) {
      out += decode_nucleotide(row[s]);
      if ((s + 1) % width == 0 || s + 1 == row.size()) out += '\n';
    }
  }
  return out;
}

inline std::string to_phylip(const Alignment& a) {
  std::string out = std::to_string(a.taxon_count()) + " " + std::to_string(a.site_count()) + "\n";
  for (std::size_t t = 0; t < a.taxon_count(); ++t) {
    out += a.name(t);
    out += ' ';
    for (State s : a.row(t)) out += decode_nucleotide(s);
    out += '\n';
  }
  return out;
}

/// Reads FASTA or sequential PHYLIP, chosen by the first non-blank character.
inline Alignment read_alignment_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kUsage, "cannot open alignment file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const auto first = detail::trim(text);
  if (first.empty()) throw Error(ErrorKind::kEmptyInput, "alignment file '" + path + "' is empty");
  return first.front() == '>' ? parse_fasta(text) : parse_phylip(text);
}

}  // namespace phylosmc
