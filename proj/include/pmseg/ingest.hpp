#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pmseg/error.hpp"
#include "pmseg/trajectory.hpp"

namespace pmseg::ingest {

/// Zero-based columns to keep from a kinematics file. Empty means all columns.
struct ColumnSelection {
  std::vector<Index> indices;

  static ColumnSelection all() { return {}; }

  /// The 38 slave-side channels (both arms) of a 76-column JIGSAWS file.
  static ColumnSelection jigsaws_slave() {
    ColumnSelection sel;
    for (Index c = 38; c < 76; ++c) sel.indices.push_back(c);
    return sel;
  }

  bool empty() const noexcept { return indices.empty(); }
};

/// Parses "all", "jigsaws-slave", or a comma list of indices and a-b ranges.
inline ColumnSelection parse_column_selection(std::string_view text) {
  if (text.empty() || text == "all") return ColumnSelection::all();
  if (text == "jigsaws-slave") return ColumnSelection::jigsaws_slave();
  ColumnSelection sel;
  auto parse_index = [&](std::string_view tok) {
    Index v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size() || v < 0)
      throw Error("bad column index '" + std::string(tok) + "'");
    return v;
  };
  while (!text.empty()) {
    auto comma = text.find(',');
    std::string_view item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (auto dash = item.find('-'); dash != std::string_view::npos) {
      Index lo = parse_index(item.substr(0, dash));
      Index hi = parse_index(item.substr(dash + 1));
      if (hi < lo) throw Error("bad column range '" + std::string(item) + "'");
      for (Index c = lo; c <= hi; ++c) sel.indices.push_back(c);
    } else {
      sel.indices.push_back(parse_index(item));
    }
  }
  std::set<Index> seen(sel.indices.begin(), sel.indices.end());
  if (seen.size() != sel.indices.size()) throw Error("duplicate column index");
  return sel;
}

namespace detail {

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return in;
}

// Locale-independent double parse of an entire token.
inline std::optional<double> parse_double(std::string_view tok) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, bool csv) {
  std::vector<std::string_view> out;
  if (csv) {
    while (true) {
      auto comma = line.find(',');
      std::string_view cell = line.substr(0, comma);
      while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.front())))
        cell.remove_prefix(1);
      while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.back())))
        cell.remove_suffix(1);
      out.push_back(cell);
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    return out;
  }
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(),
                     [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

inline Matrix read_table(const std::filesystem::path& path, bool csv) {
  auto in = open_input(path);
  const std::string file = path.string();
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line)) continue;
    auto tokens = split(line, csv);
    if (rows == 0) {
      cols = tokens.size();
    } else if (tokens.size() != cols) {
      throw ParseError(file, lineno,
                       "expected " + std::to_string(cols) + " values, found " +
                           std::to_string(tokens.size()));
    }
    for (auto tok : tokens) {
      auto v = parse_double(tok);
      if (!v) throw ParseError(file, lineno, "non-numeric value '" + std::string(tok) + "'");
      values.push_back(*v);
    }
    ++rows;
  }
  if (rows == 0) throw Error("'" + file + "' contains no data");
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Index>(r), static_cast<Index>(c)) = values[r * cols + c];
  return m;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace detail

/// Whitespace-separated kinematics, one frame per row.
inline Matrix load_kinematics(const std::filesystem::path& path,
                              const ColumnSelection& cols = {}) {
  Matrix raw = detail::read_table(path, /*csv=*/false);
  if (cols.empty()) return raw;
  Matrix out(raw.rows(), static_cast<Index>(cols.indices.size()));
  for (std::size_t j = 0; j < cols.indices.size(); ++j) {
    const Index c = cols.indices[j];
    if (c < 0 || c >= raw.cols())
      throw Error("column " + std::to_string(c) + " out of range for '" +
                  path.string() + "' with " + std::to_string(raw.cols()) + " columns");
    out.col(static_cast<Index>(j)) = raw.col(c);
  }
  return out;
}

/// Headerless CSV of visual features, one frame per row.
inline Matrix load_features(const std::filesystem::path& path) {
  return detail::read_table(path, /*csv=*/true);
}

struct TranscriptionEntry {
  Index start_frame = 0;  // zero-based, inclusive
  Index end_frame = 0;
  std::string gesture_name;
};

struct Transcription {
  Segmentation segmentation;
  std::map<Label, std::string> names;  // gesture name per integer label
  std::vector<TranscriptionEntry> entries;
};

/// Reads "start end label" lines (1-based inclusive frames). Gaps, including
/// lead-in and, when `frames` is given, trailing frames, become background.
inline Transcription load_transcription(const std::filesystem::path& path,
                                        std::optional<Index> frames = std::nullopt) {
  auto in = detail::open_input(path);
  const std::string file = path.string();
  std::vector<std::pair<TranscriptionEntry, std::size_t>> raw;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::blank(line)) continue;
    auto tokens = detail::split(line, false);
    if (tokens.size() != 3) throw ParseError(file, lineno, "expected 'start end label'");
    Index s = 0, e = 0;
    auto r1 = std::from_chars(tokens[0].data(), tokens[0].data() + tokens[0].size(), s);
    auto r2 = std::from_chars(tokens[1].data(), tokens[1].data() + tokens[1].size(), e);
    if (r1.ec != std::errc() || r1.ptr != tokens[0].data() + tokens[0].size() ||
        r2.ec != std::errc() || r2.ptr != tokens[1].data() + tokens[1].size())
      throw ParseError(file, lineno, "frame indices must be integers");
    if (s < 1) throw ParseError(file, lineno, "frame indices are 1-based");
    if (e < s) throw ParseError(file, lineno, "end frame precedes start frame");
    raw.push_back({{s - 1, e - 1, std::string(tokens[2])}, lineno});
  }
  if (raw.empty()) throw Error("'" + file + "' contains no annotations");
  std::stable_sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) {
    return a.first.start_frame < b.first.start_frame;
  });
  for (std::size_t i = 1; i < raw.size(); ++i)
    if (raw[i].first.start_frame <= raw[i - 1].first.end_frame)
      throw ParseError(file, raw[i].second, "annotation overlaps a previous entry");

  const Index last = raw.back().first.end_frame;
  const Index total = frames.value_or(last + 1);
  if (last >= total)
    throw Error("'" + file + "' annotates frame " + std::to_string(last + 1) +
                " beyond the " + std::to_string(total) + "-frame demonstration");

  Transcription out;
  std::map<std::string, Label> ids;
  Index next = 0;
  for (const auto& [entry, lineno] : raw) {
    auto [it, inserted] = ids.try_emplace(entry.gesture_name, static_cast<Label>(ids.size()));
    if (inserted) out.names[it->second] = entry.gesture_name;
    if (entry.start_frame > next)
      out.segmentation.segments.push_back({next, entry.start_frame - 1, kBackgroundLabel});
    out.segmentation.segments.push_back({entry.start_frame, entry.end_frame, it->second});
    out.entries.push_back(entry);
    next = entry.end_frame + 1;
  }
  if (next < total) out.segmentation.segments.push_back({next, total - 1, kBackgroundLabel});
  check_segmentation(out.segmentation, total);
  return out;
}

/// Z-scores each column with the population standard deviation. Constant
/// columns become zero.
inline Matrix standardize_columns(const Matrix& data) {
  Matrix out(data.rows(), data.cols());
  for (Index c = 0; c < data.cols(); ++c) {
    const double mean = data.col(c).mean();
    const double var = (data.col(c).array() - mean).square().mean();
    if (var > 0.0 && std::isfinite(var)) {
      out.col(c) = (data.col(c).array() - mean) / std::sqrt(var);
    } else {
      out.col(c).setZero();
    }
  }
  return out;
}

/// Column-concatenates kinematic and (optional) visual features.
inline Matrix fuse(const Matrix& kinematic, const std::optional<Matrix>& visual,
                   bool standardize) {
  Matrix out;
  if (visual) {
    if (visual->rows() != kinematic.rows())
      throw Error("cannot fuse " + std::to_string(kinematic.rows()) +
                  " kinematic frames with " + std::to_string(visual->rows()) +
                  " visual frames");
    out.resize(kinematic.rows(), kinematic.cols() + visual->cols());
    out << kinematic, *visual;
  } else {
    out = kinematic;
  }
  return standardize ? standardize_columns(out) : out;
}

/// Writes a matrix in the kinematics format with round-trip exact numbers.
inline void write_kinematics(const std::filesystem::path& path, const Matrix& data) {
  auto out = detail::open_output(path);
  for (Index r = 0; r < data.rows(); ++r) {
    for (Index c = 0; c < data.cols(); ++c) {
      if (c) out << ' ';
      out << detail::format_double(data(r, c));
    }
    out << '\n';
  }
}

inline void write_features(const std::filesystem::path& path, const Matrix& data) {
  auto out = detail::open_output(path);
  for (Index r = 0; r < data.rows(); ++r) {
    for (Index c = 0; c < data.cols(); ++c) {
      if (c) out << ',';
      out << detail::format_double(data(r, c));
    }
    out << '\n';
  }
}

/// Writes non-background segments as 1-based "start end name" lines. Labels
/// without a name are written as "G<label+1>".
inline void write_transcription(const std::filesystem::path& path, const Segmentation& seg,
                                const std::map<Label, std::string>& names = {}) {
  auto out = detail::open_output(path);
  for (const Segment& s : seg) {
    if (s.label == kBackgroundLabel) continue;
    auto it = names.find(s.label);
    const std::string name =
        it != names.end() ? it->second : "G" + std::to_string(s.label + 1);
    out << s.start + 1 << ' ' << s.end + 1 << ' ' << name << '\n';
  }
}

/// One integer label per line.
inline FrameLabeling load_labels(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  FrameLabeling labels;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::blank(line)) continue;
    auto tokens = detail::split(line, false);
    Label v = 0;
    if (tokens.size() != 1)
      throw ParseError(path.string(), lineno, "expected one label per line");
    auto [p, ec] = std::from_chars(tokens[0].data(), tokens[0].data() + tokens[0].size(), v);
    if (ec != std::errc() || p != tokens[0].data() + tokens[0].size())
      throw ParseError(path.string(), lineno, "label must be an integer");
    labels.push_back(v);
  }
  if (labels.empty()) throw Error("'" + path.string() + "' contains no labels");
  return labels;
}

inline void write_labels(const std::filesystem::path& path, const FrameLabeling& labels) {
  auto out = detail::open_output(path);
  for (Label l : labels) out << l << '\n';
}

}  // namespace pmseg::ingest
