#include "vaxsurr/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vaxsurr/error.hpp"

namespace vaxsurr {
namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t end = line.find(',', pos);
    if (end == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, end - pos));
    pos = end + 1;
  }
}

class RowParser {
 public:
  RowParser(std::size_t line_no, const std::vector<std::string>& header, std::vector<std::string_view> fields)
      : line_no_(line_no), header_(header), fields_(std::move(fields)) {
    if (fields_.size() != header_.size()) {
      fail(0, "expected " + std::to_string(header_.size()) + " fields, found " + std::to_string(fields_.size()));
    }
  }

  std::int64_t integer(std::size_t col) const {
    const auto f = fields_[col];
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || ec != std::errc{} || p != f.data() + f.size()) fail(col, "not an integer");
    return v;
  }

  bool flag(std::size_t col) const {
    const auto v = integer(col);
    if (v != 0 && v != 1) fail(col, "must be 0 or 1");
    return v == 1;
  }

  double real(std::size_t col) const {
    const auto f = fields_[col];
    double v = 0.0;
    const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || ec != std::errc{} || p != f.data() + f.size()) fail(col, "not a real number");
    return v;
  }

  std::optional<double> optional_real(std::size_t col) const {
    if (fields_[col].empty()) return std::nullopt;
    return real(col);
  }

  [[noreturn]] void fail(std::size_t col, const std::string& what) const {
    throw InputError("line " + std::to_string(line_no_) + ", column '" + header_[col] + "': " + what);
  }

 private:
  std::size_t line_no_;
  const std::vector<std::string>& header_;
  std::vector<std::string_view> fields_;
};

std::vector<std::string> parse_header(std::string_view line, const std::vector<std::string>& fixed,
                                      bool allow_covariates) {
  std::vector<std::string> header;
  for (auto f : split_fields(line)) header.emplace_back(f);
  if (header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), header.begin())) {
    std::string expected;
    for (const auto& c : fixed) expected += (expected.empty() ? "" : ",") + c;
    throw InputError("line 1: header must start with " + expected);
  }
  for (std::size_t i = fixed.size(); i < header.size(); ++i) {
    const std::string want = "W" + std::to_string(i - fixed.size() + 1);
    if (!allow_covariates || header[i] != want) {
      throw InputError("line 1: unexpected column '" + header[i] + "'" +
                       (allow_covariates ? " (expected " + want + ")" : ""));
    }
  }
  return header;
}

void append_optional(std::string& out, const std::optional<double>& v) {
  out += ',';
  if (v) out += format_real(*v);
}

const std::vector<std::string> kDiscreteColumns{"id", "V", "R", "M", "delta", "S1", "Sc", "B"};
const std::vector<std::string> kContinuousColumns{"id", "V", "R", "X", "delta", "S1", "Sc", "B"};

}  // namespace

std::string format_real(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc{}) throw NumericError("cannot format real");
  return std::string(buf, p);
}

std::string to_csv(const Dataset& data) {
  std::string out = "id,V,R,M,delta,S1,Sc,B";
  for (int d = 1; d <= data.w_dim; ++d) out += ",W" + std::to_string(d);
  out += '\n';
  for (const auto& s : data.subjects) {
    out += std::to_string(s.id);
    out += ',' + std::to_string(s.arm);
    out += s.at_risk ? ",1" : ",0";
    out += ',' + std::to_string(s.last_visit);
    out += s.event ? ",1" : ",0";
    append_optional(out, s.marker);
    append_optional(out, s.closeout_marker);
    append_optional(out, s.bip);
    for (double w : s.covariates) out += ',' + format_real(w);
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(std::string_view text, const TimeGrid& grid) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw InputError("line 1: missing header");
  const auto header = parse_header(lines[0], kDiscreteColumns, true);
  Dataset data;
  data.grid = grid;
  data.w_dim = static_cast<int>(header.size() - kDiscreteColumns.size());
  data.subjects.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const RowParser row(i + 1, header, split_fields(lines[i]));
    SubjectRecord s;
    s.id = row.integer(0);
    s.arm = row.flag(1) ? 1 : 0;
    s.at_risk = row.flag(2);
    const auto m = row.integer(3);
    if (m < 1 || m > grid.visit_count()) row.fail(3, "must lie in 1.." + std::to_string(grid.visit_count()));
    s.last_visit = static_cast<int>(m);
    s.event = row.flag(4);
    s.marker = row.optional_real(5);
    s.closeout_marker = row.optional_real(6);
    s.bip = row.optional_real(7);
    for (int d = 0; d < data.w_dim; ++d) s.covariates.push_back(row.real(8 + static_cast<std::size_t>(d)));
    data.subjects.push_back(std::move(s));
  }
  validate(data, infer_marker_mode(data));
  return data;
}

Dataset dataset_from_csv(std::string_view text) {
  // First pass only to find K.
  int k_max = 2;
  const auto lines = split_lines(text);
  if (lines.empty()) throw InputError("line 1: missing header");
  const auto header = parse_header(lines[0], kDiscreteColumns, true);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const RowParser row(i + 1, header, split_fields(lines[i]));
    const auto m = row.integer(3);
    if (m < 1) row.fail(3, "must be >= 1");
    k_max = std::max<int>(k_max, static_cast<int>(m));
  }
  std::vector<double> t(static_cast<std::size_t>(k_max));
  for (int k = 0; k < k_max; ++k) t[static_cast<std::size_t>(k)] = k;
  return dataset_from_csv(text, TimeGrid(std::move(t)));
}

std::string to_csv(const ContinuousDataset& data) {
  std::string out = "id,V,R,X,delta,S1,Sc,B\n";
  for (const auto& s : data.subjects) {
    out += std::to_string(s.id);
    out += ',' + std::to_string(s.arm);
    out += s.at_risk ? ",1" : ",0";
    out += ',' + format_real(s.time);
    out += s.event ? ",1" : ",0";
    append_optional(out, s.marker);
    append_optional(out, s.closeout_marker);
    append_optional(out, s.bip);
    out += '\n';
  }
  return out;
}

ContinuousDataset continuous_from_csv(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw InputError("line 1: missing header");
  const auto header = parse_header(lines[0], kContinuousColumns, false);
  ContinuousDataset data;
  data.subjects.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const RowParser row(i + 1, header, split_fields(lines[i]));
    ContinuousSubject s;
    s.id = row.integer(0);
    s.arm = row.flag(1) ? 1 : 0;
    s.at_risk = row.flag(2);
    s.time = row.real(3);
    if (!(s.time > 0.0)) row.fail(3, "must be positive");
    s.event = row.flag(4);
    s.marker = row.optional_real(5);
    s.closeout_marker = row.optional_real(6);
    s.bip = row.optional_real(7);
    data.subjects.push_back(s);
  }
  validate(data);
  return data;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace vaxsurr
