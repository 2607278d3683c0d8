#include "pivotblend/io.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pivotblend {

namespace {

[[noreturn]] void fail(const std::string& origin, std::size_t line,
                       const std::string& what) {
  std::ostringstream os;
  os << origin << ":" << line << ": " << what;
  throw ParseError(os.str());
}

bool parse_number(std::string_view cell, double& out) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      cells.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return cells;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j] == name) return static_cast<int>(j);
  return -1;
}

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  std::string_view body = text;
  if (body.size() >= 3 && body.substr(0, 3) == "\xEF\xBB\xBF")
    body.remove_prefix(3);  // UTF-8 byte-order mark
  if (body.find('\0') != std::string_view::npos)
    fail(origin, 1, "binary data (NUL byte) in CSV input");

  std::vector<std::string_view> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= body.size(); ++i) {
    if (i == body.size() || body[i] == '\n') {
      lines.push_back(body.substr(start, i - start));
      start = i + 1;
    }
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) fail(origin, 1, "empty input, a header line is required");

  CsvTable table;
  for (std::string_view cell : split_line(lines[0])) {
    std::string name(trim(cell));
    if (name.empty()) fail(origin, 1, "empty column name in header");
    table.columns.push_back(std::move(name));
  }
  const std::size_t p = table.columns.size();
  const std::size_t n = lines.size() - 1;

  double probe;
  if (p == 1 && parse_number(trim(std::string_view(table.columns[0])), probe))
    fail(origin, 1, "header line looks numeric; a header is mandatory");
  if (p > 1) {
    bool all_numeric = true;
    for (const std::string& c : table.columns)
      all_numeric = all_numeric && parse_number(c, probe);
    if (all_numeric)
      fail(origin, 1, "header line looks numeric; a header is mandatory");
  }

  table.values.resize(n, p);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t lineno = r + 2;
    auto cells = split_line(lines[r + 1]);
    if (cells.size() != p) {
      std::ostringstream os;
      os << "row has " << cells.size() << " cells, header has " << p;
      fail(origin, lineno, os.str());
    }
    for (std::size_t j = 0; j < p; ++j) {
      std::string_view cell = trim(cells[j]);
      double v;
      if (cell.empty() || !parse_number(cell, v)) {
        std::ostringstream os;
        os << "column '" << table.columns[j] << "': cannot read '"
           << std::string(cell)
           << "' as a finite number (missing values are not imputed)";
        fail(origin, lineno, os.str());
      }
      table.values(static_cast<Eigen::Index>(r),
                   static_cast<Eigen::Index>(j)) = v;
    }
  }
  return table;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open file");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << text;
  if (!out) throw std::runtime_error(path + ": write failed");
}

CsvTable read_csv(const std::string& path) {
  return parse_csv(read_text_file(path), path);
}

void write_csv(const std::string& path,
               const std::vector<std::string>& columns,
               const Eigen::MatrixXd& values) {
  if (static_cast<Eigen::Index>(columns.size()) != values.cols())
    throw std::invalid_argument("write_csv: header width != value width");
  std::ostringstream os;
  for (std::size_t j = 0; j < columns.size(); ++j)
    os << (j ? "," : "") << columns[j];
  os << "\n";
  char buf[64];
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", values(r, j));
      os << (j ? "," : "") << buf;
    }
    os << "\n";
  }
  write_text_file(path, os.str());
}

namespace {

bool valid_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
         c == '.';
}

std::string parse_basic_string(std::string_view s, const std::string& origin,
                               std::size_t lineno, std::size_t* consumed) {
  // s starts at the opening quote.
  std::string out;
  std::size_t i = 1;
  for (; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '"') {
      *consumed = i + 1;
      return out;
    }
    if (c == '\\') {
      if (i + 1 >= s.size()) fail(origin, lineno, "dangling escape in string");
      const char e = s[++i];
      switch (e) {
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        default:
          fail(origin, lineno,
               std::string("unsupported escape '\\") + e + "' in string");
      }
    } else {
      out.push_back(c);
    }
  }
  fail(origin, lineno, "unterminated string");
}

TomlValue parse_scalar(std::string_view token, const std::string& origin,
                       std::size_t lineno) {
  TomlValue v;
  if (token == "true" || token == "false") {
    v.kind = TomlValue::Kind::Boolean;
    v.boolean = token == "true";
    return v;
  }
  if (!token.empty() && token.front() == '"') {
    std::size_t consumed = 0;
    v.kind = TomlValue::Kind::String;
    v.str = parse_basic_string(token, origin, lineno, &consumed);
    if (consumed != token.size())
      fail(origin, lineno, "trailing characters after string value");
    return v;
  }
  double num;
  if (parse_number(token, num)) {
    v.kind = TomlValue::Kind::Number;
    v.number = num;
    return v;
  }
  fail(origin, lineno,
       "cannot read '" + std::string(token) +
           "' as a string, number, or boolean");
}

TomlValue parse_array(std::string_view body, const std::string& origin,
                      std::size_t lineno) {
  // body is the text between the brackets.
  std::vector<std::string_view> items;
  std::size_t start = 0;
  bool in_string = false;
  for (std::size_t i = 0; i <= body.size(); ++i) {
    if (i < body.size() && body[i] == '"' &&
        (i == 0 || body[i - 1] != '\\'))
      in_string = !in_string;
    if (i == body.size() || (body[i] == ',' && !in_string)) {
      std::string_view item = trim(body.substr(start, i - start));
      if (!item.empty()) items.push_back(item);
      start = i + 1;
    }
  }
  if (in_string) fail(origin, lineno, "unterminated string in array");

  TomlValue v;
  v.kind = TomlValue::Kind::NumberList;
  bool decided = false;
  for (std::string_view item : items) {
    TomlValue elem = parse_scalar(item, origin, lineno);
    if (!decided) {
      if (elem.kind == TomlValue::Kind::String)
        v.kind = TomlValue::Kind::StringList;
      else if (elem.kind != TomlValue::Kind::Number)
        fail(origin, lineno, "arrays may hold numbers or strings only");
      decided = true;
    }
    if (v.kind == TomlValue::Kind::NumberList) {
      if (elem.kind != TomlValue::Kind::Number)
        fail(origin, lineno, "mixed-type array");
      v.numbers.push_back(elem.number);
    } else {
      if (elem.kind != TomlValue::Kind::String)
        fail(origin, lineno, "mixed-type array");
      v.strings.push_back(elem.str);
    }
  }
  return v;
}

// Strips comments that begin outside of strings.
std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\'))
      in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

}  // namespace

TomlTable parse_toml(const std::string& text, const std::string& origin) {
  TomlTable table;
  std::string section;
  std::size_t lineno = 0;
  std::size_t start = 0;
  std::string_view body = text;
  for (std::size_t i = 0; i <= body.size(); ++i) {
    if (i != body.size() && body[i] != '\n') continue;
    ++lineno;
    std::string_view line = trim(strip_comment(body.substr(start, i - start)));
    start = i + 1;
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        fail(origin, lineno, "unterminated [section] header");
      std::string_view name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) fail(origin, lineno, "empty section name");
      for (char c : name)
        if (!valid_key_char(c))
          fail(origin, lineno, "invalid character in section name");
      section = std::string(name);
      continue;
    }

    const std::size_t eq = [&] {
      bool in_string = false;
      for (std::size_t k = 0; k < line.size(); ++k) {
        if (line[k] == '"' && (k == 0 || line[k - 1] != '\\'))
          in_string = !in_string;
        if (line[k] == '=' && !in_string) return k;
      }
      return std::string_view::npos;
    }();
    if (eq == std::string_view::npos)
      fail(origin, lineno, "expected key = value");
    std::string_view key = trim(line.substr(0, eq));
    std::string_view val = trim(line.substr(eq + 1));
    if (key.empty()) fail(origin, lineno, "empty key");
    for (char c : key)
      if (!valid_key_char(c)) fail(origin, lineno, "invalid character in key");
    if (val.empty()) fail(origin, lineno, "missing value");

    TomlValue parsed;
    if (val.front() == '[') {
      if (val.back() != ']') fail(origin, lineno, "unterminated array");
      parsed = parse_array(val.substr(1, val.size() - 2), origin, lineno);
    } else {
      parsed = parse_scalar(val, origin, lineno);
    }

    std::string full_key =
        section.empty() ? std::string(key) : section + "." + std::string(key);
    if (table.count(full_key))
      fail(origin, lineno, "duplicate key '" + full_key + "'");
    table.emplace(std::move(full_key), std::move(parsed));
  }
  return table;
}

TomlTable read_toml(const std::string& path) {
  return parse_toml(read_text_file(path), path);
}

}  // namespace pivotblend
