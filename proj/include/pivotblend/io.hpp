#pragma once

#include <Eigen/Dense>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

// File formats used by the command-line tools.
//
// CSV dialect (fixed): UTF-8, comma separator, '.' decimal point, first
// line is a mandatory header, no quoting, every data cell is a finite
// number.  Empty cells and NA markers are rejected rather than imputed.
//
// TOML subset: [section] headers, key = value pairs with strings,
// numbers, booleans, and homogeneous arrays of numbers or strings.
// Section names prefix keys with a dot ("design.n").  Anything beyond
// that subset is a parse error, not silently ignored.

namespace pivotblend {

// Parse failure in user-supplied input; message carries origin:line[:col].
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // rows x columns

  // Index of a named column, -1 when absent.
  int column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text, const std::string& origin);
CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path,
               const std::vector<std::string>& columns,
               const Eigen::MatrixXd& values);

struct TomlValue {
  enum class Kind { Boolean, Number, String, NumberList, StringList };
  Kind kind = Kind::Number;
  bool boolean = false;
  double number = 0.0;
  std::string str;
  std::vector<double> numbers;
  std::vector<std::string> strings;
};

// Keys in file order are not preserved; dotted keys identify sections.
using TomlTable = std::map<std::string, TomlValue>;

TomlTable parse_toml(const std::string& text, const std::string& origin);
TomlTable read_toml(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace pivotblend
