#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "ebsde/error.hpp"

namespace ebsde {

/// Shortest round-trip decimal form; independent of locale.
inline std::string fmt_num(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline std::string fmt_num(std::uint64_t x) { return std::to_string(x); }

/// Small CSV builder: an optional leading `# ...` provenance line, a header,
/// then rows. Numbers go through fmt_num so output is byte-stable.
class CsvTable {
 public:
  CsvTable(std::vector<std::string> header, std::string comment = {})
      : header_(std::move(header)), comment_(std::move(comment)) {}

  class Row {
   public:
    explicit Row(CsvTable& t) : table_(t) {}
    Row& operator<<(const std::string& s) {
      cells_.push_back(s);
      return *this;
    }
    Row& operator<<(const char* s) { return *this << std::string(s); }
    template <class T>
      requires std::is_arithmetic_v<T>
    Row& operator<<(T x) {
      if constexpr (std::is_floating_point_v<T>)
        cells_.push_back(fmt_num(static_cast<double>(x)));
      else
        cells_.push_back(std::to_string(x));
      return *this;
    }
    ~Row() { table_.rows_.push_back(std::move(cells_)); }

   private:
    CsvTable& table_;
    std::vector<std::string> cells_;
  };

  Row row() { return Row(*this); }

  std::size_t n_rows() const { return rows_.size(); }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  std::string str() const {
    std::ostringstream os;
    if (!comment_.empty()) os << "# " << comment_ << "\n";
    write_line(os, header_);
    for (const auto& r : rows_) write_line(os, r);
    return os.str();
  }

  void write(const std::filesystem::path& path) const {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + path.parent_path().string() + ": " + ec.message());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << str();
  }

 private:
  static void write_line(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os << ',';
      const std::string& c = cells[i];
      if (c.find_first_of(",\"\n") == std::string::npos) {
        os << c;
        continue;
      }
      os << '"';
      for (char ch : c) os << (ch == '"' ? "\"\"" : std::string(1, ch));
      os << '"';
    }
    os << '\n';
  }

  std::vector<std::string> header_;
  std::string comment_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace ebsde
