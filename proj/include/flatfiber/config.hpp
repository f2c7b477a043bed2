#pragma once

#include "flatfiber/csv.hpp"
#include "flatfiber/error.hpp"
#include "flatfiber/spectral.hpp"

#include <cctype>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace flatfiber {

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

/// Recursive-descent evaluator for + - * / ^, parentheses, and named constants.
class ExpressionParser {
 public:
  ExpressionParser(std::string_view text, const std::map<std::string, double>& constants)
      : s_(text), constants_(constants) {}

  double parse() {
    const double v = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("expression '" + std::string(s_) + "': " + msg);
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  double expr() {
    double v = term();
    for (;;) {
      if (eat('+')) v += term();
      else if (eat('-')) v -= term();
      else return v;
    }
  }
  double term() {
    double v = unary();
    for (;;) {
      if (eat('*')) v *= unary();
      else if (eat('/')) v /= unary();
      else return v;
    }
  }
  double unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    const double base = primary();
    if (eat('^')) return std::pow(base, unary());
    return base;
  }
  double primary() {
    skip();
    if (eat('(')) {
      const double v = expr();
      if (!eat(')')) fail("missing ')'");
      return v;
    }
    if (pos_ >= s_.size()) fail("unexpected end");
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const std::string rest(s_.substr(pos_));
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(rest, &used);
      } catch (const std::exception&) {
        fail("bad number");
      }
      pos_ += used;
      return v;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      const std::string name(s_.substr(start, pos_ - start));
      const auto it = constants_.find(name);
      if (it == constants_.end()) fail("unknown name '" + name + "'");
      return it->second;
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string_view s_;
  const std::map<std::string, double>& constants_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Constants available in config expressions: pi and the rectangle eigenvalues lambda1..lambda9.
inline const std::map<std::string, double>& expression_constants() {
  static const std::map<std::string, double> table = [] {
    std::map<std::string, double> t{{"pi", std::numbers::pi}};
    const std::vector<double> lam = rectangle_eigenvalues(9);
    for (std::size_t k = 0; k < lam.size(); ++k) t["lambda" + std::to_string(k + 1)] = lam[k];
    return t;
  }();
  return table;
}

inline double evaluate_expression(std::string_view text) {
  return detail::ExpressionParser(text, expression_constants()).parse();
}

/// INI-style `key = value` file with `[section]` headers and `#` comments.
///
/// Keys are addressed as "section.key". Values may be arithmetic expressions,
/// comma-separated lists, or `;`-separated groups of lists.
class Config {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static Config parse(std::string_view text, std::string source = "<config>") {
    Config cfg;
    cfg.source_ = std::move(source);
    std::string section;
    int lineno = 0;
    for (const std::string& raw : split(text, '\n')) {
      ++lineno;
      std::string line = raw;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') cfg.fail(lineno, "unterminated section header");
        section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
        if (section.empty()) cfg.fail(lineno, "empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) cfg.fail(lineno, "expected 'key = value'");
      const std::string key = detail::trim(std::string_view(line).substr(0, eq));
      const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
      if (key.empty()) cfg.fail(lineno, "empty key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (cfg.entries_.count(full)) cfg.fail(lineno, "duplicate key '" + full + "'");
      cfg.entries_[full] = Entry{value, lineno};
    }
    return cfg;
  }

  static Config load(const std::filesystem::path& path) {
    std::string text;
    try {
      text = read_file(path);
    } catch (const IoError& e) {
      throw ConfigError(e.what());
    }
    return parse(text, path.string());
  }

  [[nodiscard]] bool has(const std::string& key) const { return entries_.count(key) > 0; }

  [[nodiscard]] std::string string(const std::string& key) const { return entry(key).value; }
  [[nodiscard]] std::string string(const std::string& key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
  }

  [[nodiscard]] double number(const std::string& key) const {
    const Entry& e = entry(key);
    return evaluate(e, e.value, key);
  }
  [[nodiscard]] double number(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  [[nodiscard]] int integer(const std::string& key) const {
    const double v = number(key);
    if (v != std::floor(v) || std::abs(v) > 1e9) fail(entry(key).line, key + ": expected an integer");
    return static_cast<int>(v);
  }
  [[nodiscard]] int integer(const std::string& key, int fallback) const {
    return has(key) ? integer(key) : fallback;
  }

  [[nodiscard]] std::vector<double> numbers(const std::string& key) const {
    const Entry& e = entry(key);
    std::vector<double> out;
    for (const std::string& part : split(e.value, ',')) out.push_back(evaluate(e, part, key));
    return out;
  }
  [[nodiscard]] std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
    return has(key) ? numbers(key) : fallback;
  }

  [[nodiscard]] std::vector<std::vector<double>> groups(const std::string& key) const {
    const Entry& e = entry(key);
    std::vector<std::vector<double>> out;
    for (const std::string& grp : split(e.value, ';')) {
      std::vector<double> g;
      for (const std::string& part : split(grp, ',')) g.push_back(evaluate(e, part, key));
      out.push_back(std::move(g));
    }
    return out;
  }

  /// Throws on any key outside `known`, naming its line.
  void require_known(const std::set<std::string>& known) const {
    for (const auto& [k, e] : entries_) {
      if (!known.count(k)) fail(e.line, "unknown key '" + k + "'");
    }
  }

  [[noreturn]] void fail_key(const std::string& key, const std::string& msg) const {
    const auto it = entries_.find(key);
    fail(it == entries_.end() ? 0 : it->second.line, key + ": " + msg);
  }

  /// Hash of the parsed content; comments, spacing and key order do not matter.
  [[nodiscard]] std::string hash() const {
    std::uint64_t h = fnv1a64("");
    for (const auto& [k, e] : entries_) {
      h = fnv1a64(k, h);
      h = fnv1a64("=", h);
      h = fnv1a64(e.value, h);
      h = fnv1a64("\n", h);
    }
    return hex64(h);
  }

  [[nodiscard]] const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ConfigError(source_ + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + msg);
  }

  const Entry& entry(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) fail(0, "missing required key '" + key + "'");
    return it->second;
  }

  double evaluate(const Entry& e, const std::string& text, const std::string& key) const {
    try {
      const double v = evaluate_expression(text);
      if (!std::isfinite(v)) fail(e.line, key + ": value is not finite");
      return v;
    } catch (const ConfigError& err) {
      if (std::string(err.what()).rfind(source_, 0) == 0) throw;
      fail(e.line, key + ": " + err.what());
    }
  }

  std::string source_;
  std::map<std::string, Entry> entries_;
};

}  // namespace flatfiber
