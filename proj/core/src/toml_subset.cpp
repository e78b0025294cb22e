#include <cctype>
#include <charconv>
#include <locale>
#include <sstream>
#include <string_view>

#include "mars/config.hpp"

namespace mars {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Drop a trailing comment that is not inside a string.
std::string_view strip_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

class ValueParser {
 public:
  ValueParser(std::string_view text, int line) : s_(text), line_(line) {}

  nlohmann::json parse() {
    auto v = value();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError("toml line " + std::to_string(line_) + ": " + why);
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  nlohmann::json value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return string();
    if (c == '[') return array();
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return number();
  }

  nlohmann::json string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
        const char e = s_[++pos_];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      } else {
        out += s_[pos_];
      }
      ++pos_;
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  nlohmann::json array() {
    ++pos_;
    nlohmann::json arr = nlohmann::json::array();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return arr;
    }
    while (true) {
      arr.push_back(value());
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return arr;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      fail("expected ',' or ']'");
    }
  }

  nlohmann::json number() {
    std::size_t end = pos_;
    while (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '.' ||
                               s_[end] == '-' || s_[end] == '+' || s_[end] == '_'))
      ++end;
    std::string token;
    for (char ch : s_.substr(pos_, end - pos_))
      if (ch != '_') token += ch;
    pos_ = end;
    if (token.empty()) fail("expected a value");
    const bool integral = token.find_first_of(".eE") == std::string::npos;
    if (integral) {
      std::int64_t v = 0;
      const char* first = token.data() + (token.front() == '+' ? 1 : 0);
      auto [p, ec] = std::from_chars(first, token.data() + token.size(), v);
      if (ec == std::errc() && p == token.data() + token.size()) {
        if (v >= 0) return static_cast<std::uint64_t>(v);
        return v;
      }
    } else {
      std::istringstream in(token);
      in.imbue(std::locale::classic());
      double d = 0.0;
      in >> d;
      if (in && in.peek() == std::char_traits<char>::eof()) return d;
    }
    fail("cannot parse value '" + token + "'");
  }

  std::string_view s_;
  int line_;
  std::size_t pos_ = 0;
};

}  // namespace

nlohmann::json parse_toml_subset(const std::string& text) {
  nlohmann::json doc = nlohmann::json::object();
  nlohmann::json* section = &doc;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3)
        throw ConfigError("toml line " + std::to_string(line) + ": malformed section header");
      const std::string name(trim(s.substr(1, s.size() - 2)));
      if (doc.contains(name))
        throw ConfigError("toml line " + std::to_string(line) + ": duplicate section [" + name + "]");
      doc[name] = nlohmann::json::object();
      section = &doc[name];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("toml line " + std::to_string(line) + ": expected key = value");
    std::string key(trim(s.substr(0, eq)));
    if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
    if (key.empty()) throw ConfigError("toml line " + std::to_string(line) + ": empty key");
    if (section->contains(key))
      throw ConfigError("toml line " + std::to_string(line) + ": duplicate key '" + key + "'");
    (*section)[key] = ValueParser(s.substr(eq + 1), line).parse();
  }
  return doc;
}

}  // namespace mars
