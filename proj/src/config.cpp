#include "ladderbot/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "ladderbot/errors.hpp"

namespace ladderbot {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

// Strips a trailing comment, ignoring '#' inside double quotes.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') {
      quoted = !quoted;
    } else if (line[i] == '#' && !quoted) {
      return line.substr(0, i);
    }
  }
  return line;
}

double parse_double(const std::string& key, const std::string& text) {
  double value = 0.0;
  const auto* begin = text.data();
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::ConfigInvalid, "key '" + key + "' expects a number, got '" + text + "'");
  }
  return value;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& source) {
  KeyValueConfig cfg;
  cfg.source_ = source;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(strip_comment(line));
    if (body.empty()) {
      continue;
    }
    const auto where = source + ":" + std::to_string(line_no);
    if (body.front() == '[') {
      if (body.back() != ']' || body.size() < 3) {
        throw Error(ErrorCode::ConfigInvalid, where + ": malformed section header");
      }
      section = trim(std::string_view(body).substr(1, body.size() - 2));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigInvalid, where + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw Error(ErrorCode::ConfigInvalid, where + ": empty key or value");
    }
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    cfg.values_[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::ConfigInvalid, "cannot open config file " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void KeyValueConfig::merge(const KeyValueConfig& other) {
  for (const auto& [k, v] : other.values_) {
    values_[k] = v;
  }
}

std::optional<std::string> KeyValueConfig::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    return std::nullopt;
  }
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return raw(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto v = raw(key);
  return v ? parse_double(key, *v) : fallback;
}

long KeyValueConfig::get_int(const std::string& key, long fallback) const {
  auto v = raw(key);
  if (!v) {
    return fallback;
  }
  long value = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), value);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw Error(ErrorCode::ConfigInvalid, "key '" + key + "' expects an integer, got '" + *v + "'");
  }
  return value;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = raw(key);
  if (!v) {
    return fallback;
  }
  if (*v == "true" || *v == "1" || *v == "on") {
    return true;
  }
  if (*v == "false" || *v == "0" || *v == "off") {
    return false;
  }
  throw Error(ErrorCode::ConfigInvalid, "key '" + key + "' expects a boolean, got '" + *v + "'");
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key,
                                                const std::vector<double>& fallback) const {
  auto v = raw(key);
  if (!v) {
    return fallback;
  }
  std::string body = *v;
  if (body.size() < 2 || body.front() != '[' || body.back() != ']') {
    throw Error(ErrorCode::ConfigInvalid, "key '" + key + "' expects a [a, b, ...] list");
  }
  body = body.substr(1, body.size() - 2);
  std::vector<double> out;
  std::istringstream parts(body);
  std::string item;
  while (std::getline(parts, item, ',')) {
    const auto t = trim(item);
    if (!t.empty()) {
      out.push_back(parse_double(key, t));
    }
  }
  return out;
}

}  // namespace ladderbot
