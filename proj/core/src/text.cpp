#include "dctl/text.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <regex>

#include <openssl/evp.h>

#include "dctl/error.hpp"

namespace dctl {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_word(char c) {
  auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) != 0;
}

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string{s.substr(b, e - b)};
}

std::string to_lower(std::string_view s) {
  std::string out{s};
  std::transform(out.begin(), out.end(), out.begin(), [](char c) {
    auto u = static_cast<unsigned char>(c);
    return u < 0x80 ? static_cast<char>(std::tolower(u)) : c;
  });
  return out;
}

std::string canonicalize(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c);
  }
  return to_lower(out);
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::InvalidArgument, "sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0x0f]);
  }
  return out;
}

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (is_word(c)) {
      auto u = static_cast<unsigned char>(c);
      cur.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::size_t whitespace_token_count(std::string_view s) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : s) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++n;
    }
  }
  return n;
}

std::vector<std::string> numeric_literals(std::string_view s) {
  static const std::regex kNumber{R"((^|[^A-Za-z0-9_.])(-?[0-9]+(?:\.[0-9]+)?))"};
  std::vector<std::string> out;
  std::string text{s};
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kNumber);
       it != std::sregex_iterator(); ++it) {
    out.push_back((*it)[2].str());
  }
  return out;
}

std::string format_number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15) {
    return std::to_string(static_cast<long long>(v));
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string out{buf};
  while (!out.empty() && out.back() == '0') out.pop_back();
  if (!out.empty() && out.back() == '.') out.pop_back();
  return out;
}

std::optional<double> parse_number(std::string_view s) {
  std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size()) return std::nullopt;
  return v;
}

std::string display_value(const json& v) {
  switch (v.type()) {
    case json::value_t::string: return v.get<std::string>();
    case json::value_t::number_integer:
    case json::value_t::number_unsigned:
    case json::value_t::number_float: return format_number(v.get<double>());
    case json::value_t::boolean: return v.get<bool>() ? "true" : "false";
    case json::value_t::null: return "null";
    case json::value_t::array: {
      std::string out;
      for (const auto& e : v) {
        if (!out.empty()) out += ", ";
        out += display_value(e);
      }
      return out;
    }
    default: return v.dump();
  }
}

json canonical_value(const json& v) {
  switch (v.type()) {
    case json::value_t::number_float: {
      double d = v.get<double>();
      if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 9e15) {
        return json(static_cast<std::int64_t>(d));
      }
      return v;
    }
    case json::value_t::number_unsigned: return json(static_cast<std::int64_t>(v.get<std::uint64_t>()));
    case json::value_t::string: return json(trim(v.get<std::string>()));
    case json::value_t::array: {
      json out = json::array();
      for (const auto& e : v) out.push_back(canonical_value(e));
      return out;
    }
    case json::value_t::object: {
      json out = json::object();
      for (const auto& [k, e] : v.items()) out[k] = canonical_value(e);
      return out;
    }
    default: return v;
  }
}

json substitute_placeholders(const json& tmpl, const json& bindings,
                             std::vector<std::string>& missing) {
  if (tmpl.is_string()) {
    const auto& s = tmpl.get_ref<const std::string&>();
    if (s.size() > 3 && s.rfind("${", 0) == 0 && s.back() == '}' &&
        s.find("${", 2) == std::string::npos) {
      std::string name = s.substr(2, s.size() - 3);
      if (bindings.contains(name) && !bindings[name].is_null()) return bindings[name];
      missing.push_back(name);
      return json();
    }
    std::string out;
    std::size_t pos = 0;
    while (pos < s.size()) {
      auto open = s.find("${", pos);
      if (open == std::string::npos) {
        out.append(s, pos, std::string::npos);
        break;
      }
      auto close = s.find('}', open);
      if (close == std::string::npos) {
        out.append(s, pos, std::string::npos);
        break;
      }
      out.append(s, pos, open - pos);
      std::string name = s.substr(open + 2, close - open - 2);
      if (bindings.contains(name) && !bindings[name].is_null()) {
        out += display_value(bindings[name]);
      } else {
        missing.push_back(name);
      }
      pos = close + 1;
    }
    return out;
  }
  if (tmpl.is_array()) {
    json out = json::array();
    for (const auto& e : tmpl) out.push_back(substitute_placeholders(e, bindings, missing));
    return out;
  }
  if (tmpl.is_object()) {
    json out = json::object();
    for (const auto& [k, e] : tmpl.items()) out[k] = substitute_placeholders(e, bindings, missing);
    return out;
  }
  return tmpl;
}

}  // namespace dctl

namespace dctl {

std::string key_segment(std::string_view s) {
  std::string out = to_lower(trim(s));
  for (auto& c : out) {
    if (c == ' ' || c == '.' || c == '\t') c = '_';
  }
  return out;
}

std::string first_sentence(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if ((c == '.' || c == '!' || c == '?') && (i + 1 == s.size() || s[i + 1] == ' ')) {
      return trim(s.substr(0, i + 1));
    }
  }
  return trim(s);
}

}  // namespace dctl
