#include "value.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace copic::planlang::detail {

namespace {

void append_key(std::string& out, const Value& v, int depth) {
  if (depth > 64) throw std::invalid_argument("key nesting too deep");
  if (v.is<None>()) {
    out += 'N';
  } else if (v.is<bool>()) {
    out += v.as<bool>() ? "i1" : "i0";
  } else if (v.is<std::int64_t>()) {
    out += 'i';
    out += std::to_string(v.as<std::int64_t>());
  } else if (v.is<double>()) {
    const double d = v.as<double>();
    // Integral floats hash like the equal int.
    if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 9.2e18) {
      out += 'i';
      out += std::to_string(static_cast<std::int64_t>(d));
    } else {
      char buf[64];
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
      out += 'f';
      out.append(buf, p);
    }
  } else if (v.is<std::string>()) {
    const auto& s = v.as<std::string>();
    out += 's';
    out += std::to_string(s.size());
    out += ':';
    out += s;
  } else if (v.is<TuplePtr>()) {
    const auto& t = *v.as<TuplePtr>();
    out += "t";
    out += std::to_string(t.size());
    out += '(';
    for (const auto& e : t) append_key(out, e, depth + 1);
    out += ')';
  } else {
    throw std::invalid_argument(v.is<ListPtr>() ? "unhashable type: 'list'"
                                                : "unhashable type: 'dict'");
  }
}

}  // namespace

std::string key_of(const Value& v) {
  std::string out;
  append_key(out, v, 0);
  return out;
}

const Value* Map::find(const Value& key) const {
  auto it = index_.find(key_of(key));
  return it == index_.end() ? nullptr : &entries_[it->second].second;
}

Value* Map::find(const Value& key) {
  auto it = index_.find(key_of(key));
  return it == index_.end() ? nullptr : &entries_[it->second].second;
}

bool Map::set(const Value& key, Value value) {
  std::string k = key_of(key);
  auto it = index_.find(k);
  if (it != index_.end()) {
    entries_[it->second].second = std::move(value);
    return false;
  }
  index_.emplace(std::move(k), entries_.size());
  entries_.emplace_back(key, std::move(value));
  return true;
}

}  // namespace copic::planlang::detail
