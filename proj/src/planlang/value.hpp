#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace copic::planlang::detail {

struct Value;
using List = std::vector<Value>;
using ListPtr = std::shared_ptr<List>;
using TuplePtr = std::shared_ptr<const List>;
class Map;
using MapPtr = std::shared_ptr<Map>;

struct None {
  bool operator==(const None&) const = default;
};

/// Python-like dynamic value. Lists and maps are shared references, so
/// aliasing behaves as in the source language.
struct Value {
  std::variant<None, bool, std::int64_t, double, std::string, ListPtr, TuplePtr, MapPtr> v;

  Value() = default;
  Value(None) {}
  Value(bool b) : v(b) {}
  Value(std::int64_t i) : v(i) {}
  Value(int i) : v(static_cast<std::int64_t>(i)) {}
  Value(double d) : v(d) {}
  Value(std::string s) : v(std::move(s)) {}
  Value(const char* s) : v(std::string(s)) {}
  Value(ListPtr l) : v(std::move(l)) {}
  Value(TuplePtr t) : v(std::move(t)) {}
  Value(MapPtr m) : v(std::move(m)) {}

  template <typename T>
  bool is() const {
    return std::holds_alternative<T>(v);
  }
  template <typename T>
  const T& as() const {
    return std::get<T>(v);
  }
  bool is_none() const { return is<None>(); }
  bool is_number() const { return is<bool>() || is<std::int64_t>() || is<double>(); }
};

/// Insertion-ordered map. Keys are compared by value, with 1 == 1.0 == True
/// as in Python.
class Map {
 public:
  const Value* find(const Value& key) const;
  Value* find(const Value& key);
  /// Inserts or overwrites; returns true when a new key was added.
  bool set(const Value& key, Value value);
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<Value, Value>>& entries() const { return entries_; }
  void clear() {
    entries_.clear();
    index_.clear();
  }

 private:
  std::vector<std::pair<Value, Value>> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Canonical hash-key text; throws std::invalid_argument for unhashable values.
std::string key_of(const Value& v);

}  // namespace copic::planlang::detail
