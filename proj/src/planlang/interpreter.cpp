#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "copic/env/unitbuild_env.hpp"
#include "copic/errors.hpp"
#include "copic/planlang/parser.hpp"
#include "copic/planlang/program.hpp"
#include "value.hpp"

namespace copic::planlang {

namespace {

using detail::List;
using detail::ListPtr;
using detail::Map;
using detail::MapPtr;
using detail::None;
using detail::TuplePtr;
using detail::Value;
using Int = std::int64_t;

constexpr int kMaxValueDepth = 100;

// Internal runtime error; converted to ProgramFault at the boundary.
struct Fault {
  std::string message;
};

[[noreturn]] void fault(std::string message) { throw Fault{std::move(message)}; }

enum class Flow { kNormal, kBreak, kContinue, kReturn };

std::string type_name(const Value& v) {
  switch (v.v.index()) {
    case 0:
      return "NoneType";
    case 1:
      return "bool";
    case 2:
      return "int";
    case 3:
      return "float";
    case 4:
      return "str";
    case 5:
      return "list";
    case 6:
      return "tuple";
    default:
      return "dict";
  }
}

bool is_intlike(const Value& v) { return v.is<bool>() || v.is<Int>(); }

Int as_int(const Value& v) { return v.is<bool>() ? (v.as<bool>() ? 1 : 0) : v.as<Int>(); }

double as_double(const Value& v) {
  if (v.is<double>()) return v.as<double>();
  return static_cast<double>(as_int(v));
}

std::string format_double(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
  std::string s(buf, p);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

bool truthy(const Value& v) {
  switch (v.v.index()) {
    case 0:
      return false;
    case 1:
      return v.as<bool>();
    case 2:
      return v.as<Int>() != 0;
    case 3:
      return v.as<double>() != 0.0;
    case 4:
      return !v.as<std::string>().empty();
    case 5:
      return !v.as<ListPtr>()->empty();
    case 6:
      return !v.as<TuplePtr>()->empty();
    default:
      return v.as<MapPtr>()->size() != 0;
  }
}

void to_text(std::string& out, const Value& v, bool repr, int depth);

void seq_text(std::string& out, const List& items, int depth) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i != 0) out += ", ";
    to_text(out, items[i], true, depth + 1);
  }
}

void to_text(std::string& out, const Value& v, bool repr, int depth) {
  if (depth > kMaxValueDepth) fault("maximum recursion depth exceeded while formatting");
  switch (v.v.index()) {
    case 0:
      out += "None";
      return;
    case 1:
      out += v.as<bool>() ? "True" : "False";
      return;
    case 2:
      out += std::to_string(v.as<Int>());
      return;
    case 3:
      out += format_double(v.as<double>());
      return;
    case 4:
      if (!repr) {
        out += v.as<std::string>();
      } else {
        out += '\'';
        for (char c : v.as<std::string>()) {
          if (c == '\'' || c == '\\') out += '\\';
          out += c;
        }
        out += '\'';
      }
      return;
    case 5:
      out += '[';
      seq_text(out, *v.as<ListPtr>(), depth);
      out += ']';
      return;
    case 6: {
      const auto& t = *v.as<TuplePtr>();
      out += '(';
      seq_text(out, t, depth);
      if (t.size() == 1) out += ',';
      out += ')';
      return;
    }
    default: {
      out += '{';
      bool first = true;
      for (const auto& [k, val] : v.as<MapPtr>()->entries()) {
        if (!first) out += ", ";
        first = false;
        to_text(out, k, true, depth + 1);
        out += ": ";
        to_text(out, val, true, depth + 1);
      }
      out += '}';
    }
  }
}

std::string str_of(const Value& v) {
  std::string out;
  to_text(out, v, false, 0);
  return out;
}

bool equals(const Value& a, const Value& b, int depth = 0) {
  if (depth > kMaxValueDepth) fault("maximum recursion depth exceeded in comparison");
  if (a.is_number() && b.is_number()) {
    if (is_intlike(a) && is_intlike(b)) return as_int(a) == as_int(b);
    return as_double(a) == as_double(b);
  }
  if (a.v.index() != b.v.index()) return false;
  switch (a.v.index()) {
    case 0:
      return true;
    case 4:
      return a.as<std::string>() == b.as<std::string>();
    case 5:
    case 6: {
      const List& x = a.is<ListPtr>() ? *a.as<ListPtr>() : *a.as<TuplePtr>();
      const List& y = b.is<ListPtr>() ? *b.as<ListPtr>() : *b.as<TuplePtr>();
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!equals(x[i], y[i], depth + 1)) return false;
      }
      return true;
    }
    default: {
      const Map& x = *a.as<MapPtr>();
      const Map& y = *b.as<MapPtr>();
      if (x.size() != y.size()) return false;
      for (const auto& [k, v] : x.entries()) {
        const Value* other = y.find(k);
        if (other == nullptr || !equals(v, *other, depth + 1)) return false;
      }
      return true;
    }
  }
}

// Python ordering for numbers, strings and same-typed sequences.
bool less(const Value& a, const Value& b, int depth = 0) {
  if (depth > kMaxValueDepth) fault("maximum recursion depth exceeded in comparison");
  if (a.is_number() && b.is_number()) {
    if (is_intlike(a) && is_intlike(b)) return as_int(a) < as_int(b);
    return as_double(a) < as_double(b);
  }
  if (a.is<std::string>() && b.is<std::string>()) return a.as<std::string>() < b.as<std::string>();
  const bool lists = a.is<ListPtr>() && b.is<ListPtr>();
  const bool tuples = a.is<TuplePtr>() && b.is<TuplePtr>();
  if (lists || tuples) {
    const List& x = lists ? *a.as<ListPtr>() : *a.as<TuplePtr>();
    const List& y = lists ? *b.as<ListPtr>() : *b.as<TuplePtr>();
    for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
      if (!equals(x[i], y[i], depth + 1)) return less(x[i], y[i], depth + 1);
    }
    return x.size() < y.size();
  }
  fault("'<' not supported between instances of '" + type_name(a) + "' and '" + type_name(b) +
        "'");
}

Int add_checked(Int a, Int b) {
  Int out = 0;
  if (__builtin_add_overflow(a, b, &out)) fault("integer overflow");
  return out;
}
Int sub_checked(Int a, Int b) {
  Int out = 0;
  if (__builtin_sub_overflow(a, b, &out)) fault("integer overflow");
  return out;
}
Int mul_checked(Int a, Int b) {
  Int out = 0;
  if (__builtin_mul_overflow(a, b, &out)) fault("integer overflow");
  return out;
}

Int floor_div(Int a, Int b) {
  if (b == 0) fault("integer division or modulo by zero");
  if (a == std::numeric_limits<Int>::min() && b == -1) fault("integer overflow");
  Int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

Int py_mod(Int a, Int b) {
  if (b == 0) fault("integer division or modulo by zero");
  if (b == -1) return 0;
  Int r = a % b;
  if (r != 0 && ((r < 0) != (b < 0))) r += b;
  return r;
}

std::optional<Int> index_of(const Value& idx, std::size_t size, bool clamp) {
  if (!is_intlike(idx)) fault("indices must be integers, not " + type_name(idx));
  Int i = as_int(idx);
  const Int n = static_cast<Int>(size);
  if (i < 0) i += n;
  if (clamp) return std::clamp<Int>(i, 0, n);
  if (i < 0 || i >= n) return std::nullopt;
  return i;
}

class Interpreter {
 public:
  Interpreter(const Module& module, const SandboxLimits& limits) : module_(module), lim_(limits) {}

  ~Interpreter() {
    // Break any reference cycles the program built.
    for (auto& l : lists_) l->clear();
    for (auto& m : maps_) m->clear();
  }

  Interpreter(const Interpreter&) = delete;
  Interpreter& operator=(const Interpreter&) = delete;

  int steps() const { return steps_; }
  int line() const { return line_; }

  ListPtr new_list(List items = {}) {
    check_len(items.size());
    return track(std::move(items));
  }
  // For input views, which are sized by the environment rather than the program.
  ListPtr track(List items) {
    auto l = std::make_shared<List>(std::move(items));
    lists_.push_back(l);
    return l;
  }
  MapPtr new_map() {
    auto m = std::make_shared<Map>();
    maps_.push_back(m);
    return m;
  }

  void map_set(Map& m, const Value& key, Value value) {
    try {
      if (m.set(key, std::move(value))) check_len(m.size());
    } catch (const std::invalid_argument& e) {
      fault(e.what());
    }
  }

  Value run(const std::string& entry, std::vector<Value> args) {
    for (const auto& s : module_.body) {
      if (s->kind == StmtKind::kDef) functions_[s->text] = s.get();
    }
    frame_ = &globals_;
    for (const auto& s : module_.body) {
      if (s->kind != StmtKind::kDef) exec(*s);
    }
    return call_function(entry, std::move(args));
  }

 private:
  using Frame = std::unordered_map<std::string, Value>;

  void tick() {
    if (++steps_ > lim_.max_interp_steps) {
      throw SandboxBudgetExceeded("max_interp_steps (" + std::to_string(lim_.max_interp_steps) +
                                  ")");
    }
  }

  void check_len(std::size_t n) const {
    if (n > static_cast<std::size_t>(lim_.max_collection_len)) {
      throw SandboxBudgetExceeded("max_collection_len (" +
                                  std::to_string(lim_.max_collection_len) + ")");
    }
  }

  // Strings get a proportional cap so that repeated doubling cannot exhaust memory.
  void check_str(std::size_t n) const {
    if (n > static_cast<std::size_t>(lim_.max_collection_len) * 64) {
      throw SandboxBudgetExceeded("string length");
    }
  }

  Value call_function(const std::string& name, std::vector<Value> args) {
    auto it = functions_.find(name);
    if (it == functions_.end()) fault("name '" + name + "' is not defined");
    const Stmt& def = *it->second;
    if (args.size() != def.names.size()) {
      fault(name + "() takes " + std::to_string(def.names.size()) + " arguments but " +
            std::to_string(args.size()) + " were given");
    }
    if (depth_ >= lim_.max_call_depth) {
      throw SandboxBudgetExceeded("max_call_depth (" + std::to_string(lim_.max_call_depth) + ")");
    }
    tick();
    Frame locals;
    for (std::size_t i = 0; i < args.size(); ++i) locals[def.names[i]] = std::move(args[i]);
    Frame* saved = frame_;
    frame_ = &locals;
    ++depth_;
    Flow flow = exec_block(def.blocks[0]);
    --depth_;
    frame_ = saved;
    if (flow == Flow::kReturn) {
      Value r = std::move(ret_);
      ret_ = Value();
      return r;
    }
    return Value();
  }

  Flow exec_block(const Block& b) {
    for (const auto& s : b) {
      Flow f = exec(*s);
      if (f != Flow::kNormal) return f;
    }
    return Flow::kNormal;
  }

  Flow exec(const Stmt& s) {
    tick();
    line_ = s.pos.line;
    switch (s.kind) {
      case StmtKind::kExpr:
        eval(*s.exprs[0]);
        return Flow::kNormal;
      case StmtKind::kAssign:
        assign(*s.exprs[0], eval(*s.exprs[1]));
        return Flow::kNormal;
      case StmtKind::kAugAssign:
        aug_assign(s);
        return Flow::kNormal;
      case StmtKind::kIf:
        for (std::size_t i = 0; i < s.exprs.size(); ++i) {
          if (truthy(eval(*s.exprs[i]))) return exec_block(s.blocks[i]);
        }
        if (s.blocks.size() > s.exprs.size()) return exec_block(s.blocks.back());
        return Flow::kNormal;
      case StmtKind::kFor:
        return exec_for(s);
      case StmtKind::kWhile:
        while (truthy(eval(*s.exprs[0]))) {
          tick();
          Flow f = exec_block(s.blocks[0]);
          if (f == Flow::kBreak) break;
          if (f == Flow::kReturn) return f;
        }
        return Flow::kNormal;
      case StmtKind::kReturn:
        ret_ = s.exprs.empty() ? Value() : eval(*s.exprs[0]);
        return Flow::kReturn;
      case StmtKind::kBreak:
        return Flow::kBreak;
      case StmtKind::kContinue:
        return Flow::kContinue;
      case StmtKind::kPass:
      case StmtKind::kImport:
        return Flow::kNormal;
      case StmtKind::kDef:
        fault("nested function definitions are not supported");
    }
    return Flow::kNormal;
  }

  // Iterates `iterable`, calling body(item) for each element. Lists are
  // walked live (appends during iteration are seen, as in Python); other
  // iterables are snapshotted first.
  template <typename F>
  Flow for_each(const Value& iterable, F body) {
    if (iterable.is<ListPtr>()) {
      ListPtr l = iterable.as<ListPtr>();
      for (std::size_t i = 0; i < l->size(); ++i) {
        Flow f = body((*l)[i]);
        if (f == Flow::kBreak) break;
        if (f == Flow::kReturn) return f;
      }
      return Flow::kNormal;
    }
    List items = snapshot(iterable);
    for (const auto& item : items) {
      Flow f = body(item);
      if (f == Flow::kBreak) break;
      if (f == Flow::kReturn) return f;
    }
    return Flow::kNormal;
  }

  List snapshot(const Value& v) {
    if (v.is<ListPtr>()) return *v.as<ListPtr>();
    if (v.is<TuplePtr>()) return *v.as<TuplePtr>();
    if (v.is<MapPtr>()) {
      List keys;
      for (const auto& [k, _] : v.as<MapPtr>()->entries()) keys.push_back(k);
      return keys;
    }
    if (v.is<std::string>()) {
      List chars;
      for (char c : v.as<std::string>()) chars.emplace_back(std::string(1, c));
      return chars;
    }
    fault("'" + type_name(v) + "' object is not iterable");
  }

  void bind_targets(const std::vector<std::string>& names, const Value& item) {
    if (names.size() == 1) {
      (*frame_)[names[0]] = item;
      return;
    }
    List parts = snapshot(item);
    if (parts.size() != names.size()) {
      fault("cannot unpack " + std::to_string(parts.size()) + " values into " +
            std::to_string(names.size()) + " targets");
    }
    for (std::size_t i = 0; i < names.size(); ++i) (*frame_)[names[i]] = parts[i];
  }

  Flow exec_for(const Stmt& s) {
    Value iterable = eval(*s.exprs[0]);
    return for_each(iterable, [&](const Value& item) {
      tick();
      bind_targets(s.names, item);
      Flow f = exec_block(s.blocks[0]);
      return f == Flow::kContinue ? Flow::kNormal : f;
    });
  }

  void assign(const Expr& target, Value value) {
    switch (target.kind) {
      case ExprKind::kName:
        (*frame_)[target.text] = std::move(value);
        return;
      case ExprKind::kTuple: {
        std::vector<std::string> names;
        for (const auto& c : target.children) names.push_back(c->text);
        bind_targets(names, value);
        return;
      }
      case ExprKind::kSubscript: {
        Value obj = eval(*target.children[0]);
        Value idx = eval(*target.children[1]);
        if (obj.is<ListPtr>()) {
          auto& l = *obj.as<ListPtr>();
          auto i = index_of(idx, l.size(), false);
          if (!i) fault("list assignment index out of range");
          l[static_cast<std::size_t>(*i)] = std::move(value);
        } else if (obj.is<MapPtr>()) {
          map_set(*obj.as<MapPtr>(), idx, std::move(value));
        } else {
          fault("'" + type_name(obj) + "' object does not support item assignment");
        }
        return;
      }
      default:
        fault("invalid assignment target");
    }
  }

  void aug_assign(const Stmt& s) {
    const Expr& target = *s.exprs[0];
    Value rhs = eval(*s.exprs[1]);
    if (target.kind == ExprKind::kName) {
      Value cur = lookup(target.text);
      if (s.text == "+" && cur.is<ListPtr>() && rhs.is<ListPtr>()) {
        // In-place extend, as Python does for lists.
        auto& l = *cur.as<ListPtr>();
        List extra = *rhs.as<ListPtr>();
        check_len(l.size() + extra.size());
        l.insert(l.end(), extra.begin(), extra.end());
        return;
      }
      (*frame_)[target.text] = binary(s.text, cur, rhs);
      return;
    }
    // Subscript target: evaluate container and key once.
    Value obj = eval(*target.children[0]);
    Value idx = eval(*target.children[1]);
    if (obj.is<ListPtr>()) {
      auto& l = *obj.as<ListPtr>();
      auto i = index_of(idx, l.size(), false);
      if (!i) fault("list index out of range");
      Value updated = binary(s.text, l[static_cast<std::size_t>(*i)], rhs);
      l[static_cast<std::size_t>(*i)] = std::move(updated);
    } else if (obj.is<MapPtr>()) {
      Map& m = *obj.as<MapPtr>();
      const Value* cur = nullptr;
      try {
        cur = m.find(idx);
      } catch (const std::invalid_argument& e) {
        fault(e.what());
      }
      if (cur == nullptr) fault("missing key " + repr(idx));
      map_set(m, idx, binary(s.text, *cur, rhs));
    } else {
      fault("'" + type_name(obj) + "' object does not support item assignment");
    }
  }

  static std::string repr(const Value& v) {
    std::string out;
    to_text(out, v, true, 0);
    return out;
  }

  Value lookup(const std::string& name) const {
    auto it = frame_->find(name);
    if (it != frame_->end()) return it->second;
    auto g = globals_.find(name);
    if (g != globals_.end()) return g->second;
    if (functions_.count(name) != 0) fault("function '" + name + "' used as a value");
    fault("name '" + name + "' is not defined");
  }

  Value make_string(std::string s) {
    check_str(s.size());
    return Value(std::move(s));
  }

  Value eval(const Expr& e) {
    const auto& c = e.children;
    switch (e.kind) {
      case ExprKind::kName:
        return lookup(e.text);
      case ExprKind::kInt:
        return Value(e.int_value);
      case ExprKind::kFloat:
        return Value(e.float_value);
      case ExprKind::kBool:
        return Value(e.bool_value);
      case ExprKind::kNone:
        return Value();
      case ExprKind::kString:
        return Value(e.text);
      case ExprKind::kFString: {
        std::string out;
        for (const auto& part : c) {
          if (part->kind == ExprKind::kString) {
            out += part->text;
          } else {
            out += str_of(eval(*part->children[0]));
          }
          check_str(out.size());
        }
        return Value(std::move(out));
      }
      case ExprKind::kFormatField:
        return eval(*c[0]);
      case ExprKind::kList: {
        List items;
        for (const auto& x : c) items.push_back(eval(*x));
        return new_list(std::move(items));
      }
      case ExprKind::kTuple: {
        List items;
        for (const auto& x : c) items.push_back(eval(*x));
        return Value(TuplePtr(std::make_shared<const List>(std::move(items))));
      }
      case ExprKind::kMap: {
        MapPtr m = new_map();
        for (std::size_t i = 0; i + 1 < c.size(); i += 2) {
          Value k = eval(*c[i]);
          map_set(*m, k, eval(*c[i + 1]));
        }
        return m;
      }
      case ExprKind::kListComp:
        return list_comp(e);
      case ExprKind::kMapComp:
        return map_comp(e);
      case ExprKind::kSubscript:
        return subscript(eval(*c[0]), eval(*c[1]));
      case ExprKind::kSlice: {
        Value obj = eval(*c[0]);
        std::optional<Value> lo;
        std::optional<Value> hi;
        if (c[1]) lo = eval(*c[1]);
        if (c[2]) hi = eval(*c[2]);
        return slice(obj, lo, hi);
      }
      case ExprKind::kCall: {
        std::vector<Value> args;
        for (const auto& x : c) args.push_back(eval(*x));
        if (functions_.count(e.text) != 0) return call_function(e.text, std::move(args));
        tick();
        return builtin(e.text, args);
      }
      case ExprKind::kMethodCall: {
        Value obj = eval(*c[0]);
        std::vector<Value> args;
        for (std::size_t i = 1; i < c.size(); ++i) args.push_back(eval(*c[i]));
        tick();
        return method(e.text, obj, args);
      }
      case ExprKind::kUnary: {
        Value v = eval(*c[0]);
        if (e.text == "not") return Value(!truthy(v));
        if (!v.is_number()) fault("bad operand type for unary " + e.text + ": '" + type_name(v) + "'");
        if (e.text == "+") return is_intlike(v) ? Value(as_int(v)) : v;
        if (is_intlike(v)) return Value(sub_checked(0, as_int(v)));
        return Value(-v.as<double>());
      }
      case ExprKind::kBinary:
        return binary(e.text, eval(*c[0]), eval(*c[1]));
      case ExprKind::kCompare:
        return Value(compare(e.text, eval(*c[0]), eval(*c[1])));
      case ExprKind::kBoolOp: {
        Value v;
        for (const auto& x : c) {
          v = eval(*x);
          const bool t = truthy(v);
          if ((e.text == "or") == t) return v;
        }
        return v;
      }
      case ExprKind::kIfExp:
        return truthy(eval(*c[1])) ? eval(*c[0]) : eval(*c[2]);
    }
    fault("unknown expression");
  }

  // Runs a comprehension body with its loop variables scoped to it.
  template <typename F>
  void comprehension(const Expr& e, std::size_t iter_index, F element) {
    Value iterable = eval(*e.children[iter_index]);
    const Expr* cond = e.children.size() > iter_index + 1 ? e.children[iter_index + 1].get() : nullptr;
    std::vector<std::pair<std::string, std::optional<Value>>> saved;
    for (const auto& name : e.targets) {
      auto it = frame_->find(name);
      saved.emplace_back(name, it == frame_->end() ? std::nullopt : std::optional<Value>(it->second));
    }
    auto restore = [&] {
      for (auto& [name, old] : saved) {
        if (old) {
          (*frame_)[name] = *old;
        } else {
          frame_->erase(name);
        }
      }
    };
    try {
      for_each(iterable, [&](const Value& item) {
        tick();
        bind_targets(e.targets, item);
        if (cond == nullptr || truthy(eval(*cond))) element();
        return Flow::kNormal;
      });
    } catch (...) {
      restore();
      throw;
    }
    restore();
  }

  Value list_comp(const Expr& e) {
    ListPtr out = new_list();
    comprehension(e, 1, [&] {
      Value v = eval(*e.children[0]);
      out->push_back(std::move(v));
      check_len(out->size());
    });
    return out;
  }

  Value map_comp(const Expr& e) {
    MapPtr out = new_map();
    comprehension(e, 2, [&] {
      Value k = eval(*e.children[0]);
      Value v = eval(*e.children[1]);
      map_set(*out, k, std::move(v));
    });
    return out;
  }

  Value subscript(const Value& obj, const Value& idx) {
    if (obj.is<ListPtr>() || obj.is<TuplePtr>()) {
      const List& l = obj.is<ListPtr>() ? *obj.as<ListPtr>() : *obj.as<TuplePtr>();
      auto i = index_of(idx, l.size(), false);
      if (!i) fault(type_name(obj) + " index out of range");
      return l[static_cast<std::size_t>(*i)];
    }
    if (obj.is<std::string>()) {
      const auto& s = obj.as<std::string>();
      auto i = index_of(idx, s.size(), false);
      if (!i) fault("string index out of range");
      return Value(std::string(1, s[static_cast<std::size_t>(*i)]));
    }
    if (obj.is<MapPtr>()) {
      const Value* v = nullptr;
      try {
        v = obj.as<MapPtr>()->find(idx);
      } catch (const std::invalid_argument& err) {
        fault(err.what());
      }
      if (v == nullptr) fault("missing key " + repr(idx));
      return *v;
    }
    fault("'" + type_name(obj) + "' object is not subscriptable");
  }

  Value slice(const Value& obj, const std::optional<Value>& lo, const std::optional<Value>& hi) {
    auto bounds = [&](std::size_t n) {
      Int a = lo && !lo->is_none() ? *index_of(*lo, n, true) : 0;
      Int b = hi && !hi->is_none() ? *index_of(*hi, n, true) : static_cast<Int>(n);
      if (b < a) b = a;
      return std::pair<std::size_t, std::size_t>(static_cast<std::size_t>(a),
                                                 static_cast<std::size_t>(b));
    };
    if (obj.is<ListPtr>() || obj.is<TuplePtr>()) {
      const List& l = obj.is<ListPtr>() ? *obj.as<ListPtr>() : *obj.as<TuplePtr>();
      auto [a, b] = bounds(l.size());
      List part(l.begin() + static_cast<std::ptrdiff_t>(a), l.begin() + static_cast<std::ptrdiff_t>(b));
      if (obj.is<ListPtr>()) return new_list(std::move(part));
      return Value(TuplePtr(std::make_shared<const List>(std::move(part))));
    }
    if (obj.is<std::string>()) {
      const auto& s = obj.as<std::string>();
      auto [a, b] = bounds(s.size());
      return Value(s.substr(a, b - a));
    }
    fault("'" + type_name(obj) + "' object is not sliceable");
  }

  bool contains(const Value& container, const Value& item) {
    if (container.is<std::string>()) {
      if (!item.is<std::string>()) {
        fault("'in <string>' requires string as left operand, not " + type_name(item));
      }
      return container.as<std::string>().find(item.as<std::string>()) != std::string::npos;
    }
    if (container.is<ListPtr>() || container.is<TuplePtr>()) {
      const List& l = container.is<ListPtr>() ? *container.as<ListPtr>() : *container.as<TuplePtr>();
      return std::any_of(l.begin(), l.end(), [&](const Value& x) { return equals(x, item); });
    }
    if (container.is<MapPtr>()) {
      try {
        return container.as<MapPtr>()->find(item) != nullptr;
      } catch (const std::invalid_argument& e) {
        fault(e.what());
      }
    }
    fault("argument of type '" + type_name(container) + "' is not iterable");
  }

  bool compare(const std::string& op, const Value& a, const Value& b) {
    if (op == "==") return equals(a, b);
    if (op == "!=") return !equals(a, b);
    if (op == "<") return less(a, b);
    if (op == ">") return less(b, a);
    if (op == "<=") return !less(b, a);
    if (op == ">=") return !less(a, b);
    if (op == "in") return contains(b, a);
    if (op == "not in") return !contains(b, a);
    const bool same = identical(a, b);
    return op == "is" ? same : !same;
  }

  static bool identical(const Value& a, const Value& b) {
    if (a.v.index() != b.v.index()) return false;
    if (a.is<ListPtr>()) return a.as<ListPtr>() == b.as<ListPtr>();
    if (a.is<MapPtr>()) return a.as<MapPtr>() == b.as<MapPtr>();
    if (a.is<TuplePtr>()) return a.as<TuplePtr>() == b.as<TuplePtr>();
    return equals(a, b);
  }

  Value repeat(const List& items, const Value& count, bool as_tuple) {
    Int n = items.empty() ? 0 : std::max<Int>(0, as_int(count));
    if (n > lim_.max_collection_len) check_len(static_cast<std::size_t>(n));
    check_len(items.size() * static_cast<std::size_t>(n));
    List out;
    for (Int i = 0; i < n; ++i) out.insert(out.end(), items.begin(), items.end());
    if (as_tuple) return Value(TuplePtr(std::make_shared<const List>(std::move(out))));
    return new_list(std::move(out));
  }

  Value binary(const std::string& op, const Value& a, const Value& b) {
    const bool nums = a.is_number() && b.is_number();
    const bool ints = is_intlike(a) && is_intlike(b);
    if (op == "+") {
      if (ints) return Value(add_checked(as_int(a), as_int(b)));
      if (nums) return Value(as_double(a) + as_double(b));
      if (a.is<std::string>() && b.is<std::string>()) {
        return make_string(a.as<std::string>() + b.as<std::string>());
      }
      if (a.is<ListPtr>() && b.is<ListPtr>()) {
        List out = *a.as<ListPtr>();
        const List& extra = *b.as<ListPtr>();
        check_len(out.size() + extra.size());
        out.insert(out.end(), extra.begin(), extra.end());
        return new_list(std::move(out));
      }
      if (a.is<TuplePtr>() && b.is<TuplePtr>()) {
        List out = *a.as<TuplePtr>();
        const List& extra = *b.as<TuplePtr>();
        check_len(out.size() + extra.size());
        out.insert(out.end(), extra.begin(), extra.end());
        return Value(TuplePtr(std::make_shared<const List>(std::move(out))));
      }
    } else if (op == "-") {
      if (ints) return Value(sub_checked(as_int(a), as_int(b)));
      if (nums) return Value(as_double(a) - as_double(b));
    } else if (op == "*") {
      if (ints) return Value(mul_checked(as_int(a), as_int(b)));
      if (nums) return Value(as_double(a) * as_double(b));
      const Value* seq = is_intlike(b) ? &a : (is_intlike(a) ? &b : nullptr);
      const Value* count = seq == &a ? &b : &a;
      if (seq != nullptr) {
        if (seq->is<std::string>()) {
          Int n = std::max<Int>(0, as_int(*count));
          const auto& s = seq->as<std::string>();
          if (!s.empty()) check_str(static_cast<std::size_t>(std::min<Int>(n, Int{1} << 40)) * s.size());
          std::string out;
          for (Int i = 0; i < n && !s.empty(); ++i) out += s;
          return Value(std::move(out));
        }
        if (seq->is<ListPtr>()) return repeat(*seq->as<ListPtr>(), *count, false);
        if (seq->is<TuplePtr>()) return repeat(*seq->as<TuplePtr>(), *count, true);
      }
    } else if (op == "/") {
      if (nums) {
        if (as_double(b) == 0.0) fault("division by zero");
        return Value(as_double(a) / as_double(b));
      }
    } else if (op == "//") {
      if (ints) return Value(floor_div(as_int(a), as_int(b)));
      if (nums) {
        if (as_double(b) == 0.0) fault("float floor division by zero");
        return Value(std::floor(as_double(a) / as_double(b)));
      }
    } else if (op == "%") {
      if (ints) return Value(py_mod(as_int(a), as_int(b)));
      if (nums) {
        const double y = as_double(b);
        if (y == 0.0) fault("float modulo by zero");
        double r = std::fmod(as_double(a), y);
        if (r != 0.0 && ((r < 0) != (y < 0))) r += y;
        return Value(r);
      }
      if (a.is<std::string>()) fault("printf-style string formatting is not supported");
    } else if (op == "**") {
      if (ints && as_int(b) >= 0) {
        Int base = as_int(a);
        Int exp = as_int(b);
        Int result = 1;
        while (exp > 0) {
          if (exp & 1) result = mul_checked(result, base);
          exp >>= 1;
          if (exp > 0) base = mul_checked(base, base);
        }
        return Value(result);
      }
      if (nums) {
        if (as_double(a) == 0.0 && as_double(b) < 0) fault("zero cannot be raised to a negative power");
        const double r = std::pow(as_double(a), as_double(b));
        if (std::isnan(r)) fault("math domain error");
        return Value(r);
      }
    }
    fault("unsupported operand type(s) for " + op + ": '" + type_name(a) + "' and '" +
          type_name(b) + "'");
  }

  void want_args(const std::string& name, const std::vector<Value>& args, std::size_t lo,
                 std::size_t hi) {
    if (args.size() < lo || args.size() > hi) {
      fault(name + "() got " + std::to_string(args.size()) + " arguments");
    }
  }

  double number_arg(const std::string& name, const Value& v) {
    if (!v.is_number()) fault(name + "() argument must be a number, not '" + type_name(v) + "'");
    return as_double(v);
  }

  Value to_int(double d) {
    if (!std::isfinite(d)) fault("cannot convert non-finite float to integer");
    if (std::fabs(d) >= 9.2e18) fault("integer overflow");
    return Value(static_cast<Int>(d));
  }

  Value extreme(const std::string& name, const std::vector<Value>& args, bool want_max) {
    if (args.empty()) fault(name + "() expected at least 1 argument");
    List items = args.size() == 1 ? snapshot(args[0]) : List(args.begin(), args.end());
    if (items.empty()) fault(name + "() arg is an empty sequence");
    std::size_t best = 0;
    for (std::size_t i = 1; i < items.size(); ++i) {
      if (want_max ? less(items[best], items[i]) : less(items[i], items[best])) best = i;
    }
    return items[best];
  }

  void stable_sort(List& items) {
    std::stable_sort(items.begin(), items.end(),
                     [&](const Value& x, const Value& y) { return less(x, y); });
  }

  Value builtin(const std::string& full_name, const std::vector<Value>& args) {
    const std::string name = full_name.rfind("math.", 0) == 0 ? full_name.substr(5) : full_name;
    if (name == "ceil" || name == "floor") {
      want_args(name, args, 1, 1);
      if (is_intlike(args[0])) return Value(as_int(args[0]));
      const double d = number_arg(name, args[0]);
      return to_int(name == "ceil" ? std::ceil(d) : std::floor(d));
    }
    if (name == "sqrt") {
      want_args(name, args, 1, 1);
      const double d = number_arg(name, args[0]);
      if (d < 0) fault("math domain error");
      return Value(std::sqrt(d));
    }
    if (name == "abs") {
      want_args(name, args, 1, 1);
      if (is_intlike(args[0])) {
        Int i = as_int(args[0]);
        if (i == std::numeric_limits<Int>::min()) fault("integer overflow");
        return Value(i < 0 ? -i : i);
      }
      return Value(std::fabs(number_arg(name, args[0])));
    }
    if (name == "max" || name == "min") return extreme(name, args, name == "max");
    if (name == "len") {
      want_args(name, args, 1, 1);
      const Value& v = args[0];
      if (v.is<std::string>()) return Value(static_cast<Int>(v.as<std::string>().size()));
      if (v.is<ListPtr>()) return Value(static_cast<Int>(v.as<ListPtr>()->size()));
      if (v.is<TuplePtr>()) return Value(static_cast<Int>(v.as<TuplePtr>()->size()));
      if (v.is<MapPtr>()) return Value(static_cast<Int>(v.as<MapPtr>()->size()));
      fault("object of type '" + type_name(v) + "' has no len()");
    }
    if (name == "contains") {
      want_args(name, args, 2, 2);
      return Value(contains(args[0], args[1]));
    }
    if (name == "range") {
      want_args(name, args, 1, 3);
      for (const auto& a : args) {
        if (!is_intlike(a)) fault("range() arguments must be integers");
      }
      Int start = args.size() == 1 ? 0 : as_int(args[0]);
      Int stop = args.size() == 1 ? as_int(args[0]) : as_int(args[1]);
      Int step = args.size() == 3 ? as_int(args[2]) : 1;
      if (step == 0) fault("range() arg 3 must not be zero");
      List out;
      for (Int i = start; step > 0 ? i < stop : i > stop;) {
        out.emplace_back(i);
        check_len(out.size());
        if (__builtin_add_overflow(i, step, &i)) break;
      }
      return new_list(std::move(out));
    }
    if (name == "int") {
      want_args(name, args, 0, 1);
      if (args.empty()) return Value(Int{0});
      const Value& v = args[0];
      if (is_intlike(v)) return Value(as_int(v));
      if (v.is<double>()) return to_int(std::trunc(v.as<double>()));
      if (v.is<std::string>()) {
        std::string s = v.as<std::string>();
        const auto b = s.find_first_not_of(" \t\n");
        const auto e = s.find_last_not_of(" \t\n");
        if (b != std::string::npos) s = s.substr(b, e - b + 1);
        if (!s.empty() && s[0] == '+') s.erase(0, 1);
        Int out = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
          fault("invalid literal for int(): " + repr(v));
        }
        return Value(out);
      }
      fault("int() argument must be a string or a number, not '" + type_name(v) + "'");
    }
    if (name == "float") {
      want_args(name, args, 0, 1);
      if (args.empty()) return Value(0.0);
      const Value& v = args[0];
      if (v.is_number()) return Value(as_double(v));
      if (v.is<std::string>()) {
        const std::string& s = v.as<std::string>();
        char* end = nullptr;
        const double d = std::strtod(s.c_str(), &end);
        while (end != nullptr && *end != '\0' && std::isspace(static_cast<unsigned char>(*end))) ++end;
        if (s.empty() || end == nullptr || *end != '\0') fault("could not convert string to float: " + repr(v));
        return Value(d);
      }
      fault("float() argument must be a string or a number, not '" + type_name(v) + "'");
    }
    if (name == "str") {
      want_args(name, args, 0, 1);
      return args.empty() ? Value(std::string()) : make_string(str_of(args[0]));
    }
    if (name == "bool") {
      want_args(name, args, 0, 1);
      return Value(!args.empty() && truthy(args[0]));
    }
    if (name == "sum") {
      want_args(name, args, 1, 2);
      Value total = args.size() == 2 ? args[1] : Value(Int{0});
      for (const auto& x : snapshot(args[0])) {
        if (!x.is_number() || !total.is_number()) fault("sum() supports numbers only");
        total = binary("+", total, x);
      }
      return total;
    }
    if (name == "sorted") {
      want_args(name, args, 1, 1);
      List items = snapshot(args[0]);
      stable_sort(items);
      return new_list(std::move(items));
    }
    if (name == "list") {
      want_args(name, args, 0, 1);
      return new_list(args.empty() ? List{} : snapshot(args[0]));
    }
    if (name == "dict") {
      want_args(name, args, 0, 1);
      MapPtr m = new_map();
      if (args.empty()) return m;
      if (args[0].is<MapPtr>()) {
        for (const auto& [k, v] : args[0].as<MapPtr>()->entries()) map_set(*m, k, v);
        return m;
      }
      for (const auto& item : snapshot(args[0])) {
        List pair = snapshot(item);
        if (pair.size() != 2) fault("dictionary update sequence element has length " + std::to_string(pair.size()) + "; 2 is required");
        map_set(*m, pair[0], pair[1]);
      }
      return m;
    }
    fault("name '" + full_name + "' is not defined");
  }

  Value method(const std::string& name, const Value& obj, const std::vector<Value>& args) {
    auto no_method = [&]() -> Value {
      fault("'" + type_name(obj) + "' object has no method '" + name + "'");
    };
    if (obj.is<MapPtr>()) {
      Map& m = *obj.as<MapPtr>();
      if (name == "get") {
        want_args(name, args, 1, 2);
        const Value* v = nullptr;
        try {
          v = m.find(args[0]);
        } catch (const std::invalid_argument& e) {
          fault(e.what());
        }
        if (v != nullptr) return *v;
        return args.size() == 2 ? args[1] : Value();
      }
      if (name == "keys" || name == "values" || name == "items") {
        want_args(name, args, 0, 0);
        List out;
        for (const auto& [k, v] : m.entries()) {
          if (name == "keys") {
            out.push_back(k);
          } else if (name == "values") {
            out.push_back(v);
          } else {
            out.emplace_back(TuplePtr(std::make_shared<const List>(List{k, v})));
          }
        }
        return new_list(std::move(out));
      }
      if (name == "sorted_by") {
        want_args(name, args, 0, 1);
        Int which = args.empty() ? 0 : (is_intlike(args[0]) ? as_int(args[0]) : -1);
        if (which != 0 && which != 1) fault("sorted_by() on a dict takes 0 (key) or 1 (value)");
        std::vector<std::pair<Value, Value>> entries = m.entries();
        std::stable_sort(entries.begin(), entries.end(), [&](const auto& x, const auto& y) {
          return which == 0 ? less(x.first, y.first) : less(x.second, y.second);
        });
        MapPtr out = new_map();
        for (auto& [k, v] : entries) map_set(*out, k, v);
        return out;
      }
      return no_method();
    }
    if (obj.is<ListPtr>()) {
      List& l = *obj.as<ListPtr>();
      if (name == "append") {
        want_args(name, args, 1, 1);
        l.push_back(args[0]);
        check_len(l.size());
        return Value();
      }
      if (name == "pop_front") {
        want_args(name, args, 0, 0);
        if (l.empty()) fault("pop from empty list");
        Value front = l.front();
        l.erase(l.begin());
        return front;
      }
      if (name == "sorted_by") {
        want_args(name, args, 0, 1);
        List items = l;
        if (args.empty()) {
          stable_sort(items);
        } else {
          const Value key = args[0];
          std::stable_sort(items.begin(), items.end(), [&](const Value& x, const Value& y) {
            return less(subscript(x, key), subscript(y, key));
          });
        }
        return new_list(std::move(items));
      }
      return no_method();
    }
    return no_method();
  }

  const Module& module_;
  SandboxLimits lim_;
  Frame globals_;
  Frame* frame_ = nullptr;
  std::unordered_map<std::string, const Stmt*> functions_;
  Value ret_;
  int steps_ = 0;
  int depth_ = 0;
  int line_ = 0;
  std::vector<ListPtr> lists_;
  std::vector<MapPtr> maps_;
};

Value counts_view(Interpreter& in, const std::map<std::string, int, std::less<>>& counts) {
  MapPtr m = in.new_map();
  for (const auto& [k, v] : counts) m->set(Value(k), Value(v));
  return m;
}

Value observation_view(Interpreter& in, const env::Observation& obs) {
  MapPtr resource = in.new_map();
  resource->set(Value("supply_cap"), Value(obs.resource.supply_cap));
  resource->set(Value("supply_left"), Value(obs.resource.supply_left));
  resource->set(Value("minerals"), Value(obs.resource.minerals));
  resource->set(Value("gas"), Value(obs.resource.gas));
  MapPtr m = in.new_map();
  m->set(Value("Resource"), resource);
  m->set(Value("Building"), counts_view(in, obs.building));
  m->set(Value("Unit"), counts_view(in, obs.unit));
  m->set(Value("InProduction"), counts_view(in, obs.in_production));
  m->set(Value("tick"), Value(obs.tick));
  return m;
}

}  // namespace

void SandboxLimits::validate() const {
  if (max_interp_steps <= 0 || max_collection_len <= 0 || max_call_depth <= 0) {
    throw PreconditionError("sandbox limits must all be positive");
  }
}

Plan evaluate(const PlanningProgram& program, const env::Observation& obs,
              const std::vector<std::string>& action_space, const env::TaskSpec& task,
              const SandboxLimits& limits, EvalStats* stats) {
  limits.validate();
  if (!program.ok()) throw ProgramFault(program.id, program.fault);
  Interpreter in(program.ast, limits);
  Plan plan;
  plan.source_program = program.id;
  try {
    std::vector<Value> args;
    args.push_back(observation_view(in, obs));
    List actions;
    for (const auto& a : action_space) actions.emplace_back(a);
    args.push_back(in.track(std::move(actions)));
    MapPtr targets = in.new_map();
    for (const auto& [name, count] : task.targets) targets->set(Value(name), Value(count));
    args.push_back(targets);

    Value result = in.run(std::string(kEntryFunction), std::move(args));
    if (stats != nullptr) stats->steps = in.steps();
    if (!result.is<ListPtr>() && !result.is<TuplePtr>()) {
      fault("planner returned '" + type_name(result) + "', expected a list of actions");
    }
    const List& items = result.is<ListPtr>() ? *result.as<ListPtr>() : *result.as<TuplePtr>();
    const std::size_t n = std::min<std::size_t>(items.size(), env::kMaxPlanLength);
    for (std::size_t i = 0; i < n; ++i) {
      if (!items[i].is<std::string>()) {
        fault("plan element " + std::to_string(i) + " is a '" + type_name(items[i]) +
              "', expected a string");
      }
      if (items[i].as<std::string>().empty()) {
        fault("plan element " + std::to_string(i) + " is an empty string");
      }
      plan.actions.push_back(items[i].as<std::string>());
    }
  } catch (const Fault& f) {
    if (stats != nullptr) stats->steps = in.steps();
    throw ProgramFault(program.id, "line " + std::to_string(in.line()) + ": " + f.message);
  } catch (const SandboxBudgetExceeded&) {
    if (stats != nullptr) stats->steps = in.steps();
    throw;
  }
  return plan;
}

}  // namespace copic::planlang
