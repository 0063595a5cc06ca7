#include "copic/planlang/parser.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdlib>
#include <set>
#include <string>

#include "copic/errors.hpp"
#include "lexer.hpp"

namespace copic::planlang {

namespace {

using detail::Token;
using detail::TokKind;

constexpr int kMaxNesting = 100;

constexpr std::array kBuiltins = {"abs", "bool",  "ceil", "contains", "dict",   "float",
                                  "floor", "int", "len",  "list",     "max",    "min",
                                  "range", "sorted", "sqrt", "str",   "sum"};
constexpr std::array kMathNames = {"ceil", "floor", "sqrt"};
constexpr std::array kMethods = {"append", "get", "items", "keys", "pop_front", "sorted_by",
                                 "values"};

// Keywords that start statements or expressions we refuse outright.
constexpr std::array kRejectedKeywords = {"lambda", "class",   "try",    "except", "finally",
                                          "raise",  "with",    "async",  "await",  "yield",
                                          "global", "nonlocal", "del",   "assert"};
constexpr std::array kReserved = {"def",   "if",   "elif", "else",   "for",   "while",
                                  "return", "break", "continue", "pass", "import", "from",
                                  "in",    "not",  "and",  "or",     "is",    "as",
                                  "True",  "False", "None"};

template <std::size_t N>
bool contains_name(const std::array<const char*, N>& arr, std::string_view name) {
  return std::any_of(arr.begin(), arr.end(), [&](const char* s) { return name == s; });
}

std::shared_ptr<Expr> make(ExprKind kind, const Token& at) {
  auto e = std::make_shared<Expr>();
  e->kind = kind;
  e->pos = {at.line, at.column};
  return e;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  Module parse_module() {
    Module m;
    while (!at(TokKind::kEnd)) {
      if (accept(TokKind::kNewline)) continue;
      parse_statement(m.body, /*in_function=*/false);
    }
    return m;
  }

  ExprPtr parse_lone_expression() {
    ExprPtr e = parse_test();
    if (!at(TokKind::kEnd)) fail(cur(), "unexpected '" + describe(cur()) + "' in expression");
    return e;
  }

 private:
  // ---- token helpers ----
  const Token& cur() const { return toks_[i_]; }
  const Token& peek_tok(std::size_t ahead) const {
    return toks_[std::min(i_ + ahead, toks_.size() - 1)];
  }
  bool at(TokKind k) const { return cur().kind == k; }
  bool at_op(std::string_view op) const { return cur().kind == TokKind::kOp && cur().text == op; }
  bool at_kw(std::string_view kw) const { return cur().kind == TokKind::kName && cur().text == kw; }
  const Token& next() {
    const Token& t = toks_[i_];
    if (i_ + 1 < toks_.size()) ++i_;
    return t;
  }
  bool accept(TokKind k) {
    if (!at(k)) return false;
    next();
    return true;
  }
  bool accept_op(std::string_view op) {
    if (!at_op(op)) return false;
    next();
    return true;
  }
  bool accept_kw(std::string_view kw) {
    if (!at_kw(kw)) return false;
    next();
    return true;
  }
  static std::string describe(const Token& t) {
    switch (t.kind) {
      case TokKind::kNewline:
        return "end of line";
      case TokKind::kIndent:
        return "indent";
      case TokKind::kDedent:
        return "dedent";
      case TokKind::kEnd:
        return "end of input";
      case TokKind::kString:
        return "string";
      default:
        return t.text;
    }
  }
  [[noreturn]] static void fail(const Token& t, const std::string& msg) {
    throw ParseError(t.line, t.column, msg);
  }
  [[noreturn]] static void unsupported(const Token& t, const std::string& what) {
    throw UnsupportedConstruct(t.line, t.column, what);
  }
  void expect_op(std::string_view op) {
    if (!accept_op(op)) {
      fail(cur(), "expected '" + std::string(op) + "' but found '" + describe(cur()) + "'");
    }
  }
  std::string expect_name(const char* what) {
    if (!at(TokKind::kName)) fail(cur(), std::string("expected ") + what);
    check_identifier(cur());
    return next().text;
  }
  void check_identifier(const Token& t) {
    if (contains_name(kRejectedKeywords, t.text)) unsupported(t, "'" + t.text + "'");
    if (contains_name(kReserved, t.text)) fail(t, "unexpected keyword '" + t.text + "'");
  }

  struct DepthGuard {
    explicit DepthGuard(Parser& p) : p_(p) {
      if (++p_.depth_ > kMaxNesting) fail(p_.cur(), "nesting too deep");
    }
    ~DepthGuard() { --p_.depth_; }
    Parser& p_;
  };

  // ---- statements ----
  void parse_statement(Block& out, bool in_function) {
    DepthGuard guard(*this);
    const Token& t = cur();
    if (t.kind == TokKind::kIndent) fail(t, "unexpected indent");
    if (t.kind == TokKind::kName) {
      if (t.text == "def") return out.push_back(parse_def(in_function));
      if (t.text == "if") return out.push_back(parse_if());
      if (t.text == "for") return out.push_back(parse_for(in_function));
      if (t.text == "while") return out.push_back(parse_while(in_function));
      if (t.text == "elif" || t.text == "else") fail(t, "'" + t.text + "' without matching 'if'");
      if (contains_name(kRejectedKeywords, t.text) && t.text != "lambda" && t.text != "await") {
        unsupported(t, "'" + t.text + "' statement");
      }
    }
    if (t.kind == TokKind::kOp && t.text == "@") unsupported(t, "decorator");
    parse_simple_line(out, in_function);
  }

  // simple_stmt (';' simple_stmt)* NEWLINE
  void parse_simple_line(Block& out, bool in_function) {
    out.push_back(parse_simple(in_function));
    while (accept_op(";")) {
      if (at(TokKind::kNewline) || at(TokKind::kEnd)) break;
      out.push_back(parse_simple(in_function));
    }
    if (!accept(TokKind::kNewline) && !at(TokKind::kEnd)) {
      fail(cur(), "unexpected '" + describe(cur()) + "'");
    }
  }

  StmtPtr parse_simple(bool in_function) {
    const Token& t = cur();
    auto s = std::make_shared<Stmt>();
    s->pos = {t.line, t.column};
    if (accept_kw("pass")) {
      s->kind = StmtKind::kPass;
    } else if (accept_kw("break")) {
      if (loop_depth_ == 0) fail(t, "'break' outside loop");
      s->kind = StmtKind::kBreak;
    } else if (accept_kw("continue")) {
      if (loop_depth_ == 0) fail(t, "'continue' outside loop");
      s->kind = StmtKind::kContinue;
    } else if (accept_kw("return")) {
      if (!in_function) fail(t, "'return' outside function");
      s->kind = StmtKind::kReturn;
      if (!at(TokKind::kNewline) && !at(TokKind::kEnd) && !at_op(";")) {
        s->exprs.push_back(parse_testlist());
      }
    } else if (at_kw("import")) {
      next();
      s->kind = StmtKind::kImport;
      const Token& m = cur();
      s->text = expect_name("module name");
      if (s->text != "math") unsupported(m, "import of module '" + s->text + "'");
      if (at_op(".")) unsupported(cur(), "dotted import");
      if (at_kw("as")) unsupported(cur(), "import alias");
      if (at_op(",")) unsupported(cur(), "multiple imports in one statement");
    } else if (at_kw("from")) {
      next();
      s->kind = StmtKind::kImport;
      const Token& m = cur();
      s->text = expect_name("module name");
      if (s->text != "math") unsupported(m, "import from module '" + s->text + "'");
      if (!accept_kw("import")) fail(cur(), "expected 'import'");
      if (at_op("*")) unsupported(cur(), "wildcard import");
      const bool paren = accept_op("(");
      do {
        const Token& n = cur();
        std::string name = expect_name("imported name");
        if (!contains_name(kMathNames, name)) unsupported(n, "import of math." + name);
        if (at_kw("as")) unsupported(cur(), "import alias");
        s->names.push_back(std::move(name));
      } while (accept_op(",") && !(paren && at_op(")")));
      if (paren) expect_op(")");
    } else {
      ExprPtr first = parse_testlist();
      if (at_op("=")) {
        next();
        check_target(*first, t);
        s->kind = StmtKind::kAssign;
        ExprPtr value = parse_testlist();
        if (at_op("=")) unsupported(cur(), "chained assignment");
        s->exprs = {first, value};
      } else if (cur().kind == TokKind::kOp && is_aug_op(cur().text)) {
        const Token& op = next();
        if (first->kind != ExprKind::kName && first->kind != ExprKind::kSubscript) {
          fail(op, "illegal target for augmented assignment");
        }
        s->kind = StmtKind::kAugAssign;
        s->text = op.text.substr(0, op.text.size() - 1);
        s->exprs = {first, parse_test()};
      } else if (at_op(":")) {
        unsupported(cur(), "variable annotation");
      } else if (at_op(":=")) {
        unsupported(cur(), "assignment expression");
      } else {
        s->kind = StmtKind::kExpr;
        s->exprs = {first};
      }
    }
    return s;
  }

  static bool is_aug_op(const std::string& op) {
    static const std::set<std::string, std::less<>> kOps = {"+=", "-=", "*=", "/=", "//=", "%=",
                                                            "**="};
    if (op == "&=" || op == "|=" || op == "^=" || op == ">>=" || op == "<<=") {
      return false;
    }
    return kOps.count(op) != 0;
  }

  void check_target(const Expr& e, const Token& at) {
    switch (e.kind) {
      case ExprKind::kName:
      case ExprKind::kSubscript:
        return;
      case ExprKind::kTuple:
        for (const auto& c : e.children) {
          if (c->kind != ExprKind::kName) unsupported(at, "nested or non-name unpacking target");
        }
        if (e.children.empty()) fail(at, "cannot assign to ()");
        return;
      case ExprKind::kSlice:
        unsupported(at, "slice assignment");
      default:
        fail(at, "cannot assign to expression");
    }
  }

  StmtPtr parse_def(bool in_function) {
    const Token& kw = next();
    if (in_function || loop_depth_ > 0 || block_depth_ > 0) unsupported(kw, "nested function definition");
    auto s = std::make_shared<Stmt>();
    s->kind = StmtKind::kDef;
    s->pos = {kw.line, kw.column};
    s->text = expect_name("function name");
    expect_op("(");
    while (!at_op(")")) {
      if (at_op("*") || at_op("**")) unsupported(cur(), "variadic parameters");
      const Token& p = cur();
      std::string name = expect_name("parameter name");
      if (at_op("=")) unsupported(cur(), "default parameter value");
      if (at_op(":")) unsupported(cur(), "parameter annotation");
      if (std::find(s->names.begin(), s->names.end(), name) != s->names.end()) {
        fail(p, "duplicate parameter '" + name + "'");
      }
      s->names.push_back(std::move(name));
      if (!accept_op(",")) break;
    }
    expect_op(")");
    if (at_op("->")) unsupported(cur(), "return annotation");
    expect_op(":");
    s->blocks.push_back(parse_suite(/*in_function=*/true));
    return s;
  }

  StmtPtr parse_if() {
    const Token& kw = next();
    auto s = std::make_shared<Stmt>();
    s->kind = StmtKind::kIf;
    s->pos = {kw.line, kw.column};
    const bool in_function = function_context();
    s->exprs.push_back(parse_test());
    expect_op(":");
    s->blocks.push_back(parse_nested_suite(in_function));
    while (at_kw("elif")) {
      next();
      s->exprs.push_back(parse_test());
      expect_op(":");
      s->blocks.push_back(parse_nested_suite(in_function));
    }
    if (accept_kw("else")) {
      expect_op(":");
      s->blocks.push_back(parse_nested_suite(in_function));
    }
    return s;
  }

  StmtPtr parse_for(bool in_function) {
    const Token& kw = next();
    auto s = std::make_shared<Stmt>();
    s->kind = StmtKind::kFor;
    s->pos = {kw.line, kw.column};
    s->names = parse_loop_targets();
    if (!accept_kw("in")) fail(cur(), "expected 'in'");
    s->exprs.push_back(parse_testlist());
    expect_op(":");
    ++loop_depth_;
    s->blocks.push_back(parse_nested_suite(in_function));
    --loop_depth_;
    if (at_kw("else")) unsupported(cur(), "'else' clause on loop");
    return s;
  }

  StmtPtr parse_while(bool in_function) {
    const Token& kw = next();
    auto s = std::make_shared<Stmt>();
    s->kind = StmtKind::kWhile;
    s->pos = {kw.line, kw.column};
    s->exprs.push_back(parse_test());
    expect_op(":");
    ++loop_depth_;
    s->blocks.push_back(parse_nested_suite(in_function));
    --loop_depth_;
    if (at_kw("else")) unsupported(cur(), "'else' clause on loop");
    return s;
  }

  bool function_context() const { return in_function_; }

  Block parse_nested_suite(bool in_function) {
    ++block_depth_;
    Block b = parse_suite(in_function);
    --block_depth_;
    return b;
  }

  Block parse_suite(bool in_function) {
    const bool saved = in_function_;
    in_function_ = in_function;
    Block body;
    if (accept(TokKind::kNewline)) {
      if (!accept(TokKind::kIndent)) fail(cur(), "expected an indented block");
      while (!accept(TokKind::kDedent)) {
        if (at(TokKind::kEnd)) break;
        if (accept(TokKind::kNewline)) continue;
        parse_statement(body, in_function);
      }
    } else {
      if (at_kw("def") || at_kw("if") || at_kw("for") || at_kw("while")) {
        fail(cur(), "compound statement must start on its own line");
      }
      parse_simple_line(body, in_function);
    }
    in_function_ = saved;
    return body;
  }

  // NAME (',' NAME)*, optionally parenthesized.
  std::vector<std::string> parse_loop_targets() {
    std::vector<std::string> names;
    const bool paren = accept_op("(");
    const Token& start = cur();
    do {
      if (at_op("(") || at_op("[")) unsupported(cur(), "nested unpacking target");
      names.push_back(expect_name("loop variable"));
    } while (accept_op(",") && !at_kw("in") && !(paren && at_op(")")));
    if (paren) expect_op(")");
    if (names.size() == 1 && toks_[i_ - 1].kind == TokKind::kOp && toks_[i_ - 1].text == ",") {
      unsupported(start, "single-element unpacking target");
    }
    std::set<std::string> seen;
    for (const auto& n : names) {
      if (!seen.insert(n).second && n != "_") fail(start, "duplicate loop variable '" + n + "'");
    }
    return names;
  }

  // ---- expressions ----
  // testlist: test (',' test)* [','] -> tuple when a comma appears
  ExprPtr parse_testlist() {
    const Token& start = cur();
    ExprPtr first = parse_test();
    if (!at_op(",")) return first;
    auto tup = make(ExprKind::kTuple, start);
    tup->children.push_back(first);
    while (accept_op(",")) {
      if (ends_testlist()) break;
      tup->children.push_back(parse_test());
    }
    return tup;
  }

  bool ends_testlist() const {
    return at(TokKind::kNewline) || at(TokKind::kEnd) || at_op("=") || at_op(")") || at_op(";") ||
           at_op(":") || (cur().kind == TokKind::kOp && is_aug_op(cur().text));
  }

  ExprPtr parse_test() {
    DepthGuard guard(*this);
    if (at_kw("lambda")) unsupported(cur(), "lambda");
    if (at_kw("yield")) unsupported(cur(), "yield");
    if (at_kw("await")) unsupported(cur(), "await");
    const Token& start = cur();
    ExprPtr value = parse_or();
    if (!at_kw("if")) return value;
    next();
    ExprPtr cond = parse_or();
    if (!accept_kw("else")) fail(cur(), "expected 'else' in conditional expression");
    ExprPtr alt = parse_test();
    auto e = make(ExprKind::kIfExp, start);
    e->children = {value, cond, alt};
    return e;
  }

  ExprPtr parse_or() { return parse_boolop("or", [this] { return parse_and(); }); }
  ExprPtr parse_and() { return parse_boolop("and", [this] { return parse_not(); }); }

  template <typename F>
  ExprPtr parse_boolop(const char* op, F operand) {
    const Token& start = cur();
    ExprPtr first = operand();
    if (!at_kw(op)) return first;
    auto e = make(ExprKind::kBoolOp, start);
    e->text = op;
    e->children.push_back(first);
    while (accept_kw(op)) e->children.push_back(operand());
    return e;
  }

  ExprPtr parse_not() {
    if (!at_kw("not")) return parse_comparison();
    DepthGuard guard(*this);
    const Token& t = next();
    auto e = make(ExprKind::kUnary, t);
    e->text = "not";
    e->children.push_back(parse_not());
    return e;
  }

  // Returns the comparison operator at the cursor (consuming it), or "".
  std::string take_compare_op() {
    const Token& t = cur();
    if (t.kind == TokKind::kOp) {
      static constexpr std::array kOps = {"==", "!=", "<", "<=", ">", ">="};
      if (contains_name(kOps, t.text)) return next().text;
      if (t.text == "<>") unsupported(t, "'<>' operator");
      return "";
    }
    if (t.kind != TokKind::kName) return "";
    if (t.text == "in") {
      next();
      return "in";
    }
    if (t.text == "not" && peek_tok(1).kind == TokKind::kName && peek_tok(1).text == "in") {
      next();
      next();
      return "not in";
    }
    if (t.text == "is") {
      next();
      if (accept_kw("not")) return "is not";
      return "is";
    }
    return "";
  }

  ExprPtr parse_comparison() {
    const Token& start = cur();
    ExprPtr left = parse_arith();
    std::string op = take_compare_op();
    if (op.empty()) return left;
    ExprPtr right = parse_arith();
    const Token& after = cur();
    if (!take_compare_op().empty()) unsupported(after, "chained comparison");
    auto e = make(ExprKind::kCompare, start);
    e->text = std::move(op);
    e->children = {left, right};
    return e;
  }

  void reject_bitwise() {
    const Token& t = cur();
    if (t.kind != TokKind::kOp) return;
    if (t.text == "|" || t.text == "&" || t.text == "^" || t.text == "<<" || t.text == ">>") {
      unsupported(t, "bitwise operator '" + t.text + "'");
    }
    if (t.text == "@") unsupported(t, "matrix multiplication operator");
  }

  ExprPtr parse_arith() {
    const Token& start = cur();
    ExprPtr left = parse_term();
    reject_bitwise();
    while (at_op("+") || at_op("-")) {
      std::string op = next().text;
      auto e = make(ExprKind::kBinary, start);
      e->text = std::move(op);
      e->children = {left, parse_term()};
      left = e;
      reject_bitwise();
    }
    return left;
  }

  ExprPtr parse_term() {
    const Token& start = cur();
    ExprPtr left = parse_factor();
    reject_bitwise();
    while (at_op("*") || at_op("/") || at_op("//") || at_op("%")) {
      std::string op = next().text;
      auto e = make(ExprKind::kBinary, start);
      e->text = std::move(op);
      e->children = {left, parse_factor()};
      left = e;
      reject_bitwise();
    }
    return left;
  }

  ExprPtr parse_factor() {
    if (at_op("-") || at_op("+")) {
      DepthGuard guard(*this);
      const Token& t = next();
      auto e = make(ExprKind::kUnary, t);
      e->text = t.text;
      e->children.push_back(parse_factor());
      return e;
    }
    if (at_op("~")) unsupported(cur(), "bitwise operator '~'");
    return parse_power();
  }

  ExprPtr parse_power() {
    const Token& start = cur();
    ExprPtr base = parse_postfix();
    if (!at_op("**")) return base;
    next();
    DepthGuard guard(*this);
    auto e = make(ExprKind::kBinary, start);
    e->text = "**";
    e->children = {base, parse_factor()};
    return e;
  }

  ExprPtr parse_postfix() {
    const Token& start = cur();
    ExprPtr e = parse_atom();
    while (true) {
      if (at_op("(")) {
        const Token& paren = cur();
        if (e->kind != ExprKind::kName) unsupported(paren, "call of a computed callee");
        auto call = make(ExprKind::kCall, start);
        call->text = e->text;
        call->children = parse_call_args();
        e = call;
      } else if (at_op("[")) {
        e = parse_subscript(e, start);
      } else if (at_op(".")) {
        next();
        const Token& attr = cur();
        if (!at(TokKind::kName)) fail(attr, "expected attribute name");
        std::string name = next().text;
        if (!at_op("(")) unsupported(attr, "attribute access '." + name + "'");
        if (e->kind == ExprKind::kName && e->text == "math") {
          if (!contains_name(kMathNames, name)) unsupported(attr, "call to 'math." + name + "'");
          auto call = make(ExprKind::kCall, start);
          call->text = "math." + name;
          call->children = parse_call_args();
          e = call;
          continue;
        }
        if (!contains_name(kMethods, name)) {
          if (name == "pop") {
            unsupported(attr, "method '.pop' (use '.pop_front()' for pop(0))");
          }
          unsupported(attr, "method '." + name + "'");
        }
        auto call = make(ExprKind::kMethodCall, start);
        call->text = std::move(name);
        call->children.push_back(e);
        for (auto& a : parse_call_args()) call->children.push_back(std::move(a));
        e = call;
      } else {
        return e;
      }
    }
  }

  std::vector<ExprPtr> parse_call_args() {
    DepthGuard guard(*this);
    expect_op("(");
    std::vector<ExprPtr> args;
    while (!at_op(")")) {
      if (at_op("*") || at_op("**")) unsupported(cur(), "argument unpacking");
      if (at(TokKind::kName) && peek_tok(1).kind == TokKind::kOp && peek_tok(1).text == "=") {
        unsupported(cur(), "keyword argument '" + cur().text + "'");
      }
      ExprPtr a = parse_test();
      if (at_kw("for")) unsupported(cur(), "generator expression");
      args.push_back(std::move(a));
      if (!accept_op(",")) break;
    }
    expect_op(")");
    return args;
  }

  ExprPtr parse_subscript(ExprPtr obj, const Token& start) {
    DepthGuard guard(*this);
    expect_op("[");
    ExprPtr lower;
    if (!at_op(":")) {
      lower = parse_test();
      if (at_op(",")) unsupported(cur(), "multi-dimensional subscript");
      if (accept_op("]")) {
        auto e = make(ExprKind::kSubscript, start);
        e->children = {std::move(obj), std::move(lower)};
        return e;
      }
    }
    expect_op(":");
    ExprPtr upper;
    if (!at_op("]") && !at_op(":")) upper = parse_test();
    if (at_op(":")) unsupported(cur(), "slice step");
    expect_op("]");
    auto e = make(ExprKind::kSlice, start);
    e->children = {std::move(obj), std::move(lower), std::move(upper)};
    return e;
  }

  ExprPtr parse_atom() {
    const Token& t = cur();
    switch (t.kind) {
      case TokKind::kInt: {
        next();
        auto e = make(ExprKind::kInt, t);
        auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), e->int_value);
        if (ec != std::errc() || ptr != t.text.data() + t.text.size()) {
          fail(t, "integer literal out of range");
        }
        if (t.text.size() > 1 && t.text[0] == '0' && e->int_value != 0) {
          fail(t, "leading zeros in decimal integer literal");
        }
        return e;
      }
      case TokKind::kFloat: {
        next();
        auto e = make(ExprKind::kFloat, t);
        e->float_value = std::strtod(t.text.c_str(), nullptr);
        return e;
      }
      case TokKind::kString:
        return parse_strings();
      case TokKind::kName:
        return parse_name_atom();
      case TokKind::kOp:
        if (t.text == "(") return parse_paren();
        if (t.text == "[") return parse_list();
        if (t.text == "{") return parse_brace();
        if (t.text == "...") unsupported(t, "ellipsis");
        if (t.text == "*") unsupported(t, "starred expression");
        fail(t, "unexpected '" + t.text + "'");
      case TokKind::kIndent:
        fail(t, "unexpected indent");
      default:
        fail(t, "unexpected " + describe(t));
    }
  }

  ExprPtr parse_name_atom() {
    const Token& t = next();
    if (t.text == "True" || t.text == "False") {
      auto e = make(ExprKind::kBool, t);
      e->bool_value = t.text == "True";
      return e;
    }
    if (t.text == "None") return make(ExprKind::kNone, t);
    check_identifier(t);
    auto e = make(ExprKind::kName, t);
    e->text = t.text;
    return e;
  }

  ExprPtr parse_paren() {
    DepthGuard guard(*this);
    const Token& open = next();
    if (accept_op(")")) return make(ExprKind::kTuple, open);
    ExprPtr first = parse_test();
    if (at_kw("for")) unsupported(cur(), "generator expression");
    if (accept_op(")")) return first;
    auto tup = make(ExprKind::kTuple, open);
    tup->children.push_back(first);
    while (accept_op(",")) {
      if (at_op(")")) break;
      tup->children.push_back(parse_test());
    }
    expect_op(")");
    return tup;
  }

  ExprPtr parse_list() {
    DepthGuard guard(*this);
    const Token& open = next();
    auto e = make(ExprKind::kList, open);
    if (accept_op("]")) return e;
    ExprPtr first = parse_test();
    if (at_kw("for")) {
      auto comp = make(ExprKind::kListComp, open);
      comp->children.push_back(first);
      parse_comp_clause(*comp);
      expect_op("]");
      return comp;
    }
    e->children.push_back(first);
    while (accept_op(",")) {
      if (at_op("]")) break;
      e->children.push_back(parse_test());
    }
    expect_op("]");
    return e;
  }

  ExprPtr parse_brace() {
    DepthGuard guard(*this);
    const Token& open = next();
    auto e = make(ExprKind::kMap, open);
    if (accept_op("}")) return e;
    if (at_op("**")) unsupported(cur(), "dictionary unpacking");
    ExprPtr key = parse_test();
    if (!at_op(":")) unsupported(open, "set literal");
    next();
    ExprPtr value = parse_test();
    if (at_kw("for")) {
      auto comp = make(ExprKind::kMapComp, open);
      comp->children = {key, value};
      parse_comp_clause(*comp);
      expect_op("}");
      return comp;
    }
    e->children = {key, value};
    while (accept_op(",")) {
      if (at_op("}")) break;
      if (at_op("**")) unsupported(cur(), "dictionary unpacking");
      e->children.push_back(parse_test());
      expect_op(":");
      e->children.push_back(parse_test());
    }
    expect_op("}");
    return e;
  }

  // 'for' targets 'in' or_test ['if' or_test]
  void parse_comp_clause(Expr& comp) {
    if (at_kw("async")) unsupported(cur(), "async comprehension");
    next();  // for
    comp.targets = parse_loop_targets();
    if (!accept_kw("in")) fail(cur(), "expected 'in'");
    comp.children.push_back(parse_or());
    if (accept_kw("if")) {
      comp.children.push_back(parse_or());
      if (at_kw("if")) unsupported(cur(), "multiple comprehension conditions");
    }
    if (at_kw("for")) unsupported(cur(), "multiple comprehension 'for' clauses");
  }

  // One or more adjacent string tokens.
  ExprPtr parse_strings() {
    const Token& first = next();
    if (!at(TokKind::kString)) {
      return first.fstring ? parse_fstring(first) : string_literal(first, first.text);
    }
    std::string joined = first.text;
    bool any_f = first.fstring;
    while (at(TokKind::kString)) {
      any_f = any_f || cur().fstring;
      joined += next().text;
    }
    if (any_f) unsupported(first, "implicit concatenation with an f-string");
    return string_literal(first, std::move(joined));
  }

  static ExprPtr string_literal(const Token& at, std::string value) {
    auto e = make(ExprKind::kString, at);
    e->text = std::move(value);
    return e;
  }

  ExprPtr parse_fstring(const Token& tok) {
    auto e = make(ExprKind::kFString, tok);
    const std::string& body = tok.text;
    int line = tok.body_line;
    int col = tok.body_column;
    std::string literal;
    auto flush = [&] {
      if (literal.empty()) return;
      e->children.push_back(string_literal(tok, detail::decode_escapes(literal, tok.line, tok.column)));
      literal.clear();
    };
    auto step = [&](char c) {
      if (c == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    };
    std::size_t i = 0;
    while (i < body.size()) {
      char c = body[i];
      if (c == '\\' && i + 1 < body.size()) {
        literal += c;
        literal += body[i + 1];
        step(c);
        step(body[i + 1]);
        i += 2;
        continue;
      }
      if (c == '}') {
        if (i + 1 < body.size() && body[i + 1] == '}') {
          literal += '}';
          step(c);
          step(c);
          i += 2;
          continue;
        }
        throw ParseError(line, col, "single '}' is not allowed in f-string");
      }
      if (c != '{') {
        literal += c;
        step(c);
        ++i;
        continue;
      }
      if (i + 1 < body.size() && body[i + 1] == '{') {
        literal += '{';
        step(c);
        step(c);
        i += 2;
        continue;
      }
      // Replacement field: find the matching '}' outside nested brackets and quotes.
      const int field_line = line;
      const int field_col = col;
      step(c);
      ++i;
      const std::size_t start = i;
      const int expr_line = line;
      const int expr_col = col;
      int depth = 0;
      char quote = 0;
      while (true) {
        if (i >= body.size()) throw ParseError(field_line, field_col, "unterminated f-string field");
        char d = body[i];
        if (quote != 0) {
          if (d == '\\' && i + 1 < body.size()) {
            step(d);
            ++i;
          } else if (d == quote) {
            quote = 0;
          }
        } else if (d == '\'' || d == '"') {
          quote = d;
        } else if (d == '(' || d == '[' || d == '{') {
          ++depth;
        } else if (d == ')' || d == ']' || d == '}') {
          if (depth == 0) {
            if (d != '}') throw ParseError(line, col, "unmatched bracket in f-string field");
            break;
          }
          --depth;
        } else if (depth == 0 && d == '!' && (i + 1 >= body.size() || body[i + 1] != '=')) {
          throw UnsupportedConstruct(line, col, "f-string conversion");
        } else if (depth == 0 && d == ':') {
          throw UnsupportedConstruct(line, col, "f-string format specification");
        }
        step(d);
        ++i;
      }
      std::string_view field(body.data() + start, i - start);
      step('}');
      ++i;
      if (field.find_first_not_of(" \t\n") == std::string_view::npos) {
        throw ParseError(field_line, field_col, "empty expression in f-string field");
      }
      auto tokens = detail::tokenize(field, expr_line - 1, expr_col - 1, /*expression_only=*/true);
      Parser sub(std::move(tokens));
      sub.depth_ = depth_;
      ExprPtr inner = sub.parse_lone_expression();
      flush();
      auto f = make(ExprKind::kFormatField, tok);
      f->pos = {field_line, field_col};
      f->children.push_back(std::move(inner));
      e->children.push_back(std::move(f));
    }
    flush();
    return e;
  }

  std::vector<Token> toks_;
  std::size_t i_ = 0;
  int depth_ = 0;
  int loop_depth_ = 0;
  int block_depth_ = 0;
  bool in_function_ = false;
};

// ---- program-level validation ----

void check_calls(const Expr* e, const std::set<std::string, std::less<>>& functions) {
  if (e == nullptr) return;
  if (e->kind == ExprKind::kCall && e->text.rfind("math.", 0) != 0 &&
      !is_builtin_function(e->text) && functions.count(e->text) == 0) {
    throw UnsupportedConstruct(e->pos.line, e->pos.column, "call to '" + e->text + "'");
  }
  for (const auto& c : e->children) check_calls(c.get(), functions);
}

void check_calls(const Block& block, const std::set<std::string, std::less<>>& functions) {
  for (const auto& s : block) {
    for (const auto& e : s->exprs) check_calls(e.get(), functions);
    for (const auto& b : s->blocks) check_calls(b, functions);
  }
}

}  // namespace

bool is_builtin_function(std::string_view name) { return contains_name(kBuiltins, name); }
bool is_math_function(std::string_view name) { return contains_name(kMathNames, name); }
bool is_collection_method(std::string_view name) { return contains_name(kMethods, name); }

Module parse(std::string_view source) {
  // A leading UTF-8 byte order mark is harmless; drop it.
  if (source.substr(0, 3) == "\xEF\xBB\xBF") source.remove_prefix(3);
  Parser p(detail::tokenize(source));
  return p.parse_module();
}

Module parse_program(std::string_view source) {
  Module m = parse(source);
  std::set<std::string, std::less<>> functions;
  for (const auto& s : m.body) {
    switch (s->kind) {
      case StmtKind::kDef:
        if (!functions.insert(s->text).second) {
          throw ParseError(s->pos.line, s->pos.column, "duplicate function '" + s->text + "'");
        }
        if (is_builtin_function(s->text)) {
          throw ParseError(s->pos.line, s->pos.column,
                           "function '" + s->text + "' shadows a builtin");
        }
        break;
      case StmtKind::kImport:
      case StmtKind::kAssign:
        break;
      case StmtKind::kExpr:
        if (s->exprs[0]->kind == ExprKind::kString) break;
        [[fallthrough]];
      default:
        throw UnsupportedConstruct(s->pos.line, s->pos.column, "executable top-level statement");
    }
  }
  if (functions.empty()) throw ParseError(1, 1, "expected function definition");
  const Stmt* entry = find_function(m, kEntryFunction);
  if (entry == nullptr) {
    throw ParseError(1, 1, "missing entry function '" + std::string(kEntryFunction) + "'");
  }
  if (static_cast<int>(entry->names.size()) != kEntryArity) {
    throw ParseError(entry->pos.line, entry->pos.column,
                     "entry function '" + std::string(kEntryFunction) + "' must take " +
                         std::to_string(kEntryArity) + " parameters, found " +
                         std::to_string(entry->names.size()));
  }
  check_calls(m.body, functions);
  return m;
}

}  // namespace copic::planlang
