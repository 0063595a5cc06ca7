#include "copic/planlang/printer.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace copic::planlang {

namespace {

// Binding strength; an operand printed below its slot's minimum gets parentheses.
enum Prec : int {
  kIfExp = 1,
  kOr = 2,
  kAnd = 3,
  kNot = 4,
  kCompare = 5,
  kArith = 6,
  kTerm = 7,
  kUnary = 8,
  kPower = 9,
  kPostfix = 10,
  kAtom = 11,
};

int precedence(const Expr& e) {
  switch (e.kind) {
    case ExprKind::kIfExp:
      return kIfExp;
    case ExprKind::kBoolOp:
      return e.text == "or" ? kOr : kAnd;
    case ExprKind::kUnary:
      return e.text == "not" ? kNot : kUnary;
    case ExprKind::kCompare:
      return kCompare;
    case ExprKind::kBinary:
      if (e.text == "+" || e.text == "-") return kArith;
      if (e.text == "**") return kPower;
      return kTerm;
    case ExprKind::kSubscript:
    case ExprKind::kSlice:
    case ExprKind::kCall:
    case ExprKind::kMethodCall:
      return kPostfix;
    default:
      return kAtom;
  }
}

std::string quote_string(const std::string& s, char q) {
  std::string out(1, q);
  for (unsigned char c : s) {
    switch (c) {
      case '\\':
        out += "\\\\";
        break;
      case '\n':
        out += "\\n";
        break;
      case '\t':
        out += "\\t";
        break;
      case '\r':
        out += "\\r";
        break;
      default:
        if (c == static_cast<unsigned char>(q)) {
          out += '\\';
          out += static_cast<char>(c);
        } else if (c < 0x20 || c == 0x7f) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\x%02x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  out += q;
  return out;
}

// Docstring-style: keeps real newlines so comments stay readable in prompts.
std::string triple_quote(const std::string& s) {
  std::string out = "\"\"\"";
  for (unsigned char c : s) {
    if (c == '\\') {
      out += "\\\\";
    } else if (c == '"') {
      out += "\\\"";
    } else if (c == '\r') {
      out += "\\r";
    } else if ((c < 0x20 && c != '\n' && c != '\t') || c == 0x7f) {
      char buf[8];
      std::snprintf(buf, sizeof buf, "\\x%02x", c);
      out += buf;
    } else {
      out += static_cast<char>(c);
    }
  }
  out += "\"\"\"";
  return out;
}

std::string format_float(double v) {
  if (std::isinf(v)) return v > 0 ? "1e999" : "-1e999";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, ptr);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

class Printer {
 public:
  std::string expr(const Expr& e, int min_prec, char quote = '"') {
    std::string body = raw(e, quote);
    if (precedence(e) < min_prec) return "(" + body + ")";
    return body;
  }

  // Object of a subscript or method call. Number literals get parentheses so
  // that "1.get()" is not read as a malformed float.
  std::string object(const Expr& e, char quote) {
    if (e.kind == ExprKind::kInt || e.kind == ExprKind::kFloat) return "(" + raw(e, quote) + ")";
    return expr(e, kPostfix, quote);
  }

  void block(const Block& b, int indent) {
    if (b.empty()) {
      line(indent, "pass");
      return;
    }
    for (const auto& s : b) stmt(*s, indent);
  }

  std::string out;

 private:
  void line(int indent, const std::string& text) {
    out.append(static_cast<std::size_t>(indent) * 4, ' ');
    out += text;
    out += '\n';
  }

  std::string targets(const std::vector<std::string>& names) {
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (i != 0) s += ", ";
      s += names[i];
    }
    return s;
  }

  std::string list(const std::vector<ExprPtr>& items, std::size_t from, char quote) {
    std::string s;
    for (std::size_t i = from; i < items.size(); ++i) {
      if (i != from) s += ", ";
      s += expr(*items[i], kIfExp, quote);
    }
    return s;
  }

  std::string raw(const Expr& e, char quote) {
    const auto& c = e.children;
    switch (e.kind) {
      case ExprKind::kName:
        return e.text;
      case ExprKind::kInt:
        return std::to_string(e.int_value);
      case ExprKind::kFloat:
        return format_float(e.float_value);
      case ExprKind::kBool:
        return e.bool_value ? "True" : "False";
      case ExprKind::kNone:
        return "None";
      case ExprKind::kString:
        return quote_string(e.text, quote);
      case ExprKind::kFString:
        return fstring(e, quote);
      case ExprKind::kFormatField:
        return expr(*c[0], kIfExp, quote);
      case ExprKind::kList:
        return "[" + list(c, 0, quote) + "]";
      case ExprKind::kTuple:
        if (c.size() == 1) return "(" + expr(*c[0], kIfExp, quote) + ",)";
        return "(" + list(c, 0, quote) + ")";
      case ExprKind::kMap: {
        std::string s = "{";
        for (std::size_t i = 0; i + 1 < c.size(); i += 2) {
          if (i != 0) s += ", ";
          s += expr(*c[i], kIfExp, quote) + ": " + expr(*c[i + 1], kIfExp, quote);
        }
        return s + "}";
      }
      case ExprKind::kListComp:
        return "[" + expr(*c[0], kIfExp, quote) + comp_clause(e, 1, quote) + "]";
      case ExprKind::kMapComp:
        return "{" + expr(*c[0], kIfExp, quote) + ": " + expr(*c[1], kIfExp, quote) +
               comp_clause(e, 2, quote) + "}";
      case ExprKind::kSubscript:
        return object(*c[0], quote) + "[" + expr(*c[1], kIfExp, quote) + "]";
      case ExprKind::kSlice: {
        std::string s = object(*c[0], quote) + "[";
        if (c[1]) s += expr(*c[1], kIfExp, quote);
        s += ":";
        if (c[2]) s += expr(*c[2], kIfExp, quote);
        return s + "]";
      }
      case ExprKind::kCall:
        return e.text + "(" + list(c, 0, quote) + ")";
      case ExprKind::kMethodCall:
        return object(*c[0], quote) + "." + e.text + "(" + list(c, 1, quote) + ")";
      case ExprKind::kUnary:
        if (e.text == "not") return "not " + expr(*c[0], kNot, quote);
        return e.text + expr(*c[0], kUnary, quote);
      case ExprKind::kBinary: {
        const int p = precedence(e);
        if (e.text == "**") {
          return expr(*c[0], kPostfix, quote) + " ** " + expr(*c[1], kUnary, quote);
        }
        return expr(*c[0], p, quote) + " " + e.text + " " + expr(*c[1], p + 1, quote);
      }
      case ExprKind::kCompare:
        return expr(*c[0], kArith, quote) + " " + e.text + " " + expr(*c[1], kArith, quote);
      case ExprKind::kBoolOp: {
        const int p = precedence(e);
        std::string s;
        for (std::size_t i = 0; i < c.size(); ++i) {
          if (i != 0) s += " " + e.text + " ";
          s += expr(*c[i], p + 1, quote);
        }
        return s;
      }
      case ExprKind::kIfExp:
        return expr(*c[0], kOr, quote) + " if " + expr(*c[1], kOr, quote) + " else " +
               expr(*c[2], kIfExp, quote);
    }
    return {};
  }

  std::string comp_clause(const Expr& e, std::size_t iter_index, char quote) {
    std::string s = " for " + targets(e.targets) + " in " + expr(*e.children[iter_index], kOr, quote);
    if (e.children.size() > iter_index + 1) {
      s += " if " + expr(*e.children[iter_index + 1], kOr, quote);
    }
    return s;
  }

  std::string fstring(const Expr& e, char quote) {
    std::string s = "f";
    s += quote;
    for (const auto& part : e.children) {
      if (part->kind == ExprKind::kString) {
        std::string q = quote_string(part->text, quote);
        for (std::size_t i = 1; i + 1 < q.size(); ++i) {
          s += q[i];
          if (q[i] == '{' || q[i] == '}') s += q[i];
        }
      } else {
        // Fields use the other quote character; pad when the field itself
        // starts or ends with a brace so it is not read as an escape.
        std::string inner;
        for (char ch : expr(*part->children[0], kIfExp, quote == '"' ? '\'' : '"')) {
          // Nested literals never escape the outer quote themselves.
          if (ch == quote) inner += '\\';
          inner += ch;
        }
        s += '{';
        if (inner.front() == '{') s += ' ';
        s += inner;
        if (inner.back() == '}') s += ' ';
        s += '}';
      }
    }
    s += quote;
    return s;
  }

  void stmt(const Stmt& s, int indent) {
    switch (s.kind) {
      case StmtKind::kExpr:
        if (s.exprs[0]->kind == ExprKind::kString &&
            s.exprs[0]->text.find('\n') != std::string::npos) {
          line(indent, triple_quote(s.exprs[0]->text));
        } else {
          line(indent, expr(*s.exprs[0], kIfExp));
        }
        return;
      case StmtKind::kAssign:
        line(indent, expr(*s.exprs[0], kIfExp) + " = " + expr(*s.exprs[1], kIfExp));
        return;
      case StmtKind::kAugAssign:
        line(indent, expr(*s.exprs[0], kIfExp) + " " + s.text + "= " + expr(*s.exprs[1], kIfExp));
        return;
      case StmtKind::kIf:
        for (std::size_t i = 0; i < s.blocks.size(); ++i) {
          if (i < s.exprs.size()) {
            line(indent, std::string(i == 0 ? "if " : "elif ") + expr(*s.exprs[i], kIfExp) + ":");
          } else {
            line(indent, "else:");
          }
          block(s.blocks[i], indent + 1);
        }
        return;
      case StmtKind::kFor:
        line(indent, "for " + targets(s.names) + " in " + expr(*s.exprs[0], kIfExp) + ":");
        block(s.blocks[0], indent + 1);
        return;
      case StmtKind::kWhile:
        line(indent, "while " + expr(*s.exprs[0], kIfExp) + ":");
        block(s.blocks[0], indent + 1);
        return;
      case StmtKind::kReturn:
        line(indent, s.exprs.empty() ? "return" : "return " + expr(*s.exprs[0], kIfExp));
        return;
      case StmtKind::kBreak:
        line(indent, "break");
        return;
      case StmtKind::kContinue:
        line(indent, "continue");
        return;
      case StmtKind::kPass:
        line(indent, "pass");
        return;
      case StmtKind::kDef:
        if (!out.empty()) out += '\n';
        line(indent, "def " + s.text + "(" + targets(s.names) + "):");
        block(s.blocks[0], indent + 1);
        return;
      case StmtKind::kImport:
        if (s.names.empty()) {
          line(indent, "import " + s.text);
        } else {
          line(indent, "from " + s.text + " import " + targets(s.names));
        }
        return;
    }
  }
};

}  // namespace

std::string pretty_print(const Module& module) {
  Printer p;
  for (const auto& s : module.body) {
    Block one{s};
    p.block(one, 0);
  }
  return p.out;
}

std::string pretty_print(const Expr& expr) {
  Printer p;
  return p.expr(expr, 0);
}

}  // namespace copic::planlang
