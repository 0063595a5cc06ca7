#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace copic::planlang {

struct SourcePos {
  int line = 0;
  int column = 0;
};

enum class ExprKind {
  kName,
  kInt,
  kFloat,
  kBool,
  kNone,
  kString,
  kFString,      // children: kString literal parts and kFormatField parts
  kFormatField,  // children[0]: embedded expression
  kList,
  kTuple,
  kMap,          // children: key0, value0, key1, value1, ...
  kListComp,     // children: element, iterable[, condition]; targets: loop names
  kMapComp,      // children: key, value, iterable[, condition]; targets: loop names
  kSubscript,    // children: object, index
  kSlice,        // children: object, lower|null, upper|null
  kCall,         // text: callee ("len", "math.ceil", user function); children: args
  kMethodCall,   // text: method; children: object, args...
  kUnary,        // text: "-", "+", "not"
  kBinary,       // text: "+", "-", "*", "/", "//", "%", "**"
  kCompare,      // text: "==", "!=", "<", "<=", ">", ">=", "in", "not in", "is", "is not"
  kBoolOp,       // text: "and", "or"
  kIfExp,        // children: value, condition, alternative
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  ExprKind kind = ExprKind::kNone;
  std::string text;
  std::int64_t int_value = 0;
  double float_value = 0.0;
  bool bool_value = false;
  std::vector<ExprPtr> children;
  std::vector<std::string> targets;
  SourcePos pos;
};

enum class StmtKind {
  kExpr,       // exprs: [expression]
  kAssign,     // exprs: [target, value]
  kAugAssign,  // text: operator without '='; exprs: [target, value]
  kIf,         // exprs: conditions; blocks: one per condition, plus else when present
  kFor,        // names: loop targets; exprs: [iterable]; blocks: [body]
  kWhile,      // exprs: [condition]; blocks: [body]
  kReturn,     // exprs: [] or [value]
  kBreak,
  kContinue,
  kPass,
  kDef,        // text: name; names: parameters; blocks: [body]
  kImport,     // text: module; names: imported names (empty for "import module")
};

struct Stmt;
using StmtPtr = std::shared_ptr<const Stmt>;
using Block = std::vector<StmtPtr>;

struct Stmt {
  StmtKind kind = StmtKind::kPass;
  std::string text;
  std::vector<std::string> names;
  std::vector<ExprPtr> exprs;
  std::vector<Block> blocks;
  SourcePos pos;
};

struct Module {
  Block body;
};

/// Structural equality; source positions are ignored.
bool equal(const Expr* a, const Expr* b);
bool equal(const Stmt& a, const Stmt& b);
bool equal(const Block& a, const Block& b);
bool equal(const Module& a, const Module& b);

/// Top-level function definition named `name`, or nullptr.
const Stmt* find_function(const Module& module, std::string_view name);

}  // namespace copic::planlang
