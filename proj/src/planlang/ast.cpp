#include "copic/planlang/ast.hpp"

#include <cstring>

namespace copic::planlang {

bool equal(const Expr* a, const Expr* b) {
  if (a == nullptr || b == nullptr) return a == b;
  if (a->kind != b->kind || a->text != b->text || a->targets != b->targets) return false;
  switch (a->kind) {
    case ExprKind::kInt:
      if (a->int_value != b->int_value) return false;
      break;
    case ExprKind::kFloat:
      // Bitwise so that round-trip checks catch any formatting loss.
      if (std::memcmp(&a->float_value, &b->float_value, sizeof(double)) != 0) return false;
      break;
    case ExprKind::kBool:
      if (a->bool_value != b->bool_value) return false;
      break;
    default:
      break;
  }
  if (a->children.size() != b->children.size()) return false;
  for (std::size_t i = 0; i < a->children.size(); ++i) {
    if (!equal(a->children[i].get(), b->children[i].get())) return false;
  }
  return true;
}

bool equal(const Stmt& a, const Stmt& b) {
  if (a.kind != b.kind || a.text != b.text || a.names != b.names) return false;
  if (a.exprs.size() != b.exprs.size() || a.blocks.size() != b.blocks.size()) return false;
  for (std::size_t i = 0; i < a.exprs.size(); ++i) {
    if (!equal(a.exprs[i].get(), b.exprs[i].get())) return false;
  }
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    if (!equal(a.blocks[i], b.blocks[i])) return false;
  }
  return true;
}

bool equal(const Block& a, const Block& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!equal(*a[i], *b[i])) return false;
  }
  return true;
}

bool equal(const Module& a, const Module& b) { return equal(a.body, b.body); }

const Stmt* find_function(const Module& module, std::string_view name) {
  for (const auto& s : module.body) {
    if (s->kind == StmtKind::kDef && s->text == name) return s.get();
  }
  return nullptr;
}

}  // namespace copic::planlang
