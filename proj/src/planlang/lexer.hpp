#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace copic::planlang::detail {

enum class TokKind { kName, kInt, kFloat, kString, kOp, kNewline, kIndent, kDedent, kEnd };

struct Token {
  TokKind kind = TokKind::kEnd;
  // Names/operators: the lexeme. Plain strings: the decoded value.
  // F-strings: the raw body between the quotes.
  std::string text;
  bool fstring = false;
  int line = 1;
  int column = 1;
  // F-strings: where the body starts, for positions inside fields.
  int body_line = 0;
  int body_column = 0;
};

/// Splits source into tokens with Python-style INDENT/DEDENT handling.
/// Newlines inside brackets are joined; '#' comments are dropped.
/// `line_offset`/`column_offset` shift reported positions (used when
/// re-lexing f-string fields).
std::vector<Token> tokenize(std::string_view source, int line_offset = 0, int column_offset = 0,
                            bool expression_only = false);

/// Processes backslash escapes of a non-raw string body.
std::string decode_escapes(std::string_view body, int line, int column);

}  // namespace copic::planlang::detail
