#include "lexer.hpp"

#include <cctype>

#include "copic/errors.hpp"

namespace copic::planlang::detail {

namespace {

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_';
}
bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

void append_utf8(std::string& out, unsigned cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

class Lexer {
 public:
  Lexer(std::string_view src, int line_offset, int column_offset, bool expression_only)
      : src_(src),
        line_(1 + line_offset),
        col_(1 + column_offset),
        expression_only_(expression_only) {}

  std::vector<Token> run() {
    indents_.push_back(0);
    bool at_line_start = !expression_only_;
    while (true) {
      if (at_line_start && depth_ == 0) {
        if (!handle_indentation()) break;
        at_line_start = false;
        continue;
      }
      skip_spaces();
      if (pos_ >= src_.size()) break;
      char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
        continue;
      }
      if (c == '\\' && (peek(1) == '\n' || peek(1) == '\r')) {
        advance();
        advance_newline();
        continue;
      }
      if (c == '\n' || c == '\r') {
        advance_newline();
        if (depth_ == 0 && !expression_only_) {
          emit_newline();
          at_line_start = true;
        }
        continue;
      }
      lex_token();
    }
    if (!expression_only_) {
      emit_newline();
      while (indents_.size() > 1) {
        indents_.pop_back();
        push(TokKind::kDedent, "");
      }
    }
    push(TokKind::kEnd, "");
    return std::move(tokens_);
  }

 private:
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  void advance() {
    ++pos_;
    ++col_;
  }

  void advance_newline() {
    if (src_[pos_] == '\r' && peek(1) == '\n') ++pos_;
    ++pos_;
    ++line_;
    col_ = 1;
  }

  void skip_spaces() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\f')) {
      advance();
    }
  }

  void push(TokKind kind, std::string text) {
    tokens_.push_back({kind, std::move(text), false, tok_line_, tok_col_});
  }

  void emit_newline() {
    if (!tokens_.empty() && tokens_.back().kind != TokKind::kNewline &&
        tokens_.back().kind != TokKind::kIndent && tokens_.back().kind != TokKind::kDedent) {
      tok_line_ = line_;
      tok_col_ = col_;
      push(TokKind::kNewline, "");
    }
  }

  // Measures the indentation of the next logical line and emits INDENT/DEDENT.
  // Returns false at end of input.
  bool handle_indentation() {
    while (pos_ < src_.size()) {
      int width = 0;
      while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t')) {
        width = src_[pos_] == '\t' ? (width / 8 + 1) * 8 : width + 1;
        advance();
      }
      if (pos_ >= src_.size()) return false;
      char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
        continue;
      }
      if (c == '\n' || c == '\r') {
        advance_newline();
        continue;
      }
      tok_line_ = line_;
      tok_col_ = col_;
      if (width > indents_.back()) {
        indents_.push_back(width);
        push(TokKind::kIndent, "");
      } else {
        while (width < indents_.back()) {
          indents_.pop_back();
          push(TokKind::kDedent, "");
        }
        if (width != indents_.back()) {
          throw ParseError(line_, col_, "unindent does not match any outer indentation level");
        }
      }
      return true;
    }
    return false;
  }

  void lex_token() {
    tok_line_ = line_;
    tok_col_ = col_;
    char c = src_[pos_];
    if (is_ident_start(c)) {
      std::size_t start = pos_;
      while (pos_ < src_.size() && is_ident_char(src_[pos_])) advance();
      std::string word(src_.substr(start, pos_ - start));
      // String prefixes.
      if (pos_ < src_.size() && (src_[pos_] == '"' || src_[pos_] == '\'')) {
        std::string lower;
        for (char ch : word) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        if (lower == "f" || lower == "r") {
          lex_string(lower == "f", lower == "r");
          return;
        }
        if (lower == "b" || lower == "rb" || lower == "br" || lower == "u" || lower == "fr" ||
            lower == "rf") {
          throw UnsupportedConstruct(tok_line_, tok_col_, "string prefix '" + word + "'");
        }
      }
      push(TokKind::kName, std::move(word));
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) != 0 ||
        (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))) != 0)) {
      lex_number();
      return;
    }
    if (c == '"' || c == '\'') {
      lex_string(false, false);
      return;
    }
    static const char* const kThree[] = {"//=", "**=", "...", ">>=", "<<="};
    static const char* const kTwo[] = {"==", "!=", "<=", ">=", "//", "**", "+=", "-=", "*=",
                                       "/=", "%=", "->", ":=", "<<", ">>", "&=", "|=", "^="};
    for (const char* op : kThree) {
      if (src_.substr(pos_, 3) == op) {
        for (int i = 0; i < 3; ++i) advance();
        push(TokKind::kOp, op);
        return;
      }
    }
    for (const char* op : kTwo) {
      if (src_.substr(pos_, 2) == op) {
        advance();
        advance();
        push(TokKind::kOp, op);
        return;
      }
    }
    static const std::string_view kOne = "+-*/%<>=()[]{},:.;@&|^~";
    if (kOne.find(c) != std::string_view::npos) {
      if (c == '(' || c == '[' || c == '{') ++depth_;
      if ((c == ')' || c == ']' || c == '}') && depth_ > 0) --depth_;
      advance();
      push(TokKind::kOp, std::string(1, c));
      return;
    }
    throw ParseError(line_, col_, std::string("unexpected character '") + c + "'");
  }

  void lex_number() {
    std::size_t start = pos_;
    bool is_float = false;
    auto digits = [&] {
      while (pos_ < src_.size() &&
             (std::isdigit(static_cast<unsigned char>(src_[pos_])) != 0 || src_[pos_] == '_')) {
        advance();
      }
    };
    if (src_[pos_] == '0' && (peek(1) == 'x' || peek(1) == 'X' || peek(1) == 'o' ||
                              peek(1) == 'O' || peek(1) == 'b' || peek(1) == 'B')) {
      throw UnsupportedConstruct(line_, col_, "non-decimal integer literal");
    }
    digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      is_float = true;
      advance();
      digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      is_float = true;
      advance();
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) advance();
      if (pos_ >= src_.size() || std::isdigit(static_cast<unsigned char>(src_[pos_])) == 0) {
        throw ParseError(line_, col_, "malformed exponent");
      }
      digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'j' || src_[pos_] == 'J')) {
      throw UnsupportedConstruct(tok_line_, tok_col_, "complex literal");
    }
    if (pos_ < src_.size() && is_ident_start(src_[pos_])) {
      throw ParseError(line_, col_, "invalid number literal");
    }
    std::string text;
    for (char ch : src_.substr(start, pos_ - start)) {
      if (ch != '_') text += ch;
    }
    push(is_float ? TokKind::kFloat : TokKind::kInt, std::move(text));
  }

  void lex_string(bool fstring, bool raw) {
    const char quote = src_[pos_];
    const bool triple = peek(1) == quote && peek(2) == quote;
    const int open_line = tok_line_;
    const int open_col = tok_col_;
    for (int i = 0; i < (triple ? 3 : 1); ++i) advance();
    const int body_line = line_;
    const int body_col = col_;
    std::size_t start = pos_;
    while (true) {
      if (pos_ >= src_.size()) throw ParseError(open_line, open_col, "unterminated string literal");
      char c = src_[pos_];
      if (c == '\\' && pos_ + 1 < src_.size()) {
        advance();
        if (src_[pos_] == '\n' || src_[pos_] == '\r') {
          advance_newline();
        } else {
          advance();
        }
        continue;
      }
      if (c == '\n' || c == '\r') {
        if (!triple) throw ParseError(open_line, open_col, "unterminated string literal");
        advance_newline();
        continue;
      }
      if (c == quote) {
        if (!triple) break;
        if (peek(1) == quote && peek(2) == quote) break;
      }
      advance();
    }
    std::string_view body = src_.substr(start, pos_ - start);
    for (int i = 0; i < (triple ? 3 : 1); ++i) advance();
    Token tok;
    tok.kind = TokKind::kString;
    tok.line = open_line;
    tok.column = open_col;
    tok.fstring = fstring;
    if (fstring) {
      tok.text = std::string(body);
      tok.body_line = body_line;
      tok.body_column = body_col;
    } else {
      tok.text = raw ? std::string(body) : decode_escapes(body, open_line, open_col);
    }
    tokens_.push_back(std::move(tok));
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_;
  int col_;
  int tok_line_ = 1;
  int tok_col_ = 1;
  int depth_ = 0;
  bool expression_only_;
  std::vector<int> indents_;
  std::vector<Token> tokens_;
};

}  // namespace

std::string decode_escapes(std::string_view body, int line, int column) {
  std::string out;
  out.reserve(body.size());
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (c != '\\' || i + 1 >= body.size()) {
      out += c;
      continue;
    }
    char e = body[++i];
    switch (e) {
      case 'n':
        out += '\n';
        break;
      case 't':
        out += '\t';
        break;
      case 'r':
        out += '\r';
        break;
      case '0':
        out += '\0';
        break;
      case '\\':
        out += '\\';
        break;
      case '\'':
        out += '\'';
        break;
      case '"':
        out += '"';
        break;
      case '\n':
        break;
      case '\r':
        if (i + 1 < body.size() && body[i + 1] == '\n') ++i;
        break;
      case 'x':
      case 'u': {
        const std::size_t len = e == 'x' ? 2 : 4;
        if (i + len >= body.size()) throw ParseError(line, column, "truncated escape sequence");
        unsigned cp = 0;
        for (std::size_t k = 1; k <= len; ++k) {
          int h = hex_value(body[i + k]);
          if (h < 0) throw ParseError(line, column, "invalid escape sequence");
          cp = cp * 16 + static_cast<unsigned>(h);
        }
        i += len;
        append_utf8(out, cp);
        break;
      }
      default:
        out += '\\';
        out += e;
        break;
    }
  }
  return out;
}

std::vector<Token> tokenize(std::string_view source, int line_offset, int column_offset,
                            bool expression_only) {
  return Lexer(source, line_offset, column_offset, expression_only).run();
}

}  // namespace copic::planlang::detail
