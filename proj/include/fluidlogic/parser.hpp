#pragma once

#include <cctype>
#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"
#include "formula.hpp"

namespace fluidlogic {

// ---------------------------------------------------------------------------
// Surface syntax:
//
//   formula := or
//   or      := and ("|" and)*
//   and     := unary ("&" unary)*
//   unary   := "!" unary | modal | atom | "(" formula ")"
//   modal   := ("G"|"F"|"K_"ID|"B_"ID|"O") window? "(" formula ")"
//            | "[" ID (";" ID)* "]" "(" formula ")"
//   window  := "[" num "," num "]"
//
// G/F are temporal Box/Diamond, K_a/B_a epistemic/doxastic Box, O deontic
// Box.  Errors carry the byte offset of the offending token.
// ---------------------------------------------------------------------------

namespace detail {

struct Token {
  enum class Kind { End, Id, Num, LParen, RParen, LBrack, RBrack,
                    Comma, Semi, Amp, Pipe, Bang };
  Kind kind = Kind::End;
  std::string text;
  double num = 0.0;
  std::size_t offset = 0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }
  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_])))
      ++pos_;
    tok_ = Token{};
    tok_.offset = pos_;
    if (pos_ >= src_.size()) return;
    const char c = src_[pos_];
    using K = Token::Kind;
    switch (c) {
      case '(': tok_.kind = K::LParen; ++pos_; return;
      case ')': tok_.kind = K::RParen; ++pos_; return;
      case '[': tok_.kind = K::LBrack; ++pos_; return;
      case ']': tok_.kind = K::RBrack; ++pos_; return;
      case ',': tok_.kind = K::Comma; ++pos_; return;
      case ';': tok_.kind = K::Semi; ++pos_; return;
      case '&': tok_.kind = K::Amp; ++pos_; return;
      case '|': tok_.kind = K::Pipe; ++pos_; return;
      case '!': tok_.kind = K::Bang; ++pos_; return;
      default: break;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t e = pos_;
      while (e < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[e])) || src_[e] == '_'))
        ++e;
      tok_.kind = K::Id;
      tok_.text = std::string(src_.substr(pos_, e - pos_));
      pos_ = e;
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double v = 0.0;
      const char* b = src_.data() + pos_;
      const char* e = src_.data() + src_.size();
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec != std::errc())
        throw SyntaxError("malformed number", pos_);
      tok_.kind = K::Num;
      tok_.num = v;
      tok_.text = std::string(b, p);
      pos_ = static_cast<std::size_t>(p - src_.data());
      return;
    }
    throw SyntaxError(std::string("unexpected character '") + c + "'", pos_);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  Token tok_;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : lex_(src) {}

  FormulaPtr parse() {
    FormulaPtr f = parse_or();
    expect(Token::Kind::End, "end of input");
    return f;
  }

 private:
  using K = Token::Kind;

  FormulaPtr parse_or() {
    FormulaPtr f = parse_and();
    while (lex_.peek().kind == K::Pipe) {
      lex_.take();
      f = lor(f, parse_and());
    }
    return f;
  }

  FormulaPtr parse_and() {
    FormulaPtr f = parse_unary();
    while (lex_.peek().kind == K::Amp) {
      lex_.take();
      f = land(f, parse_unary());
    }
    return f;
  }

  FormulaPtr parse_unary() {
    const Token& t = lex_.peek();
    switch (t.kind) {
      case K::Bang:
        lex_.take();
        return lnot(parse_unary());
      case K::LParen: {
        lex_.take();
        FormulaPtr f = parse_or();
        expect(K::RParen, "')'");
        return f;
      }
      case K::LBrack:
        return parse_seq();
      case K::Id:
        return parse_id();
      default:
        throw SyntaxError("expected formula", t.offset);
    }
  }

  // An identifier is a modal head only when it has modal shape *and* is
  // followed by '(' or '[' (atoms are never followed by either).
  FormulaPtr parse_id() {
    Token t = lex_.take();
    const bool followed =
        lex_.peek().kind == K::LParen || lex_.peek().kind == K::LBrack;
    if (followed) {
      if (t.text == "G") return parse_modal(Formula::Kind::Box, temporal_mod());
      if (t.text == "F")
        return parse_modal(Formula::Kind::Diamond, temporal_mod());
      if (t.text == "O") return parse_modal(Formula::Kind::Box, deontic_mod());
      if (t.text.size() > 2 && t.text.rfind("K_", 0) == 0)
        return parse_modal(Formula::Kind::Box, epistemic_mod(t.text.substr(2)));
      if (t.text.size() > 2 && t.text.rfind("B_", 0) == 0)
        return parse_modal(Formula::Kind::Box, doxastic_mod(t.text.substr(2)));
      throw SyntaxError("'" + t.text + "' is not a modal operator", t.offset);
    }
    return atom(t.text);
  }

  FormulaPtr parse_modal(Formula::Kind kind, Modality m) {
    std::optional<Window> w;
    if (lex_.peek().kind == K::LBrack) {
      const std::size_t at = lex_.peek().offset;
      lex_.take();
      const double a = expect_num();
      expect(K::Comma, "','");
      const double b = expect_num();
      expect(K::RBrack, "']'");
      if (a > b) throw SyntaxError("empty window: lower bound exceeds upper", at);
      w = Window{a, b};
    }
    expect(K::LParen, "'('");
    FormulaPtr f = parse_or();
    expect(K::RParen, "')'");
    return kind == Formula::Kind::Box ? box(m, w, std::move(f))
                                      : diamond(m, w, std::move(f));
  }

  FormulaPtr parse_seq() {
    expect(K::LBrack, "'['");
    std::vector<std::string> actions;
    actions.push_back(expect_id());
    while (lex_.peek().kind == K::Semi) {
      lex_.take();
      actions.push_back(expect_id());
    }
    expect(K::RBrack, "']'");
    expect(K::LParen, "'('");
    FormulaPtr f = parse_or();
    expect(K::RParen, "')'");
    return seq(std::move(actions), std::move(f));
  }

  void expect(K kind, const char* what) {
    const Token& t = lex_.peek();
    if (t.kind != kind) throw SyntaxError(std::string("expected ") + what, t.offset);
    lex_.take();
  }
  double expect_num() {
    const Token& t = lex_.peek();
    if (t.kind != K::Num) throw SyntaxError("expected number", t.offset);
    return lex_.take().num;
  }
  std::string expect_id() {
    const Token& t = lex_.peek();
    if (t.kind != K::Id) throw SyntaxError("expected identifier", t.offset);
    return lex_.take().text;
  }

  Lexer lex_;
};

inline std::string fmt_num(double x) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw NumericError("fmt_num: conversion failed");
  return std::string(buf, p);
}

}  // namespace detail

inline FormulaPtr parse(std::string_view src) {
  return detail::Parser(src).parse();
}

// Canonical printer.  parse(print(f)) reproduces f structurally for every
// parser-producible AST; the one surface gap is non-temporal Diamond, which
// has no head of its own and prints via its exact dual !M(!f).
inline std::string print(const FormulaPtr& f) {
  if (!f) throw ConfigError("print: null formula");
  auto wrap = [](const FormulaPtr& g, bool parens) {
    return parens ? "(" + print(g) + ")" : print(g);
  };
  auto win_str = [](const std::optional<Window>& w) {
    if (!w) return std::string();
    return "[" + detail::fmt_num(w->a) + "," + detail::fmt_num(w->b) + "]";
  };
  using Kind = Formula::Kind;
  switch (f->kind) {
    case Kind::Atom:
      return f->atom;
    case Kind::Not:
      return "!" + wrap(f->lhs, f->lhs->kind == Kind::And || f->lhs->kind == Kind::Or);
    case Kind::And:
      return wrap(f->lhs, f->lhs->kind == Kind::Or) + " & " +
             wrap(f->rhs, f->rhs->kind == Kind::And || f->rhs->kind == Kind::Or);
    case Kind::Or:
      return print(f->lhs) + " | " + wrap(f->rhs, f->rhs->kind == Kind::Or);
    case Kind::Box:
    case Kind::Diamond: {
      std::string head;
      switch (f->modality.family) {
        case ModalFamily::Temporal:
          head = f->kind == Kind::Box ? "G" : "F";
          break;
        case ModalFamily::Epistemic: head = "K_" + f->modality.agent; break;
        case ModalFamily::Doxastic: head = "B_" + f->modality.agent; break;
        case ModalFamily::Deontic: head = "O"; break;
      }
      if (f->kind == Kind::Diamond && f->modality.family != ModalFamily::Temporal)
        return print(lnot(box(f->modality, f->window, lnot(f->lhs))));
      return head + win_str(f->window) + "(" + print(f->lhs) + ")";
    }
    case Kind::Seq: {
      std::string s = "[";
      for (std::size_t i = 0; i < f->actions.size(); ++i) {
        if (i) s += ";";
        s += f->actions[i];
      }
      return s + "](" + print(f->lhs) + ")";
    }
  }
  throw ConfigError("print: unknown node kind");
}

}  // namespace fluidlogic
