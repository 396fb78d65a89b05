#include "stepprover/kernel.hpp"

#include <cctype>

namespace stepprover::kernel {

namespace {

bool is_keyword(std::string_view name) { return name == "add" || name == "mul" || name == "S"; }

bool legal_var_name(std::string_view name) {
  if (name.empty() || !std::islower(static_cast<unsigned char>(name.front()))) return false;
  for (char c : name) {
    if (!std::islower(static_cast<unsigned char>(c)) && !std::isdigit(static_cast<unsigned char>(c))) {
      return false;
    }
  }
  return !is_keyword(name);
}

KernelError parse_error(std::string message) { return {ErrorKind::ParseError, std::move(message)}; }

class TermParser {
 public:
  explicit TermParser(std::string_view text) : text_(text) {}

  Result<Term> parse_complete() {
    auto term = parse();
    if (!term) return term;
    skip_space();
    if (pos_ != text_.size()) return parse_error("trailing input at offset " + std::to_string(pos_));
    return term;
  }

  Result<Term> parse() {
    skip_space();
    if (pos_ >= text_.size()) return parse_error("unexpected end of input");
    const char c = text_[pos_];
    if (c == '0') {
      ++pos_;
      return Term::zero();
    }
    if (c == 'S') {
      ++pos_;
      if (!expect('(')) return parse_error("expected '(' after S");
      auto inner = parse();
      if (!inner) return inner;
      if (!expect(')')) return parse_error("expected ')' closing S(");
      return Term::succ(std::move(inner).value());
    }
    if (std::islower(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      const std::string_view ident = text_.substr(start, pos_ - start);
      if (ident == "add" || ident == "mul") {
        if (!expect('(')) return parse_error("expected '(' after " + std::string(ident));
        auto left = parse();
        if (!left) return left;
        if (!expect(',')) return parse_error("expected ',' in " + std::string(ident));
        auto right = parse();
        if (!right) return right;
        if (!expect(')')) return parse_error("expected ')' closing " + std::string(ident));
        return ident == "add" ? Term::add(std::move(left).value(), std::move(right).value())
                              : Term::mul(std::move(left).value(), std::move(right).value());
      }
      if (!legal_var_name(ident)) return parse_error("illegal variable name '" + std::string(ident) + "'");
      return Term::var(std::string(ident));
    }
    return parse_error(std::string("unexpected character '") + c + "' at offset " + std::to_string(pos_));
  }

  std::size_t position() const { return pos_; }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool expect(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

const Term* lookup(const Substitution& subst, const std::string& name) {
  for (const auto& [var, value] : subst) {
    if (var == name) return &value;
  }
  return nullptr;
}

bool match_into(const Term& pattern, const Term& term, Substitution& subst) {
  if (pattern.tag == Tag::Var) {
    if (const Term* bound = lookup(subst, pattern.name)) return *bound == term;
    subst.emplace_back(pattern.name, term);
    return true;
  }
  if (pattern.tag != term.tag) return false;
  for (std::size_t i = 0; i < pattern.children.size(); ++i) {
    if (!match_into(pattern.children[i], term.children[i], subst)) return false;
  }
  return true;
}

bool valid_path_syntax(std::string_view path) {
  if (path.empty()) return false;
  for (char c : path) {
    if (c != '0' && c != '1') return false;
  }
  return true;
}

Term* mutable_subterm(ProofState& state, std::string_view path) {
  Term* node = path.front() == '0' ? &state.lhs : &state.rhs;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const std::size_t child = path[i] == '0' ? 0 : 1;
    if (child >= node->children.size()) return nullptr;
    node = &node->children[child];
  }
  return node;
}

void collect_paths(const Term& term, std::string& prefix, std::vector<std::string>& out) {
  out.push_back(prefix);
  for (std::size_t i = 0; i < term.children.size(); ++i) {
    prefix.push_back(i == 0 ? '0' : '1');
    collect_paths(term.children[i], prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

Term Term::numeral(int n, Term base) {
  Term result = std::move(base);
  for (int i = 0; i < n; ++i) result = succ(std::move(result));
  return result;
}

std::size_t arity(Tag tag) {
  switch (tag) {
    case Tag::Zero:
    case Tag::Var:
      return 0;
    case Tag::Succ:
      return 1;
    case Tag::Add:
    case Tag::Mul:
      return 2;
  }
  return 0;
}

bool well_formed(const Term& term) {
  if (term.children.size() != arity(term.tag)) return false;
  if (term.tag == Tag::Var ? !legal_var_name(term.name) : !term.name.empty()) return false;
  for (const Term& child : term.children) {
    if (!well_formed(child)) return false;
  }
  return true;
}

std::size_t term_size(const Term& term) {
  std::size_t size = 1;
  for (const Term& child : term.children) size += term_size(child);
  return size;
}

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ParseError:
      return "ParseError";
    case ErrorKind::NoMatch:
      return "NoMatch";
    case ErrorKind::BadPath:
      return "BadPath";
    case ErrorKind::AlreadyClosed:
      return "AlreadyClosed";
  }
  return "Unknown";
}

void serialize_to(const Term& term, std::string& out) {
  switch (term.tag) {
    case Tag::Zero:
      out.push_back('0');
      return;
    case Tag::Var:
      out += term.name;
      return;
    case Tag::Succ:
      out += "S(";
      serialize_to(term.children[0], out);
      out.push_back(')');
      return;
    case Tag::Add:
    case Tag::Mul:
      out += term.tag == Tag::Add ? "add(" : "mul(";
      serialize_to(term.children[0], out);
      out.push_back(',');
      serialize_to(term.children[1], out);
      out.push_back(')');
      return;
  }
}

std::string serialize(const Term& term) {
  std::string out;
  serialize_to(term, out);
  return out;
}

Result<Term> parse_term(std::string_view text) { return TermParser(text).parse_complete(); }

std::string serialize_state(const ProofState& state) {
  std::string out;
  serialize_to(state.lhs, out);
  out += " = ";
  serialize_to(state.rhs, out);
  return out;
}

Result<ProofState> parse_state(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) return parse_error("goal has no '='");
  if (text.find('=', eq + 1) != std::string_view::npos) return parse_error("goal has more than one '='");
  auto lhs = parse_term(text.substr(0, eq));
  if (!lhs) return lhs.error();
  auto rhs = parse_term(text.substr(eq + 1));
  if (!rhs) return rhs.error();
  return ProofState{std::move(lhs).value(), std::move(rhs).value(), false};
}

const std::vector<RewriteRule>& fixed_axioms() {
  static const std::vector<RewriteRule> axioms = [] {
    const Term x = Term::var("x");
    const Term y = Term::var("y");
    const Term z = Term::var("z");
    const Term zero = Term::zero();
    return std::vector<RewriteRule>{
        {RuleId::R1, Term::add(x, zero), x},
        {RuleId::R2, Term::add(x, Term::succ(y)), Term::succ(Term::add(x, y))},
        {RuleId::R3, Term::mul(x, zero), zero},
        {RuleId::R4, Term::mul(x, Term::succ(y)), Term::add(Term::mul(x, y), x)},
        {RuleId::R5, Term::add(x, y), Term::add(y, x)},
        {RuleId::R6, Term::add(Term::add(x, y), z), Term::add(x, Term::add(y, z))},
    };
  }();
  return axioms;
}

const RewriteRule& axiom(RuleId id) { return fixed_axioms()[static_cast<std::size_t>(id) - 1]; }

std::optional<Substitution> match(const Term& pattern, const Term& term) {
  Substitution subst;
  if (!match_into(pattern, term, subst)) return std::nullopt;
  return subst;
}

std::optional<Term> instantiate(const Term& pattern, const Substitution& subst) {
  if (pattern.tag == Tag::Var) {
    const Term* bound = lookup(subst, pattern.name);
    if (bound == nullptr) return std::nullopt;
    return *bound;
  }
  Term out{pattern.tag, {}, {}};
  out.children.reserve(pattern.children.size());
  for (const Term& child : pattern.children) {
    auto inst = instantiate(child, subst);
    if (!inst) return std::nullopt;
    out.children.push_back(std::move(*inst));
  }
  return out;
}

bool Tactic::operator==(const Tactic& other) const {
  if (kind != other.kind) return false;
  if (kind != TacticKind::Rw) return true;
  return rule == other.rule && direction == other.direction && path == other.path;
}

std::string to_text(const Tactic& tactic) {
  switch (tactic.kind) {
    case TacticKind::Rfl:
      return "rfl";
    case TacticKind::Sym:
      return "sym";
    case TacticKind::Rw:
      break;
  }
  return "rw R" + std::to_string(static_cast<int>(tactic.rule)) +
         (tactic.direction == Direction::L2R ? " l2r " : " r2l ") + tactic.path;
}

Result<Tactic> parse_tactic(std::string_view text) {
  auto next_word = [&text]() {
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    const auto end = text.find(' ');
    std::string_view word = text.substr(0, end);
    text.remove_prefix(end == std::string_view::npos ? text.size() : end);
    return word;
  };
  const auto kind = next_word();
  if (kind == "rfl" || kind == "sym") {
    if (!next_word().empty()) return parse_error("trailing text after " + std::string(kind));
    return kind == "rfl" ? Tactic::rfl() : Tactic::sym();
  }
  if (kind != "rw") return parse_error("unknown tactic '" + std::string(kind) + "'");
  const auto rule = next_word();
  const auto dir = next_word();
  const auto path = next_word();
  if (rule.size() != 2 || rule[0] != 'R' || rule[1] < '1' || rule[1] > '6') {
    return parse_error("bad rule '" + std::string(rule) + "'");
  }
  if (dir != "l2r" && dir != "r2l") return parse_error("bad direction '" + std::string(dir) + "'");
  if (!valid_path_syntax(path)) return parse_error("bad path '" + std::string(path) + "'");
  if (!next_word().empty()) return parse_error("trailing text after rewrite");
  return Tactic::rw(static_cast<RuleId>(rule[1] - '0'), dir == "l2r" ? Direction::L2R : Direction::R2L,
                    std::string(path));
}

const Term* subterm_at(const ProofState& state, std::string_view path) {
  if (!valid_path_syntax(path)) return nullptr;
  const Term* node = path.front() == '0' ? &state.lhs : &state.rhs;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const std::size_t child = path[i] == '0' ? 0 : 1;
    if (child >= node->children.size()) return nullptr;
    node = &node->children[child];
  }
  return node;
}

std::vector<std::string> all_paths(const ProofState& state) {
  std::vector<std::string> out;
  std::string prefix = "0";
  collect_paths(state.lhs, prefix, out);
  prefix = "1";
  collect_paths(state.rhs, prefix, out);
  return out;
}

Result<ProofState> apply_tactic(const ProofState& state, const Tactic& tactic) {
  if (state.closed) return KernelError{ErrorKind::AlreadyClosed, "goal is already closed"};
  switch (tactic.kind) {
    case TacticKind::Rfl: {
      if (!(state.lhs == state.rhs)) return KernelError{ErrorKind::NoMatch, "sides are not syntactically equal"};
      ProofState next = state;
      next.closed = true;
      return next;
    }
    case TacticKind::Sym:
      return ProofState{state.rhs, state.lhs, false};
    case TacticKind::Rw:
      break;
  }
  if (!valid_path_syntax(tactic.path)) return KernelError{ErrorKind::BadPath, "malformed path '" + tactic.path + "'"};
  ProofState next = state;
  Term* target = mutable_subterm(next, tactic.path);
  if (target == nullptr) return KernelError{ErrorKind::BadPath, "path '" + tactic.path + "' addresses no subterm"};
  const RewriteRule& rule = axiom(tactic.rule);
  const bool forward = tactic.direction == Direction::L2R;
  const Term& from = forward ? rule.lhsPattern : rule.rhsPattern;
  const Term& to = forward ? rule.rhsPattern : rule.lhsPattern;
  auto subst = match(from, *target);
  if (!subst) return KernelError{ErrorKind::NoMatch, "rule does not match at '" + tactic.path + "'"};
  auto replacement = instantiate(to, *subst);
  // R3 right-to-left would have to invent a value for x.
  if (!replacement) return KernelError{ErrorKind::NoMatch, "rule leaves a variable unbound in this direction"};
  *target = std::move(*replacement);
  return next;
}

bool replay(const ProofState& goal, std::span<const Tactic> tactics) {
  ProofState state = goal;
  for (const Tactic& tactic : tactics) {
    auto next = apply_tactic(state, tactic);
    if (!next) return false;
    state = std::move(next).value();
  }
  return state.closed;
}

}  // namespace stepprover::kernel
