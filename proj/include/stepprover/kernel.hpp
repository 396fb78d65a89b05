#pragma once

// MiniCalc: a small equational-rewriting proof kernel over 0 / S / add / mul
// and opaque variables. It is the verifier for everything else in the
// project: search applies tactics through it and a proof counts only if
// replay() accepts it.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace stepprover::kernel {

enum class Tag : std::uint8_t { Zero, Succ, Add, Mul, Var };

struct Term {
  Tag tag = Tag::Zero;
  std::string name;  // Var only
  std::vector<Term> children;

  static Term zero() { return Term{}; }
  static Term var(std::string name) { return Term{Tag::Var, std::move(name), {}}; }
  static Term succ(Term t) { return Term{Tag::Succ, {}, {std::move(t)}}; }
  static Term add(Term a, Term b) { return Term{Tag::Add, {}, {std::move(a), std::move(b)}}; }
  static Term mul(Term a, Term b) { return Term{Tag::Mul, {}, {std::move(a), std::move(b)}}; }
  // S^n(base)
  static Term numeral(int n, Term base = zero());

  bool operator==(const Term&) const = default;
};

std::size_t arity(Tag tag);
// Arity matches the tag at every node and Var names are legal.
bool well_formed(const Term& term);
std::size_t term_size(const Term& term);

enum class ErrorKind : std::uint8_t { ParseError, NoMatch, BadPath, AlreadyClosed };

struct KernelError {
  ErrorKind kind;
  std::string message;
};

std::string_view to_string(ErrorKind kind);

template <typename T>
class Result {
 public:
  Result(T value) : data_(std::move(value)) {}  // NOLINT(google-explicit-constructor)
  Result(KernelError error) : data_(std::move(error)) {}  // NOLINT(google-explicit-constructor)

  bool ok() const { return std::holds_alternative<T>(data_); }
  explicit operator bool() const { return ok(); }

  const T& value() const& { return std::get<T>(data_); }
  T&& value() && { return std::get<T>(std::move(data_)); }
  const KernelError& error() const { return std::get<KernelError>(data_); }

 private:
  std::variant<T, KernelError> data_;
};

std::string serialize(const Term& term);
void serialize_to(const Term& term, std::string& out);
// Prefix syntax: 0 | S(t) | add(t,t) | mul(t,t) | identifier.
// Whitespace between tokens is tolerated.
Result<Term> parse_term(std::string_view text);

struct ProofState {
  Term lhs;
  Term rhs;
  bool closed = false;

  bool operator==(const ProofState&) const = default;
};

// Canonical "<lhs> = <rhs>". The closed flag is not part of the text.
std::string serialize_state(const ProofState& state);
Result<ProofState> parse_state(std::string_view text);

enum class RuleId : std::uint8_t { R1 = 1, R2, R3, R4, R5, R6 };
inline constexpr int kRuleCount = 6;

struct RewriteRule {
  RuleId id;
  Term lhsPattern;
  Term rhsPattern;
};

// R1 add(x,0)=x          R2 add(x,S(y))=S(add(x,y))
// R3 mul(x,0)=0          R4 mul(x,S(y))=add(mul(x,y),x)
// R5 add(x,y)=add(y,x)   R6 add(add(x,y),z)=add(x,add(y,z))
// Every Var inside a pattern is a pattern variable.
const std::vector<RewriteRule>& fixed_axioms();
const RewriteRule& axiom(RuleId id);

using Substitution = std::vector<std::pair<std::string, Term>>;

// First-order matching of pattern against term. Goal variables are treated
// as constants; only pattern variables bind.
std::optional<Substitution> match(const Term& pattern, const Term& term);
// Fails (nullopt) when the pattern mentions a variable the substitution
// does not bind.
std::optional<Term> instantiate(const Term& pattern, const Substitution& subst);

enum class TacticKind : std::uint8_t { Rfl, Sym, Rw };
enum class Direction : std::uint8_t { L2R, R2L };

// Paths address positions of the goal equality: the first digit picks the
// side (0 = lhs, 1 = rhs), each further digit picks a child (0 = first).
struct Tactic {
  TacticKind kind = TacticKind::Rfl;
  RuleId rule = RuleId::R1;
  Direction direction = Direction::L2R;
  std::string path;

  static Tactic rfl() { return Tactic{}; }
  static Tactic sym() { return Tactic{TacticKind::Sym, RuleId::R1, Direction::L2R, {}}; }
  static Tactic rw(RuleId rule, Direction dir, std::string path) {
    return Tactic{TacticKind::Rw, rule, dir, std::move(path)};
  }

  bool operator==(const Tactic& other) const;
};

// Human-readable tactic text: "rfl", "sym", "rw R2 l2r 00".
std::string to_text(const Tactic& tactic);
Result<Tactic> parse_tactic(std::string_view text);

const Term* subterm_at(const ProofState& state, std::string_view path);
// Every valid path of the state, lhs positions first, preorder.
std::vector<std::string> all_paths(const ProofState& state);

Result<ProofState> apply_tactic(const ProofState& state, const Tactic& tactic);

// True iff every tactic applies in sequence and the final state is closed.
bool replay(const ProofState& goal, std::span<const Tactic> tactics);

}  // namespace stepprover::kernel
