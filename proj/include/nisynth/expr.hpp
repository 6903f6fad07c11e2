#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nisynth {

// Raised by parse(); offset is a byte offset into the source text.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// Domain error during evaluation: division by zero or an unbound variable.
class EvalError : public std::runtime_error {
public:
    enum class Kind { DivisionByZero, UnboundVariable };
    EvalError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

enum class Op : std::uint8_t {
    Constant,
    Variable,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    IntPow,
    Sin,
    Cos,
    Exp,
    Cbrt,
};

struct Node;

/// Immutable scalar expression over named variables. Copies share the tree.
class Expr {
public:
    Expr();  // Constant(0)
    explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

    static Expr constant(double value);
    static Expr variable(std::string name);

    Op op() const;
    const Node& node() const { return *node_; }
    bool is_constant() const { return op() == Op::Constant; }
    bool is_constant(double value) const;
    double constant_value() const;
    const std::string& variable_name() const;
    // Children in order; IntPow has one child.
    const Expr& child(std::size_t i) const;
    std::size_t arity() const;
    int exponent() const;

    bool same_node(const Expr& other) const { return node_ == other.node_; }

private:
    std::shared_ptr<const Node> node_;
};

struct Node {
    Op op = Op::Constant;
    double value = 0.0;
    int exponent = 0;
    std::string name;
    std::vector<Expr> children;
};

// Raw constructors (no simplification).
Expr make_unary(Op op, Expr a);
Expr make_binary(Op op, Expr a, Expr b);
Expr make_intpow(Expr base, int exponent);

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr pow(const Expr& base, int exponent);
Expr sin(const Expr& a);
Expr cos(const Expr& a);
Expr exp(const Expr& a);
Expr cbrt(const Expr& a);

using Assignment = std::map<std::string, double, std::less<>>;

Expr parse(std::string_view text);
std::string to_string(const Expr& e);

double eval(const Expr& e, const Assignment& a);
Expr diff(const Expr& e, std::string_view var);
Expr fold(const Expr& e);
Expr substitute(const Expr& e, const std::map<std::string, Expr, std::less<>>& bindings);

std::set<std::string, std::less<>> free_variables(const Expr& e);
std::size_t node_count(const Expr& e);
// True if evaluation can raise a domain error (contains Div or a negative IntPow).
bool can_fail(const Expr& e);
// Structural equality of trees (constants compared bitwise-equal as doubles).
bool structurally_equal(const Expr& a, const Expr& b);

// Integer power shared by eval, fold and compiled programs so results agree bit for bit.
double int_power(double base, int exponent);

/// Flat stack program for fast repeated evaluation over a fixed variable layout.
class CompiledExpr {
public:
    CompiledExpr() = default;
    CompiledExpr(const Expr& e, std::span<const std::string> slots);

    double operator()(std::span<const double> values) const;
    bool empty() const { return code_.empty(); }

private:
    struct Instr {
        Op op;
        int arg;
        double value;
    };
    std::vector<Instr> code_;
    std::size_t max_depth_ = 0;
};

/// Sampling box: per-variable closed interval.
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    static Box symmetric(std::size_t dim, double half_width);
    static Box ball_around(std::span<const double> center, double radius);
    std::size_t dim() const { return lo.size(); }
    std::vector<double> center() const;
};

struct ZeroTestOptions {
    std::size_t samples = 50;
    double tol = 1e-9;
    std::uint64_t seed = 0x5eed;
};

struct ZeroTestResult {
    bool zero = false;
    bool decided_structurally = false;
    std::optional<std::vector<double>> witness;  // first sample where |e| exceeded the bound
    std::vector<std::vector<double>> skipped;    // samples that raised a domain error
};

ZeroTestResult probably_zero(const Expr& e, std::span<const std::string> vars, const Box& box,
                             const ZeroTestOptions& opts);

bool is_probably_zero(const Expr& e, std::span<const std::string> vars, const Box& box,
                      std::size_t n, double tol, std::uint64_t seed = 0x5eed);

}  // namespace nisynth
