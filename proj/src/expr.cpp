#include "nisynth/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "nisynth/sampling.hpp"

namespace nisynth {

namespace {

std::shared_ptr<const Node> make_node(Op op, double value, int exponent, std::string name,
                                      std::vector<Expr> children) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = value;
    n->exponent = exponent;
    n->name = std::move(name);
    n->children = std::move(children);
    return n;
}

int precedence(const Expr& e) {
    switch (e.op()) {
        case Op::Add:
        case Op::Sub:
            return 1;
        case Op::Mul:
        case Op::Div:
            return 2;
        case Op::IntPow:
            return 3;
        case Op::Neg:
            return 4;
        default:
            return 5;
    }
}

const char* function_name(Op op) {
    switch (op) {
        case Op::Sin:
            return "sin";
        case Op::Cos:
            return "cos";
        case Op::Exp:
            return "exp";
        case Op::Cbrt:
            return "cbrt";
        default:
            return nullptr;
    }
}

bool is_power_of_two(double c) {
    if (c == 0.0 || !std::isfinite(c)) return false;
    int e = 0;
    const double m = std::frexp(std::abs(c), &e);
    return m == 0.5;
}

double apply_unary(Op op, double a) {
    switch (op) {
        case Op::Neg:
            return -a;
        case Op::Sin:
            return std::sin(a);
        case Op::Cos:
            return std::cos(a);
        case Op::Exp:
            return std::exp(a);
        case Op::Cbrt:
            return std::cbrt(a);
        default:
            throw std::logic_error("not a unary op");
    }
}

double apply_binary(Op op, double a, double b) {
    switch (op) {
        case Op::Add:
            return a + b;
        case Op::Sub:
            return a - b;
        case Op::Mul:
            return a * b;
        case Op::Div:
            if (b == 0.0) throw EvalError(EvalError::Kind::DivisionByZero, "division by zero");
            return a / b;
        default:
            throw std::logic_error("not a binary op");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Expr

Expr::Expr() : node_(make_node(Op::Constant, 0.0, 0, {}, {})) {}

Expr Expr::constant(double value) { return Expr(make_node(Op::Constant, value, 0, {}, {})); }

Expr Expr::variable(std::string name) {
    return Expr(make_node(Op::Variable, 0.0, 0, std::move(name), {}));
}

Op Expr::op() const { return node_->op; }
bool Expr::is_constant(double value) const { return is_constant() && node_->value == value; }
double Expr::constant_value() const { return node_->value; }
const std::string& Expr::variable_name() const { return node_->name; }
const Expr& Expr::child(std::size_t i) const { return node_->children.at(i); }
std::size_t Expr::arity() const { return node_->children.size(); }
int Expr::exponent() const { return node_->exponent; }

Expr make_unary(Op op, Expr a) { return Expr(make_node(op, 0.0, 0, {}, {std::move(a)})); }

Expr make_binary(Op op, Expr a, Expr b) {
    return Expr(make_node(op, 0.0, 0, {}, {std::move(a), std::move(b)}));
}

Expr make_intpow(Expr base, int exponent) {
    return Expr(make_node(Op::IntPow, 0.0, exponent, {}, {std::move(base)}));
}

Expr operator+(const Expr& a, const Expr& b) { return make_binary(Op::Add, a, b); }
Expr operator-(const Expr& a, const Expr& b) { return make_binary(Op::Sub, a, b); }
Expr operator*(const Expr& a, const Expr& b) { return make_binary(Op::Mul, a, b); }
Expr operator/(const Expr& a, const Expr& b) { return make_binary(Op::Div, a, b); }
Expr operator-(const Expr& a) { return make_unary(Op::Neg, a); }
Expr pow(const Expr& base, int exponent) { return make_intpow(base, exponent); }
Expr sin(const Expr& a) { return make_unary(Op::Sin, a); }
Expr cos(const Expr& a) { return make_unary(Op::Cos, a); }
Expr exp(const Expr& a) { return make_unary(Op::Exp, a); }
Expr cbrt(const Expr& a) { return make_unary(Op::Cbrt, a); }

double int_power(double base, int exponent) {
    if (exponent < 0) {
        if (base == 0.0) throw EvalError(EvalError::Kind::DivisionByZero, "zero to a negative power");
        return 1.0 / int_power(base, -exponent);
    }
    double result = 1.0;
    double b = base;
    unsigned k = static_cast<unsigned>(exponent);
    while (k != 0) {
        if (k & 1u) result *= b;
        k >>= 1u;
        if (k != 0) b *= b;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

constexpr int kMaxExponent = 1 << 20;

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    Expr parse_all() {
        Expr e = parse_sum();
        skip_ws();
        if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

    void skip_ws() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' ||
                                       text_[pos_] == '\n' || text_[pos_] == '\r'))
            ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) {
            if (pos_ >= text_.size()) fail(std::string("expected '") + c + "' but reached end of input");
            fail(std::string("expected '") + c + "'");
        }
    }

    Expr parse_sum() {
        Expr lhs = parse_product();
        for (;;) {
            if (accept('+'))
                lhs = lhs + parse_product();
            else if (accept('-'))
                lhs = lhs - parse_product();
            else
                return lhs;
        }
    }

    Expr parse_product() {
        Expr lhs = parse_unary();
        for (;;) {
            if (accept('*'))
                lhs = lhs * parse_unary();
            else if (accept('/'))
                lhs = lhs / parse_unary();
            else
                return lhs;
        }
    }

    Expr parse_unary() {
        if (accept('-')) return -parse_unary();
        return parse_power();
    }

    Expr parse_power() {
        Expr base = parse_primary();
        if (accept('^')) return pow(base, parse_exponent());
        return base;
    }

    // Integer literal, optionally signed and parenthesized; chains are right-associative.
    int parse_exponent() {
        skip_ws();
        const std::size_t start = pos_;
        const bool paren = accept('(');
        bool negative = false;
        if (accept('-')) negative = true;
        skip_ws();
        const std::size_t lit_pos = pos_;
        if (pos_ >= text_.size() || !(std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) {
            pos_ = start;
            fail("exponent must be an integer literal");
        }
        const double value = read_number();
        if (value != std::floor(value) || std::abs(value) > kMaxExponent) {
            pos_ = lit_pos;
            fail("non-integer exponent");
        }
        if (paren) expect(')');
        long long k = static_cast<long long>(value);
        if (negative) k = -k;
        if (accept('^')) {
            const int outer = parse_exponent();
            if (outer < 0) {
                pos_ = start;
                fail("non-integer exponent");
            }
            const double folded = std::pow(static_cast<double>(k), outer);
            if (std::abs(folded) > kMaxExponent) {
                pos_ = start;
                fail("exponent too large");
            }
            k = static_cast<long long>(folded);
        }
        return static_cast<int>(k);
    }

    double read_number() {
        const char* first = text_.data() + pos_;
        // Reject hex floats and other forms from_chars would accept but the grammar does not.
        std::size_t i = pos_;
        while (i < text_.size() && std::isdigit(static_cast<unsigned char>(text_[i]))) ++i;
        if (i < text_.size() && text_[i] == '.') {
            ++i;
            while (i < text_.size() && std::isdigit(static_cast<unsigned char>(text_[i]))) ++i;
        }
        if (i == pos_ || (i == pos_ + 1 && text_[pos_] == '.')) fail("malformed number");
        if (i < text_.size() && (text_[i] == 'e' || text_[i] == 'E')) {
            std::size_t j = i + 1;
            if (j < text_.size() && (text_[j] == '+' || text_[j] == '-')) ++j;
            if (j < text_.size() && std::isdigit(static_cast<unsigned char>(text_[j]))) {
                while (j < text_.size() && std::isdigit(static_cast<unsigned char>(text_[j]))) ++j;
                i = j;
            }
        }
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(first, text_.data() + i, value);
        if (ec != std::errc() || ptr != text_.data() + i) fail("malformed number");
        pos_ = i;
        return value;
    }

    Expr parse_primary() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of input");
        const char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return Expr::constant(read_number());
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
                ++pos_;
            std::string name(text_.substr(start, pos_ - start));
            skip_ws();
            if (pos_ < text_.size() && text_[pos_] == '(') {
                Op op;
                if (name == "sin")
                    op = Op::Sin;
                else if (name == "cos")
                    op = Op::Cos;
                else if (name == "exp")
                    op = Op::Exp;
                else if (name == "cbrt")
                    op = Op::Cbrt;
                else {
                    pos_ = start;
                    fail("unknown function '" + name + "'");
                }
                expect('(');
                Expr arg = parse_sum();
                expect(')');
                return make_unary(op, arg);
            }
            return Expr::variable(std::move(name));
        }
        if (c == '(') {
            ++pos_;
            Expr inner = parse_sum();
            expect(')');
            return inner;
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

}  // namespace

Expr parse(std::string_view text) { return Parser(text).parse_all(); }

// ---------------------------------------------------------------------------
// Printing

namespace {

std::string format_number(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    (void)ec;
    return std::string(buf.data(), ptr);
}

void print(const Expr& e, std::string& out);

void print_wrapped(const Expr& e, bool wrap, std::string& out) {
    if (wrap) out += '(';
    print(e, out);
    if (wrap) out += ')';
}

void print(const Expr& e, std::string& out) {
    switch (e.op()) {
        case Op::Constant: {
            const double v = e.constant_value();
            if (std::signbit(v)) {
                out += "(-";
                out += format_number(-v);
                out += ')';
            } else {
                out += format_number(v);
            }
            return;
        }
        case Op::Variable:
            out += e.variable_name();
            return;
        case Op::Add:
            print(e.child(0), out);
            out += " + ";
            print_wrapped(e.child(1), precedence(e.child(1)) <= 1, out);
            return;
        case Op::Sub:
            print(e.child(0), out);
            out += " - ";
            print_wrapped(e.child(1), true, out);
            return;
        case Op::Mul:
        case Op::Div:
            print_wrapped(e.child(0), precedence(e.child(0)) < 2, out);
            out += e.op() == Op::Mul ? "*" : "/";
            print_wrapped(e.child(1), precedence(e.child(1)) <= 2, out);
            return;
        case Op::Neg:
            out += "-(";
            print(e.child(0), out);
            out += ')';
            return;
        case Op::IntPow:
            print_wrapped(e.child(0), precedence(e.child(0)) < 5, out);
            out += '^';
            if (e.exponent() < 0) {
                out += "(-";
                out += std::to_string(-static_cast<long long>(e.exponent()));
                out += ')';
            } else {
                out += std::to_string(e.exponent());
            }
            return;
        default:
            out += function_name(e.op());
            out += '(';
            print(e.child(0), out);
            out += ')';
            return;
    }
}

}  // namespace

std::string to_string(const Expr& e) {
    std::string out;
    print(e, out);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

double eval(const Expr& e, const Assignment& a) {
    switch (e.op()) {
        case Op::Constant:
            return e.constant_value();
        case Op::Variable: {
            auto it = a.find(e.variable_name());
            if (it == a.end())
                throw EvalError(EvalError::Kind::UnboundVariable, "unbound variable '" + e.variable_name() + "'");
            return it->second;
        }
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div: {
            const double lhs = eval(e.child(0), a);
            const double rhs = eval(e.child(1), a);
            return apply_binary(e.op(), lhs, rhs);
        }
        case Op::IntPow:
            return int_power(eval(e.child(0), a), e.exponent());
        default:
            return apply_unary(e.op(), eval(e.child(0), a));
    }
}

// ---------------------------------------------------------------------------
// Folding

bool can_fail(const Expr& e) {
    if (e.op() == Op::Div) return true;
    if (e.op() == Op::IntPow && e.exponent() < 0) return true;
    for (std::size_t i = 0; i < e.arity(); ++i)
        if (can_fail(e.child(i))) return true;
    return false;
}

namespace {

std::optional<double> try_constant(const Expr& e) {
    try {
        const double v = eval(e, {});
        if (std::isfinite(v)) return v;
    } catch (const EvalError&) {
    }
    return std::nullopt;
}

Expr fold_mul(const Expr& a, const Expr& b) {
    if ((a.is_constant(0.0) && !can_fail(b)) || (b.is_constant(0.0) && !can_fail(a))) return Expr::constant(0.0);
    if (a.is_constant(1.0)) return b;
    if (b.is_constant(1.0)) return a;
    if (b.is_constant() && !a.is_constant()) return fold_mul(b, a);
    if (a.is_constant(-1.0)) return b.op() == Op::Neg ? b.child(0) : -b;
    if (a.op() == Op::Neg && b.op() == Op::Neg) return fold_mul(a.child(0), b.child(0));
    if (a.is_constant() && b.op() == Op::Neg) return fold_mul(Expr::constant(-a.constant_value()), b.child(0));
    if (a.is_constant() && b.op() == Op::Mul && b.child(0).is_constant()) {
        const double c1 = a.constant_value();
        const double c2 = b.child(0).constant_value();
        if (is_power_of_two(c1) || is_power_of_two(c2)) {
            const double c = c1 * c2;
            if (std::isfinite(c) && c != 0.0) return fold_mul(Expr::constant(c), b.child(1));
        }
    }
    return a * b;
}

}  // namespace

Expr fold(const Expr& e) {
    if (e.arity() == 0) return e;
    std::vector<Expr> kids;
    kids.reserve(e.arity());
    bool all_const = true;
    for (std::size_t i = 0; i < e.arity(); ++i) {
        kids.push_back(fold(e.child(i)));
        all_const = all_const && kids.back().is_constant();
    }
    Expr rebuilt = e.op() == Op::IntPow ? make_intpow(kids[0], e.exponent())
                   : kids.size() == 1   ? make_unary(e.op(), kids[0])
                                        : make_binary(e.op(), kids[0], kids[1]);
    if (all_const) {
        if (auto v = try_constant(rebuilt)) return Expr::constant(*v);
        return rebuilt;
    }
    switch (e.op()) {
        case Op::Add: {
            const Expr& a = kids[0];
            const Expr& b = kids[1];
            if (a.is_constant(0.0)) return b;
            if (b.is_constant(0.0)) return a;
            if (b.op() == Op::Neg) return a - b.child(0);
            if (a.op() == Op::Neg) return b - a.child(0);
            return rebuilt;
        }
        case Op::Sub: {
            const Expr& a = kids[0];
            const Expr& b = kids[1];
            if (b.is_constant(0.0)) return a;
            if (a.is_constant(0.0)) return b.op() == Op::Neg ? b.child(0) : -b;
            if (b.op() == Op::Neg) return a + b.child(0);
            return rebuilt;
        }
        case Op::Mul:
            return fold_mul(kids[0], kids[1]);
        case Op::Div: {
            const Expr& a = kids[0];
            const Expr& b = kids[1];
            if (b.is_constant(1.0)) return a;
            if (b.is_constant() && is_power_of_two(b.constant_value()))
                return fold_mul(Expr::constant(1.0 / b.constant_value()), a);
            return rebuilt;
        }
        case Op::Neg:
            if (kids[0].op() == Op::Neg) return kids[0].child(0);
            return rebuilt;
        case Op::IntPow:
            if (e.exponent() == 1) return kids[0];
            if (e.exponent() == 0 && !can_fail(kids[0])) return Expr::constant(1.0);
            return rebuilt;
        default:
            return rebuilt;
    }
}

// ---------------------------------------------------------------------------
// Differentiation

namespace {

Expr diff_raw(const Expr& e, std::string_view var) {
    switch (e.op()) {
        case Op::Constant:
            return Expr::constant(0.0);
        case Op::Variable:
            return Expr::constant(e.variable_name() == var ? 1.0 : 0.0);
        case Op::Add:
        case Op::Sub: {
            Expr da = diff(e.child(0), var);
            Expr db = diff(e.child(1), var);
            return e.op() == Op::Add ? da + db : da - db;
        }
        case Op::Mul: {
            Expr da = diff(e.child(0), var);
            Expr db = diff(e.child(1), var);
            return da * e.child(1) + e.child(0) * db;
        }
        case Op::Div: {
            const Expr& a = e.child(0);
            const Expr& b = e.child(1);
            Expr da = diff(a, var);
            Expr db = diff(b, var);
            return (da * b - a * db) / pow(b, 2);
        }
        case Op::Neg:
            return -diff(e.child(0), var);
        case Op::IntPow: {
            const Expr& u = e.child(0);
            const int k = e.exponent();
            if (k == 0) return Expr::constant(0.0);
            // cbrt(w)^k = w^(k/3); for k >= 3 the derivative is continuous through w = 0.
            if (u.op() == Op::Cbrt && k >= 3) {
                Expr dw = diff(u.child(0), var);
                if (dw.is_constant(0.0)) return Expr::constant(0.0);
                return Expr::constant(static_cast<double>(k) / 3.0) * pow(u, k - 3) * dw;
            }
            Expr du = diff(u, var);
            if (du.is_constant(0.0)) return Expr::constant(0.0);
            return Expr::constant(static_cast<double>(k)) * pow(u, k - 1) * du;
        }
        case Op::Sin:
            return cos(e.child(0)) * diff(e.child(0), var);
        case Op::Cos:
            return -(sin(e.child(0)) * diff(e.child(0), var));
        case Op::Exp:
            return e * diff(e.child(0), var);
        case Op::Cbrt: {
            Expr du = diff(e.child(0), var);
            if (du.is_constant(0.0)) return Expr::constant(0.0);
            return du * (Expr::constant(1.0) / (Expr::constant(3.0) * pow(e, 2)));
        }
    }
    throw std::logic_error("unhandled op in diff");
}

}  // namespace

Expr diff(const Expr& e, std::string_view var) { return fold(diff_raw(e, var)); }

// ---------------------------------------------------------------------------
// Structural utilities

Expr substitute(const Expr& e, const std::map<std::string, Expr, std::less<>>& bindings) {
    if (e.op() == Op::Variable) {
        auto it = bindings.find(e.variable_name());
        return it == bindings.end() ? e : it->second;
    }
    if (e.arity() == 0) return e;
    if (e.op() == Op::IntPow) return make_intpow(substitute(e.child(0), bindings), e.exponent());
    if (e.arity() == 1) return make_unary(e.op(), substitute(e.child(0), bindings));
    return make_binary(e.op(), substitute(e.child(0), bindings), substitute(e.child(1), bindings));
}

namespace {
void collect_vars(const Expr& e, std::set<std::string, std::less<>>& out) {
    if (e.op() == Op::Variable) out.insert(e.variable_name());
    for (std::size_t i = 0; i < e.arity(); ++i) collect_vars(e.child(i), out);
}
}  // namespace

std::set<std::string, std::less<>> free_variables(const Expr& e) {
    std::set<std::string, std::less<>> out;
    collect_vars(e, out);
    return out;
}

std::size_t node_count(const Expr& e) {
    std::size_t n = 1;
    for (std::size_t i = 0; i < e.arity(); ++i) n += node_count(e.child(i));
    return n;
}

bool structurally_equal(const Expr& a, const Expr& b) {
    if (a.same_node(b)) return true;
    if (a.op() != b.op() || a.arity() != b.arity()) return false;
    switch (a.op()) {
        case Op::Constant:
            return a.constant_value() == b.constant_value();
        case Op::Variable:
            return a.variable_name() == b.variable_name();
        case Op::IntPow:
            if (a.exponent() != b.exponent()) return false;
            break;
        default:
            break;
    }
    for (std::size_t i = 0; i < a.arity(); ++i)
        if (!structurally_equal(a.child(i), b.child(i))) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Compiled programs

namespace {

void emit(const Expr& e, const std::unordered_map<std::string, int>& slots, std::vector<Op>& ops,
          std::vector<int>& args, std::vector<double>& values, std::size_t depth, std::size_t& max_depth) {
    max_depth = std::max(max_depth, depth + 1);
    switch (e.op()) {
        case Op::Constant:
            ops.push_back(Op::Constant);
            args.push_back(0);
            values.push_back(e.constant_value());
            return;
        case Op::Variable: {
            auto it = slots.find(e.variable_name());
            if (it == slots.end())
                throw EvalError(EvalError::Kind::UnboundVariable, "unbound variable '" + e.variable_name() + "'");
            ops.push_back(Op::Variable);
            args.push_back(it->second);
            values.push_back(0.0);
            return;
        }
        default:
            break;
    }
    for (std::size_t i = 0; i < e.arity(); ++i) emit(e.child(i), slots, ops, args, values, depth + i, max_depth);
    ops.push_back(e.op());
    args.push_back(e.op() == Op::IntPow ? e.exponent() : 0);
    values.push_back(0.0);
}

}  // namespace

CompiledExpr::CompiledExpr(const Expr& e, std::span<const std::string> slots) {
    std::unordered_map<std::string, int> index;
    for (std::size_t i = 0; i < slots.size(); ++i) index.emplace(slots[i], static_cast<int>(i));
    std::vector<Op> ops;
    std::vector<int> args;
    std::vector<double> values;
    emit(e, index, ops, args, values, 0, max_depth_);
    code_.reserve(ops.size());
    for (std::size_t i = 0; i < ops.size(); ++i) code_.push_back({ops[i], args[i], values[i]});
}

double CompiledExpr::operator()(std::span<const double> x) const {
    constexpr std::size_t kInline = 64;
    std::array<double, kInline> inline_stack;
    std::vector<double> heap_stack;
    double* stack = inline_stack.data();
    if (max_depth_ > kInline) {
        heap_stack.resize(max_depth_);
        stack = heap_stack.data();
    }
    std::size_t top = 0;
    for (const Instr& in : code_) {
        switch (in.op) {
            case Op::Constant:
                stack[top++] = in.value;
                break;
            case Op::Variable:
                stack[top++] = x[static_cast<std::size_t>(in.arg)];
                break;
            case Op::Add:
            case Op::Sub:
            case Op::Mul:
            case Op::Div: {
                const double b = stack[--top];
                stack[top - 1] = apply_binary(in.op, stack[top - 1], b);
                break;
            }
            case Op::IntPow:
                stack[top - 1] = int_power(stack[top - 1], in.arg);
                break;
            default:
                stack[top - 1] = apply_unary(in.op, stack[top - 1]);
                break;
        }
    }
    return top == 0 ? 0.0 : stack[0];
}

// ---------------------------------------------------------------------------
// Probabilistic zero test

Box Box::symmetric(std::size_t dim, double half_width) {
    return Box{std::vector<double>(dim, -half_width), std::vector<double>(dim, half_width)};
}

Box Box::ball_around(std::span<const double> center, double radius) {
    Box b;
    for (double c : center) {
        b.lo.push_back(c - radius);
        b.hi.push_back(c + radius);
    }
    return b;
}

std::vector<double> Box::center() const {
    std::vector<double> c(dim());
    for (std::size_t i = 0; i < dim(); ++i) c[i] = 0.5 * (lo[i] + hi[i]);
    return c;
}

ZeroTestResult probably_zero(const Expr& e, std::span<const std::string> vars, const Box& box,
                             const ZeroTestOptions& opts) {
    if (opts.samples == 0 || !(opts.tol > 0.0)) throw std::invalid_argument("zero test needs n >= 1 and tol > 0");
    if (box.dim() != vars.size()) throw std::invalid_argument("box dimension does not match variable list");
    ZeroTestResult result;
    const Expr folded = fold(e);
    if (folded.is_constant()) {
        result.decided_structurally = true;
        result.zero = folded.constant_value() == 0.0;
        if (!result.zero) result.witness = box.center();
        return result;
    }
    const CompiledExpr program(folded, vars);
    const PointSet points = sample_box(box, opts.samples, opts.seed);
    const auto scan = kernels::scan_nonzero(program, points, opts.tol);
    for (std::size_t i : scan.failed) {
        auto p = points[i];
        result.skipped.emplace_back(p.begin(), p.end());
    }
    if (scan.first_nonzero != kernels::npos) {
        auto p = points[scan.first_nonzero];
        result.witness = std::vector<double>(p.begin(), p.end());
        result.zero = false;
    } else {
        result.zero = true;
    }
    return result;
}

bool is_probably_zero(const Expr& e, std::span<const std::string> vars, const Box& box, std::size_t n,
                      double tol, std::uint64_t seed) {
    return probably_zero(e, vars, box, ZeroTestOptions{n, tol, seed}).zero;
}

}  // namespace nisynth
