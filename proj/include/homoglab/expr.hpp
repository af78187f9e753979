#pragma once

// Tiny arithmetic expressions for initial data and forcing.
//
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := ('+'|'-') unary | power
//   power  := atom ('^' unary)?
//   atom   := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//
// Variables x, y, t; constants pi, e; functions sin cos tan exp log sqrt abs
// tanh, min(a,b), max(a,b), pow(a,b).

#include "errors.hpp"
#include "tensor.hpp"

#include <cctype>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

namespace homoglab {

class Expression {
public:
    struct Vars {
        double x = 0.0;
        double y = 0.0;
        double t = 0.0;
    };

    Expression() = default;

    static Expression parse(const std::string& text)
    {
        Parser p{text, 0};
        Expression e;
        e.text_ = text;
        e.root_ = p.expr();
        p.skip();
        if (p.pos != text.size())
            p.fail("unexpected '" + std::string(1, text[p.pos]) + "'");
        e.constant_ = !p.uses_variables;
        return e;
    }

    double operator()(const Vars& v) const { return root_ ? root_->eval(v) : 0.0; }
    double operator()(const Point& x, double t = 0.0) const { return (*this)({x[0], x[1], t}); }
    const std::string& text() const { return text_; }
    bool is_constant() const { return constant_; }

private:
    struct Node {
        enum Kind { number, var_x, var_y, var_t, neg, add, sub, mul, div, pow, call } kind = number;
        double value = 0.0;
        std::string fn;
        std::vector<std::unique_ptr<Node>> args;

        double eval(const Vars& v) const
        {
            switch (kind) {
            case number: return value;
            case var_x: return v.x;
            case var_y: return v.y;
            case var_t: return v.t;
            case neg: return -args[0]->eval(v);
            case add: return args[0]->eval(v) + args[1]->eval(v);
            case sub: return args[0]->eval(v) - args[1]->eval(v);
            case mul: return args[0]->eval(v) * args[1]->eval(v);
            case div: return args[0]->eval(v) / args[1]->eval(v);
            case pow: return std::pow(args[0]->eval(v), args[1]->eval(v));
            case call: return apply(v);
            }
            return 0.0;
        }

        double apply(const Vars& v) const
        {
            const double a = args[0]->eval(v);
            if (fn == "sin") return std::sin(a);
            if (fn == "cos") return std::cos(a);
            if (fn == "tan") return std::tan(a);
            if (fn == "exp") return std::exp(a);
            if (fn == "log") return std::log(a);
            if (fn == "sqrt") return std::sqrt(a);
            if (fn == "abs") return std::abs(a);
            if (fn == "tanh") return std::tanh(a);
            const double b = args[1]->eval(v);
            if (fn == "min") return std::min(a, b);
            if (fn == "max") return std::max(a, b);
            return std::pow(a, b);
        }
    };
    using NodePtr = std::unique_ptr<Node>;

    struct Parser {
        const std::string& s;
        std::size_t pos;
        bool uses_variables = false;

        [[noreturn]] void fail(const std::string& what) const
        {
            throw ConfigError("expression '" + s + "', column " + std::to_string(pos + 1) + ": " + what);
        }
        void skip()
        {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
                ++pos;
        }
        bool eat(char c)
        {
            skip();
            if (pos < s.size() && s[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }
        static NodePtr make(Node::Kind k, NodePtr a = nullptr, NodePtr b = nullptr)
        {
            auto n = std::make_unique<Node>();
            n->kind = k;
            if (a)
                n->args.push_back(std::move(a));
            if (b)
                n->args.push_back(std::move(b));
            return n;
        }
        NodePtr expr()
        {
            NodePtr lhs = term();
            for (;;) {
                if (eat('+'))
                    lhs = make(Node::add, std::move(lhs), term());
                else if (eat('-'))
                    lhs = make(Node::sub, std::move(lhs), term());
                else
                    return lhs;
            }
        }
        NodePtr term()
        {
            NodePtr lhs = unary();
            for (;;) {
                if (eat('*'))
                    lhs = make(Node::mul, std::move(lhs), unary());
                else if (eat('/'))
                    lhs = make(Node::div, std::move(lhs), unary());
                else
                    return lhs;
            }
        }
        NodePtr unary()
        {
            if (eat('-'))
                return make(Node::neg, unary());
            if (eat('+'))
                return unary();
            return power();
        }
        NodePtr power()
        {
            NodePtr base = atom();
            if (eat('^'))
                return make(Node::pow, std::move(base), unary());
            return base;
        }
        NodePtr atom()
        {
            skip();
            if (pos >= s.size())
                fail("unexpected end of input");
            const char c = s[pos];
            if (c == '(') {
                ++pos;
                NodePtr e = expr();
                if (!eat(')'))
                    fail("missing ')'");
                return e;
            }
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                std::size_t used = 0;
                double v = 0.0;
                try {
                    v = std::stod(s.substr(pos), &used);
                } catch (const std::exception&) {
                    fail("malformed number");
                }
                pos += used;
                auto n = make(Node::number);
                n->value = v;
                return n;
            }
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                const std::size_t start = pos;
                while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
                    ++pos;
                const std::string name = s.substr(start, pos - start);
                skip();
                if (pos < s.size() && s[pos] == '(')
                    return call(name, start);
                if (name == "x" || name == "y" || name == "t")
                    uses_variables = true;
                if (name == "x")
                    return make(Node::var_x);
                if (name == "y")
                    return make(Node::var_y);
                if (name == "t")
                    return make(Node::var_t);
                auto n = make(Node::number);
                if (name == "pi")
                    n->value = std::numbers::pi;
                else if (name == "e")
                    n->value = std::numbers::e;
                else {
                    pos = start;
                    fail("unknown name '" + name + "'");
                }
                return n;
            }
            fail("unexpected '" + std::string(1, c) + "'");
        }
        NodePtr call(const std::string& name, std::size_t start)
        {
            static const std::vector<std::string> unary_fns{"sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh"};
            static const std::vector<std::string> binary_fns{"min", "max", "pow"};
            std::size_t arity = 0;
            for (const auto& f : unary_fns)
                if (f == name)
                    arity = 1;
            for (const auto& f : binary_fns)
                if (f == name)
                    arity = 2;
            if (arity == 0) {
                pos = start;
                fail("unknown function '" + name + "'");
            }
            eat('(');
            auto n = make(Node::call);
            n->fn = name;
            n->args.push_back(expr());
            while (eat(','))
                n->args.push_back(expr());
            if (!eat(')'))
                fail("missing ')' after arguments of " + name);
            if (n->args.size() != arity)
                fail(name + " takes " + std::to_string(arity) + " argument(s)");
            return n;
        }
    };

    std::string text_;
    std::shared_ptr<const Node> root_;
    bool constant_ = true;
};

/// Evaluates a constant expression such as "1/8" or "2^-4".
inline double evaluate_constant(const std::string& text)
{
    const auto e = Expression::parse(text);
    if (!e.is_constant())
        throw ConfigError("expression '" + text + "' must not depend on x, y or t");
    return e(Expression::Vars{});
}

} // namespace homoglab
