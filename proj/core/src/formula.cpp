#include "nestmi/formula.hpp"

#include <algorithm>
#include <cctype>

#include "nestmi/error.hpp"

namespace nestmi {

namespace {

enum class TokKind { Name, One, Tilde, Plus, LParen, RParen, Bar, End };

struct Token {
    TokKind kind;
    std::string text;
    size_t offset;
};

class Lexer {
public:
    explicit Lexer(const std::string& s) : s_(s) {}

    Token next() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        const size_t off = pos_;
        if (pos_ >= s_.size()) return {TokKind::End, "", off};
        const char c = s_[pos_];
        switch (c) {
            case '~': ++pos_; return {TokKind::Tilde, "~", off};
            case '+': ++pos_; return {TokKind::Plus, "+", off};
            case '(': ++pos_; return {TokKind::LParen, "(", off};
            case ')': ++pos_; return {TokKind::RParen, ")", off};
            case '|': ++pos_; return {TokKind::Bar, "|", off};
            default: break;
        }
        if (c == '1') {
            // Bare "1" is the intercept; "1x" or "12" is not a valid token.
            const size_t after = pos_ + 1;
            if (after < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[after])) ||
                                      s_[after] == '.' || s_[after] == '_')) {
                throw ParseError("unexpected character after '1'", after);
            }
            ++pos_;
            return {TokKind::One, "1", off};
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            size_t end = pos_ + 1;
            while (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) ||
                                       s_[end] == '.' || s_[end] == '_')) {
                ++end;
            }
            Token t{TokKind::Name, s_.substr(pos_, end - pos_), off};
            pos_ = end;
            return t;
        }
        throw ParseError(std::string("unexpected character '") + c + "' in formula", off);
    }

private:
    const std::string& s_;
    size_t pos_ = 0;
};

class Parser {
public:
    explicit Parser(const std::string& s) : lex_(s) { advance(); }

    ModelFormula parse() {
        Building b;
        parse_lhs(b);
        expect(TokKind::Tilde, "expected '~'");
        parse_rhs(b);
        if (cur_.kind != TokKind::End) throw ParseError("unexpected trailing input", cur_.offset);
        if (!b.have_random) {
            throw ParseError("formula requires a random block '(1 ... | group)'", cur_.offset);
        }
        if (b.f.n_fixed() < 1) throw ParseError("formula has no fixed terms", b.random_off);
        for (const auto& v : b.f.random.vars) {
            if (std::find(b.f.fixed_vars.begin(), b.f.fixed_vars.end(), v) ==
                b.f.fixed_vars.end()) {
                throw ParseError("random-term variable not among fixed terms: " + v, b.random_off);
            }
        }
        return b.f;
    }

private:
    struct Building {
        ModelFormula f;
        bool have_random = false;
        size_t random_off = 0;
    };

    void parse_lhs(Building& b) {
        while (true) {
            if (cur_.kind != TokKind::Name) {
                throw ParseError("expected response variable name", cur_.offset);
            }
            if (std::find(b.f.responses.begin(), b.f.responses.end(), cur_.text) !=
                b.f.responses.end()) {
                throw ParseError("duplicate response: " + cur_.text, cur_.offset);
            }
            b.f.responses.push_back(cur_.text);
            advance();
            if (cur_.kind != TokKind::Plus) break;
            advance();
        }
    }

    void parse_rhs(Building& b) {
        while (true) {
            parse_term(b);
            if (cur_.kind != TokKind::Plus) break;
            advance();
        }
    }

    void parse_term(Building& b) {
        if (cur_.kind == TokKind::One) {
            if (b.f.fixed_intercept) throw ParseError("duplicate intercept term", cur_.offset);
            b.f.fixed_intercept = true;
            advance();
            return;
        }
        if (cur_.kind == TokKind::Name) {
            if (std::find(b.f.fixed_vars.begin(), b.f.fixed_vars.end(), cur_.text) !=
                b.f.fixed_vars.end()) {
                throw ParseError("duplicate fixed term: " + cur_.text, cur_.offset);
            }
            b.f.fixed_vars.push_back(cur_.text);
            advance();
            return;
        }
        if (cur_.kind == TokKind::LParen) {
            if (b.have_random) throw ParseError("more than one random block", cur_.offset);
            b.have_random = true;
            b.random_off = cur_.offset;
            advance();
            expect(TokKind::One, "random block must start with '1'");
            while (cur_.kind == TokKind::Plus) {
                advance();
                if (cur_.kind != TokKind::Name) {
                    throw ParseError("expected variable name in random block", cur_.offset);
                }
                if (std::find(b.f.random.vars.begin(), b.f.random.vars.end(), cur_.text) !=
                    b.f.random.vars.end()) {
                    throw ParseError("duplicate random term: " + cur_.text, cur_.offset);
                }
                b.f.random.vars.push_back(cur_.text);
                advance();
            }
            expect(TokKind::Bar, "expected '|' in random block");
            if (cur_.kind != TokKind::Name) {
                throw ParseError("expected grouping variable after '|'", cur_.offset);
            }
            b.f.random.group = cur_.text;
            advance();
            expect(TokKind::RParen, "expected ')'");
            return;
        }
        throw ParseError("expected a model term", cur_.offset);
    }

    void expect(TokKind k, const char* msg) {
        if (cur_.kind != k) throw ParseError(msg, cur_.offset);
        advance();
    }

    void advance() { cur_ = lex_.next(); }

    Lexer lex_;
    Token cur_{TokKind::End, "", 0};
};

}  // namespace

ModelFormula parse_formula(const std::string& text) {
    if (text.empty()) throw ParseError("empty formula", 0);
    Parser p(text);
    return p.parse();
}

std::string ModelFormula::canonical() const {
    std::string out;
    for (size_t i = 0; i < responses.size(); ++i) {
        if (i) out += " + ";
        out += responses[i];
    }
    out += " ~ ";
    bool first = true;
    if (fixed_intercept) {
        out += "1";
        first = false;
    }
    for (const auto& v : fixed_vars) {
        if (!first) out += " + ";
        out += v;
        first = false;
    }
    if (!first) out += " + ";
    out += "(1";
    for (const auto& v : random.vars) {
        out += " + ";
        out += v;
    }
    out += " | ";
    out += random.group;
    out += ")";
    return out;
}

DesignMatrices build_design(const ModelFormula& f, const Dataset& d) {
    if (f.random.group != d.group_name()) {
        throw ValidationError("formula grouping variable '" + f.random.group +
                              "' does not match dataset group column '" + d.group_name() + "'");
    }
    auto require_complete = [&](const std::string& name) {
        const int v = d.var_index(name);
        for (int i = 0; i < d.n_rows(); ++i) {
            if (d.is_missing(i, v)) {
                throw ValidationError("predictor column has missing values: " + name);
            }
        }
        return v;
    };

    DesignMatrices m;
    const int n = d.n_rows();
    const int r = f.n_responses();
    const int p = f.n_fixed();
    const int q = f.n_random();

    m.Y.resize(n, r);
    m.y_missing.resize(n, r);
    m.y_names = f.responses;
    for (int k = 0; k < r; ++k) {
        const int v = d.var_index(f.responses[static_cast<size_t>(k)]);
        m.Y.col(k) = d.column(v);
        for (int i = 0; i < n; ++i) m.y_missing(i, k) = d.is_missing(i, v);
    }

    m.X.resize(n, p);
    int xc = 0;
    if (f.fixed_intercept) {
        m.X.col(xc++).setOnes();
        m.x_names.push_back("(Intercept)");
    }
    for (const auto& v : f.fixed_vars) {
        m.X.col(xc++) = d.column(require_complete(v));
        m.x_names.push_back(v);
    }

    m.Z.resize(n, q);
    m.Z.col(0).setOnes();
    m.z_names.push_back("(Intercept)");
    int zc = 1;
    for (const auto& v : f.random.vars) {
        m.Z.col(zc++) = d.column(require_complete(v));
        m.z_names.push_back(v);
    }

    m.groups = group_index(d);
    return m;
}

}  // namespace nestmi
