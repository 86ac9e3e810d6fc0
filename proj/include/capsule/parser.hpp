#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "capsule/ast.hpp"
#include "capsule/values.hpp"

namespace capsule {

struct ParseError : std::runtime_error {
    int line;
    int col;
    ParseError(int l, int c, const std::string& msg)
        : std::runtime_error(std::to_string(l) + ":" + std::to_string(c) + ": " + msg),
          line(l),
          col(c) {}
};

namespace detail {

struct Token {
    enum Kind { ident, number, punct, eof } kind = eof;
    std::string text;
    std::uint32_t id = 0;  // ident suffix `#id`, zero when absent
    int line = 1, col = 1;
};

inline std::vector<Token> lex(const std::string& src) {
    std::vector<Token> out;
    int line = 1, col = 1;
    std::size_t i = 0;
    auto advance = [&](char c) {
        if (c == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    };
    while (i < src.size()) {
        char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(c);
            ++i;
            continue;
        }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
            while (i < src.size() && src[i] != '\n') ++i;
            continue;
        }
        Token t;
        t.line = line;
        t.col = col;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::string text;
            while (i < src.size() &&
                   (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_')) {
                text += src[i];
                advance(src[i]);
                ++i;
            }
            std::uint32_t id = 0;
            if (i < src.size() && src[i] == '#' && i + 1 < src.size() &&
                std::isdigit(static_cast<unsigned char>(src[i + 1]))) {
                advance(src[i]);
                ++i;
                std::string digits;
                while (i < src.size() && std::isdigit(static_cast<unsigned char>(src[i]))) {
                    digits += src[i];
                    advance(src[i]);
                    ++i;
                }
                id = static_cast<std::uint32_t>(std::stoul(digits));
            }
            t.kind = Token::ident;
            t.text = std::move(text);
            t.id = id;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::string digits;
            while (i < src.size() && std::isdigit(static_cast<unsigned char>(src[i]))) {
                digits += src[i];
                advance(src[i]);
                ++i;
            }
            t.kind = Token::number;
            t.text = std::move(digits);
        } else if (std::string("{}()[];,.=^").find(c) != std::string::npos) {
            t.kind = Token::punct;
            t.text = std::string(1, c);
            advance(c);
            ++i;
        } else {
            throw ParseError(line, col, std::string("unexpected character '") + c + "'");
        }
        out.push_back(std::move(t));
    }
    Token end;
    end.kind = Token::eof;
    end.line = line;
    end.col = col;
    out.push_back(end);
    return out;
}

struct Parser {
    std::vector<Token> toks;
    std::size_t pos = 0;
    ClassTable ct;       // filled by classdecls; consulted for sequencing sugar
    std::size_t seq = 0; // counter for sugar variables

    const Token& peek(std::size_t k = 0) const {
        return toks[std::min(pos + k, toks.size() - 1)];
    }
    const Token& cur() const { return peek(0); }
    Token take() { return toks[pos == toks.size() - 1 ? pos : pos++]; }

    [[noreturn]] void err(const std::string& msg) const {
        throw ParseError(cur().line, cur().col, msg);
    }

    bool at_punct(const std::string& p, std::size_t k = 0) const {
        return peek(k).kind == Token::punct && peek(k).text == p;
    }
    bool at_ident(const std::string& s, std::size_t k = 0) const {
        return peek(k).kind == Token::ident && peek(k).text == s && peek(k).id == 0;
    }

    void expect_punct(const std::string& p) {
        if (!at_punct(p)) err("expected '" + p + "'");
        ++pos;
    }

    Ident expect_ident(const char* what) {
        if (cur().kind != Token::ident) err(std::string("expected ") + what);
        Token t = take();
        return Ident{t.text, t.id};
    }

    static bool is_type_token(const Token& t) {
        if (t.kind != Token::ident || t.id != 0) return false;
        if (t.text == int_type_name) return true;
        return !t.text.empty() && std::isupper(static_cast<unsigned char>(t.text[0]));
    }

    // classdecl* expr
    std::pair<ClassTable, ExprPtr> program() {
        while (at_ident("class")) classdecl();
        ExprPtr e = expr_toplevel();
        if (cur().kind != Token::eof) err("trailing input after program expression");
        return {ct, e};
    }

    void classdecl() {
        take();  // class
        if (cur().kind != Token::ident ||
            !std::isupper(static_cast<unsigned char>(cur().text[0])))
            err("class names start with an uppercase letter");
        std::string name = take().text;
        if (ct.classes.contains(name)) err("class " + name + " declared twice");
        expect_punct("{");
        ClassInfo info;
        // field declarations: type FNAME ;
        while (is_type_token(cur()) && peek(1).kind == Token::ident && at_punct(";", 2)) {
            std::string fc = take().text;
            std::string fn = take().text;
            expect_punct(";");
            info.fields.emplace_back(fc, fn);
        }
        // methods: type MNAME ( params ) { expr }
        while (!at_punct("}")) {
            if (!is_type_token(cur())) err("expected field, method or '}'");
            std::string ret = take().text;
            Ident mname = expect_ident("method name");
            expect_punct("(");
            MethodSig sig;
            sig.ret_cls = ret;
            if (!at_punct(")")) {
                while (true) {
                    Qualifier q = Qualifier::plain;
                    if (at_ident("a") && is_type_token(peek(1))) {
                        take();
                        q = Qualifier::affine;
                    }
                    if (!is_type_token(cur())) err("expected parameter type");
                    std::string pc = take().text;
                    Ident px = expect_ident("parameter name");
                    sig.params.emplace_back(DeclType{q, pc}, px);
                    if (at_punct(",")) {
                        ++pos;
                        continue;
                    }
                    break;
                }
            }
            expect_punct(")");
            expect_punct("{");
            std::map<Ident, std::string> env;
            env[Ident{"this", 0}] = name;
            for (const auto& [pt, px] : sig.params) env[px] = pt.cls;
            sig.body = expr(env);
            expect_punct("}");
            info.methods.emplace(mname.name, std::move(sig));
        }
        expect_punct("}");
        ct.classes.emplace(name, std::move(info));
    }

    ExprPtr expr_toplevel() {
        std::map<Ident, std::string> env;
        return expr(env);
    }

    // Best-effort static type, used for the sequencing sugar.
    std::optional<std::string> synth(const ExprPtr& e, const std::map<Ident, std::string>& env) {
        if (const auto* v = as<VarE>(e)) {
            auto it = env.find(v->ident);
            if (it == env.end()) return std::nullopt;
            return it->second;
        }
        if (is<IntE>(e)) return std::string(int_type_name);
        if (const auto* n = as<NewE>(e)) return n->cls;
        if (const auto* f = as<FieldAccessE>(e)) {
            auto rc = synth(f->recv, env);
            if (!rc) return std::nullopt;
            const auto* ci = ct.find_class(*rc);
            if (!ci) return std::nullopt;
            for (const auto& [fc, fn] : ci->fields)
                if (fn == f->field) return fc;
            return std::nullopt;
        }
        if (const auto* s = as<FieldAssignE>(e)) return synth(s->rhs, env);
        if (const auto* iv = as<InvokeE>(e)) {
            auto rc = synth(iv->recv, env);
            if (!rc) return std::nullopt;
            const auto* m = ct.find_method(*rc, iv->method);
            return m ? std::optional<std::string>(m->ret_cls) : std::nullopt;
        }
        if (const auto* b = as<BlockE>(e)) {
            auto env2 = env;
            for (const auto& d : b->decls) env2[d.var] = d.type.cls;
            return synth(b->body, env2);
        }
        return std::nullopt;
    }

    ExprPtr expr(std::map<Ident, std::string>& env) {
        ExprPtr e = prim(env);
        while (at_punct(".")) {
            ++pos;
            Ident member = expect_ident("member name");
            if (member.id != 0) err("member names carry no id suffix");
            if (at_punct("(")) {
                ++pos;
                std::vector<ExprPtr> args;
                if (!at_punct(")")) {
                    while (true) {
                        args.push_back(expr(env));
                        if (at_punct(",")) {
                            ++pos;
                            continue;
                        }
                        break;
                    }
                }
                expect_punct(")");
                e = mk_invoke(std::move(e), member.name, std::move(args));
            } else {
                e = mk_access(std::move(e), member.name);
            }
        }
        if (at_punct("=")) {
            const auto* fa = as<FieldAccessE>(e);
            if (!fa) err("assignment is only legal after a field suffix");
            ++pos;
            ExprPtr rhs = expr(env);
            e = mk_assign(fa->recv, fa->field, std::move(rhs));
        }
        return e;
    }

    ExprPtr prim(std::map<Ident, std::string>& env) {
        if (cur().kind == Token::number) {
            Token t = take();
            return mk_int(std::stoll(t.text));
        }
        if (at_ident("new")) {
            take();
            if (cur().kind != Token::ident) err("expected class name after new");
            std::string cls = take().text;
            expect_punct("(");
            std::vector<ExprPtr> args;
            if (!at_punct(")")) {
                while (true) {
                    args.push_back(expr(env));
                    if (at_punct(",")) {
                        ++pos;
                        continue;
                    }
                    break;
                }
            }
            expect_punct(")");
            return mk_new(std::move(cls), std::move(args));
        }
        if (at_punct("{")) return block(env);
        if (at_punct("(")) {
            ++pos;
            ExprPtr e = expr(env);
            expect_punct(")");
            return e;
        }
        if (cur().kind == Token::ident) {
            Token t = take();
            return mk_var(Ident{t.text, t.id});
        }
        err("expected an expression");
    }

    // Does the upcoming input start a declaration?  [a] Type ident "="
    bool at_decl() const {
        std::size_t k = 0;
        if (at_ident("a") && is_type_token(peek(1))) k = 1;
        return is_type_token(peek(k)) && peek(k + 1).kind == Token::ident &&
               at_punct("=", k + 2);
    }

    ExprPtr block(std::map<Ident, std::string>& env) {
        expect_punct("{");
        auto env2 = env;
        std::vector<Decl> decls;
        std::vector<ExprPtr> items;  // sequenced expressions, pending desugar
        auto flush_item = [&](ExprPtr it) {
            auto ty = synth(it, env2);
            if (!ty)
                err("cannot infer a declaration type for the sequenced expression; "
                    "bind it explicitly");
            Ident x{"_s" + std::to_string(++seq), 0};
            decls.push_back(Decl{DeclType{Qualifier::plain, *ty}, x, std::move(it)});
        };
        ExprPtr body;
        while (true) {
            if (at_decl()) {
                Qualifier q = Qualifier::plain;
                if (at_ident("a")) {
                    take();
                    q = Qualifier::affine;
                }
                std::string cls = take().text;
                Ident x = expect_ident("variable name");
                expect_punct("=");
                ExprPtr init = expr(env2);
                expect_punct(";");
                decls.push_back(Decl{DeclType{q, cls}, x, std::move(init)});
                env2[x] = cls;
                continue;
            }
            ExprPtr e = expr(env2);
            if (at_punct(";")) {
                ++pos;
                flush_item(std::move(e));  // e; e'  ==>  { T _s = e; e' }
                continue;
            }
            body = std::move(e);
            break;
        }
        expect_punct("}");
        std::set<Ident> annot;
        bool has_annot = false;
        if (at_punct("^")) {
            ++pos;
            expect_punct("[");
            has_annot = true;
            if (!at_punct("]")) {
                while (true) {
                    annot.insert(expect_ident("annotation variable"));
                    if (at_punct(",")) {
                        ++pos;
                        continue;
                    }
                    break;
                }
            }
            expect_punct("]");
        }
        ExprPtr b = mk_block(std::move(decls), std::move(body), std::move(annot));
        if (!has_annot) {
            // Missing annotations are filled by the caller's policy; mark
            // nothing here (annotate() overwrites uniformly anyway).
        }
        return b;
    }
};

}  // namespace detail

struct SourceProgram {
    ClassTable ct;
    ExprPtr main;
};

// Parses `classdecl* expr`. Annotations absent in source are expected
// to be filled afterwards via annotate().
inline SourceProgram parse_program(const std::string& text) {
    detail::Parser p{detail::lex(text)};
    auto [ct, main] = p.program();
    return SourceProgram{std::move(ct), std::move(main)};
}

// Parses a bare expression against an existing class table (tests and
// the sequencing sugar need the table for type synthesis).
inline ExprPtr parse_expr(const std::string& text, const ClassTable& ct) {
    detail::Parser p{detail::lex(text)};
    p.ct = ct;
    ExprPtr e = p.expr_toplevel();
    if (p.cur().kind != detail::Token::eof)
        throw ParseError(p.cur().line, p.cur().col, "trailing input after expression");
    return e;
}

}  // namespace capsule
