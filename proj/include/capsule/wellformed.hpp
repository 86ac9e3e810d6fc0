#pragma once

#include <optional>
#include <string>
#include <vector>

#include "capsule/ast.hpp"
#include "capsule/binding.hpp"
#include "capsule/values.hpp"

namespace capsule {

struct Diagnostic {
    std::string message;
};

namespace detail {

// Counts free occurrences of x in e.
inline std::size_t count_free(const ExprPtr& e, const Ident& x) {
    if (const auto* v = as<VarE>(e)) return v->ident == x ? 1 : 0;
    if (is<OidE>(e) || is<IntE>(e)) return 0;
    if (const auto* f = as<FieldAccessE>(e)) return count_free(f->recv, x);
    if (const auto* s = as<FieldAssignE>(e)) return count_free(s->recv, x) + count_free(s->rhs, x);
    if (const auto* n = as<NewE>(e)) {
        std::size_t c = 0;
        for (const auto& a : n->args) c += count_free(a, x);
        return c;
    }
    if (const auto* i = as<InvokeE>(e)) {
        std::size_t c = count_free(i->recv, x);
        for (const auto& a : i->args) c += count_free(a, x);
        return c;
    }
    const auto* b = as<BlockE>(e);
    for (const auto& d : b->decls)
        if (d.var == x) return 0;  // shadowed
    std::size_t c = 0;
    for (const auto& d : b->decls) c += count_free(d.init, x);
    return c + count_free(b->body, x);
}

struct WfChecker {
    const ClassTable& ct;
    bool strict_affine;
    std::vector<Diagnostic>& out;

    void fail(std::string msg) { out.push_back(Diagnostic{std::move(msg)}); }

    static std::string show(const Ident& x) {
        return x.id == 0 ? x.name : x.name + "#" + std::to_string(x.id);
    }

    void check_type(const DeclType& t) {
        if (t.cls != int_type_name && !ct.find_class(t.cls))
            fail("unknown class " + t.cls + " in declaration type");
    }

    // Best-effort static class of an expression; nullopt when the
    // receiver cannot be resolved (no type system is in scope here).
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
        if (const auto* i = as<InvokeE>(e)) {
            auto rc = synth(i->recv, env);
            if (!rc) return std::nullopt;
            const auto* m = ct.find_method(*rc, i->method);
            if (!m) return std::nullopt;
            return m->ret_cls;
        }
        if (const auto* b = as<BlockE>(e)) {
            auto env2 = env;
            for (const auto& d : b->decls) env2[d.var] = d.type.cls;
            return synth(b->body, env2);
        }
        return std::nullopt;
    }

    void check(const ExprPtr& e, std::map<Ident, std::string> env) {
        if (is<VarE>(e) || is<IntE>(e) || is<OidE>(e)) return;
        if (const auto* f = as<FieldAccessE>(e)) {
            check(f->recv, env);
            if (auto rc = synth(f->recv, env); rc && ct.find_class(*rc)) {
                if (!ct.field_index(*rc, f->field))
                    fail("class " + *rc + " has no field " + f->field);
            }
            return;
        }
        if (const auto* s = as<FieldAssignE>(e)) {
            check(s->recv, env);
            check(s->rhs, env);
            if (auto rc = synth(s->recv, env); rc && ct.find_class(*rc)) {
                if (!ct.field_index(*rc, s->field))
                    fail("class " + *rc + " has no field " + s->field);
            }
            return;
        }
        if (const auto* n = as<NewE>(e)) {
            const auto* ci = ct.find_class(n->cls);
            if (!ci)
                fail("constructor call on unknown class " + n->cls);
            else if (ci->fields.size() != n->args.size())
                fail("constructor arity mismatch for " + n->cls + ": expected " +
                     std::to_string(ci->fields.size()) + ", got " +
                     std::to_string(n->args.size()));
            for (const auto& a : n->args) check(a, env);
            return;
        }
        if (const auto* i = as<InvokeE>(e)) {
            check(i->recv, env);
            for (const auto& a : i->args) check(a, env);
            if (auto rc = synth(i->recv, env); rc) {
                const auto* m = ct.find_method(*rc, i->method);
                if (!m)
                    fail("class " + *rc + " has no method " + i->method);
                else if (m->params.size() != i->args.size())
                    fail("method arity mismatch for " + *rc + "." + i->method);
            }
            return;
        }
        const auto* b = as<BlockE>(e);
        std::set<std::string> names;
        for (const auto& d : b->decls)
            if (!names.insert(d.var.name).second) fail("duplicate declaration " + d.var.name);
        std::set<Ident> declared = decl_domain(b->decls);
        for (const auto& a : b->annot)
            if (!declared.contains(a))
                fail("annotation mentions " + show(a) + ", which is not declared in the block");
        auto env2 = env;
        for (const auto& d : b->decls) {
            check_type(d.type);
            env2[d.var] = d.type.cls;
        }
        if (strict_affine) {
            // An affine variable may occur at most once in its scope;
            // its own initializer is not part of that scope (affine
            // declarations have substitution semantics).
            for (const auto& d : b->decls) {
                if (d.type.qual != Qualifier::affine) continue;
                std::size_t c = count_free(b->body, d.var);
                for (const auto& d2 : b->decls)
                    if (&d2 != &d) c += count_free(d2.init, d.var);
                if (c > 1)
                    fail("affine " + show(d.var) + " occurs " + std::to_string(c) +
                         " times in its scope");
            }
        }
        for (const auto& d : b->decls) check(d.init, env2);
        check(b->body, env2);
    }
};

}  // namespace detail

// Checks block well-formedness, annotation scoping, class-table
// resolution where statically visible, and (optionally) the affine
// single-use constraint. Returns all violations.
inline std::vector<Diagnostic> well_formed(const ExprPtr& e, const ClassTable& ct,
                                           bool strict_affine = true) {
    std::vector<Diagnostic> out;
    detail::WfChecker w{ct, strict_affine, out};
    w.check(e, {});
    return out;
}

// Class-table hygiene: distinct field names, pure method bodies,
// distinct parameter names, affine parameters linear in the body.
inline std::vector<Diagnostic> well_formed(const ClassTable& ct, bool strict_affine = true) {
    std::vector<Diagnostic> out;
    detail::WfChecker w{ct, strict_affine, out};
    for (const auto& [cname, ci] : ct.classes) {
        std::set<std::string> fnames;
        for (const auto& [fc, fn] : ci.fields) {
            if (!fnames.insert(fn).second)
                out.push_back(Diagnostic{"class " + cname + " repeats field " + fn});
            if (fc != int_type_name && !ct.find_class(fc))
                out.push_back(Diagnostic{"class " + cname + " field " + fn + " has unknown class " + fc});
        }
        for (const auto& [mname, sig] : ci.methods) {
            std::set<std::string> pnames{"this"};
            for (const auto& [pt, px] : sig.params) {
                if (!pnames.insert(px.name).second)
                    out.push_back(Diagnostic{"method " + cname + "." + mname +
                                             " repeats parameter " + px.name});
                w.check_type(pt);
            }
            if (!is_pure(sig.body))
                out.push_back(Diagnostic{"method " + cname + "." + mname +
                                         " body contains object identifiers"});
            std::map<Ident, std::string> env;
            env[Ident{"this", 0}] = cname;
            for (const auto& [pt, px] : sig.params) env[px] = pt.cls;
            w.check(sig.body, env);
            if (strict_affine) {
                for (const auto& [pt, px] : sig.params) {
                    if (pt.qual != Qualifier::affine) continue;
                    std::size_t c = detail::count_free(sig.body, px);
                    if (c > 1)
                        out.push_back(Diagnostic{"affine parameter " + px.name + " of " + cname +
                                                 "." + mname + " occurs " + std::to_string(c) +
                                                 " times in the body"});
                }
            }
        }
    }
    return out;
}

}  // namespace capsule
