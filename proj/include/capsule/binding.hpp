#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "capsule/ast.hpp"

namespace capsule {

namespace detail {

inline void free_vars_into(const ExprPtr& e, std::set<Ident>& bound, std::set<Ident>& out) {
    if (const auto* v = as<VarE>(e)) {
        if (!bound.contains(v->ident)) out.insert(v->ident);
        return;
    }
    if (is<OidE>(e) || is<IntE>(e)) return;
    if (const auto* f = as<FieldAccessE>(e)) {
        free_vars_into(f->recv, bound, out);
        return;
    }
    if (const auto* s = as<FieldAssignE>(e)) {
        free_vars_into(s->recv, bound, out);
        free_vars_into(s->rhs, bound, out);
        return;
    }
    if (const auto* n = as<NewE>(e)) {
        for (const auto& a : n->args) free_vars_into(a, bound, out);
        return;
    }
    if (const auto* i = as<InvokeE>(e)) {
        free_vars_into(i->recv, bound, out);
        for (const auto& a : i->args) free_vars_into(a, bound, out);
        return;
    }
    const auto* b = as<BlockE>(e);
    // Declared variables are in scope in every initializer and the body.
    std::vector<Ident> added;
    for (const auto& d : b->decls)
        if (bound.insert(d.var).second) added.push_back(d.var);
    for (const auto& d : b->decls) free_vars_into(d.init, bound, out);
    free_vars_into(b->body, bound, out);
    for (const auto& x : added) bound.erase(x);
}

}  // namespace detail

inline std::set<Ident> free_vars(const ExprPtr& e) {
    std::set<Ident> bound, out;
    detail::free_vars_into(e, bound, out);
    return out;
}

// FV of a declaration sequence, treated as mutually scoped: the
// sequence's own variables are not free.
inline std::set<Ident> free_vars(const std::vector<Decl>& ds) {
    std::set<Ident> out;
    std::set<Ident> bound;
    for (const auto& d : ds) bound.insert(d.var);
    for (const auto& d : ds) detail::free_vars_into(d.init, bound, out);
    return out;
}

inline std::set<Ident> decl_domain(const std::vector<Decl>& ds) {
    std::set<Ident> out;
    for (const auto& d : ds) out.insert(d.var);
    return out;
}

inline std::uint32_t max_ident_id(const ExprPtr& e) {
    std::uint32_t m = 0;
    std::function<void(const ExprPtr&)> go = [&](const ExprPtr& x) {
        if (const auto* v = as<VarE>(x)) {
            m = std::max(m, v->ident.id);
        } else if (const auto* f = as<FieldAccessE>(x)) {
            go(f->recv);
        } else if (const auto* s = as<FieldAssignE>(x)) {
            go(s->recv);
            go(s->rhs);
        } else if (const auto* n = as<NewE>(x)) {
            for (const auto& a : n->args) go(a);
        } else if (const auto* i = as<InvokeE>(x)) {
            go(i->recv);
            for (const auto& a : i->args) go(a);
        } else if (const auto* b = as<BlockE>(x)) {
            for (const auto& d : b->decls) {
                m = std::max(m, d.var.id);
                go(d.init);
            }
            go(b->body);
            for (const auto& a : b->annot) m = std::max(m, a.id);
        }
        return;
    };
    go(e);
    return m;
}

// Alpha-equivalent copy in which every binding occurrence carries a
// fresh globally unique id. Occurrences resolve to the nearest
// enclosing binder with the same (name, id) pair; free variables are
// left untouched.
inline ExprPtr freshen(const ExprPtr& e, FreshSupply& supply) {
    using Env = std::map<Ident, Ident>;
    std::function<ExprPtr(const ExprPtr&, const Env&)> go = [&](const ExprPtr& x,
                                                                const Env& env) -> ExprPtr {
        if (const auto* v = as<VarE>(x)) {
            auto it = env.find(v->ident);
            return it == env.end() ? x : mk_var(it->second);
        }
        if (is<OidE>(x) || is<IntE>(x)) return x;
        if (const auto* f = as<FieldAccessE>(x)) return mk_access(go(f->recv, env), f->field);
        if (const auto* s = as<FieldAssignE>(x))
            return mk_assign(go(s->recv, env), s->field, go(s->rhs, env));
        if (const auto* n = as<NewE>(x)) {
            std::vector<ExprPtr> args;
            args.reserve(n->args.size());
            for (const auto& a : n->args) args.push_back(go(a, env));
            return mk_new(n->cls, std::move(args));
        }
        if (const auto* i = as<InvokeE>(x)) {
            std::vector<ExprPtr> args;
            args.reserve(i->args.size());
            for (const auto& a : i->args) args.push_back(go(a, env));
            return mk_invoke(go(i->recv, env), i->method, std::move(args));
        }
        const auto* b = as<BlockE>(x);
        Env inner = env;
        for (const auto& d : b->decls) inner[d.var] = supply.fresh_like(d.var);
        std::vector<Decl> decls;
        decls.reserve(b->decls.size());
        for (const auto& d : b->decls)
            decls.push_back(Decl{d.type, inner.at(d.var), go(d.init, inner)});
        std::set<Ident> annot;
        for (const auto& a : b->annot) {
            auto it = inner.find(a);
            annot.insert(it == inner.end() ? a : it->second);
        }
        return mk_block(std::move(decls), go(b->body, inner), std::move(annot));
    };
    return go(e, {});
}

inline ExprPtr freshen(const ExprPtr& e) {
    FreshSupply supply(max_ident_id(e));
    return freshen(e, supply);
}

namespace detail {

// Capture-avoiding substitution core. `replacement(k)` yields the term
// for the k-th substituted occurrence (0-based); `repl_fv` is the set
// of variables any replacement may mention, used to rename capturing
// binders on the way down.
struct Substituter {
    Ident target;
    std::function<ExprPtr(std::size_t)> replacement;
    std::set<Ident> repl_fv;
    FreshSupply* supply;
    std::size_t hits = 0;

    ExprPtr expr(const ExprPtr& x) {
        if (const auto* v = as<VarE>(x)) {
            if (v->ident == target) return replacement(hits++);
            return x;
        }
        if (is<OidE>(x) || is<IntE>(x)) return x;
        if (const auto* f = as<FieldAccessE>(x)) return mk_access(expr(f->recv), f->field);
        if (const auto* s = as<FieldAssignE>(x))
            return mk_assign(expr(s->recv), s->field, expr(s->rhs));
        if (const auto* n = as<NewE>(x)) {
            std::vector<ExprPtr> args;
            args.reserve(n->args.size());
            for (const auto& a : n->args) args.push_back(expr(a));
            return mk_new(n->cls, std::move(args));
        }
        if (const auto* i = as<InvokeE>(x)) {
            std::vector<ExprPtr> args;
            args.reserve(i->args.size());
            for (const auto& a : i->args) args.push_back(expr(a));
            return mk_invoke(expr(i->recv), i->method, std::move(args));
        }
        return block(*as<BlockE>(x));
    }

    ExprPtr block(const BlockE& b) {
        for (const auto& d : b.decls)
            if (d.var == target) return mk_block(b.decls, b.body, b.annot);  // shadowed
        // Rename any binder that would capture a replacement's free var.
        std::map<Ident, Ident> renames;
        for (const auto& d : b.decls)
            if (repl_fv.contains(d.var)) renames[d.var] = supply->fresh_like(d.var);
        std::vector<Decl> decls = b.decls;
        ExprPtr body = b.body;
        std::set<Ident> annot = b.annot;
        if (!renames.empty()) {
            for (auto& d : decls) {
                auto it = renames.find(d.var);
                if (it != renames.end()) d.var = it->second;
            }
            for (const auto& [from, to] : renames) {
                for (auto& d : decls) d.init = rename_free(d.init, from, to);
                body = rename_free(body, from, to);
                if (annot.erase(from)) annot.insert(to);
            }
        }
        for (auto& d : decls) d.init = expr(d.init);
        return mk_block(std::move(decls), expr(body), std::move(annot));
    }

    static ExprPtr rename_free(const ExprPtr& e, const Ident& from, const Ident& to);
};

inline ExprPtr Substituter::rename_free(const ExprPtr& e, const Ident& from, const Ident& to) {
    Substituter s{from, [&](std::size_t) { return mk_var(to); }, {}, nullptr};
    return s.expr(e);
}

}  // namespace detail

// e[y/x]: capture-avoiding replacement of free occurrences of x by y.
inline ExprPtr subst_var(const ExprPtr& e, const Ident& y, const Ident& x) {
    FreshSupply local(std::max(max_ident_id(e), y.id));
    detail::Substituter s{x, [&](std::size_t) { return mk_var(y); }, {y}, &local};
    return s.expr(e);
}

inline std::vector<Decl> subst_var(const std::vector<Decl>& ds, const Ident& y, const Ident& x) {
    // Substitution on a declaration sequence outside its block: the
    // sequence's own binders shadow x.
    for (const auto& d : ds)
        if (d.var == x) return ds;
    std::vector<Decl> out = ds;
    for (auto& d : out) d.init = subst_var(d.init, y, x);
    return out;
}

inline std::set<Ident> subst_var(const std::set<Ident>& xs, const Ident& y, const Ident& x) {
    std::set<Ident> out = xs;
    if (out.erase(x)) out.insert(y);
    return out;
}

// e[v/x]: replaces free occurrences of x by v. The first occurrence
// receives v itself; each further occurrence receives a copy with all
// binders freshened, keeping binder ids globally unique even when an
// affine variable is (illegally) used more than once.
inline ExprPtr subst_value(const ExprPtr& e, const ExprPtr& v, const Ident& x,
                           FreshSupply& supply) {
    detail::Substituter s{
        x,
        [&](std::size_t k) { return k == 0 ? v : freshen(v, supply); },
        free_vars(v),
        &supply,
    };
    return s.expr(e);
}

inline ExprPtr subst_value(const ExprPtr& e, const ExprPtr& v, const Ident& x) {
    FreshSupply local(std::max(max_ident_id(e), max_ident_id(v)));
    return subst_value(e, v, x, local);
}

}  // namespace capsule
