#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "capsule/ast.hpp"
#include "capsule/binding.hpp"
#include "capsule/printer.hpp"
#include "capsule/values.hpp"

namespace capsule {

// Equality under binder renaming only: no reordering, no empty-block
// elimination. Free variables must coincide exactly.
inline bool alpha_eq(const ExprPtr& a, const ExprPtr& b) {
    using Env = std::map<Ident, Ident>;
    std::function<bool(const ExprPtr&, const ExprPtr&, const Env&, const Env&)> go =
        [&](const ExprPtr& x, const ExprPtr& y, const Env& fwd, const Env& bwd) -> bool {
        if (x->node.index() != y->node.index()) return false;
        if (const auto* v = as<VarE>(x)) {
            const auto& w = as<VarE>(y)->ident;
            auto it = fwd.find(v->ident);
            if (it != fwd.end()) return it->second == w;
            // x free: y must be the same free variable.
            return !bwd.contains(w) && v->ident == w;
        }
        if (const auto* o = as<OidE>(x)) return o->oid == as<OidE>(y)->oid;
        if (const auto* i = as<IntE>(x)) return i->value == as<IntE>(y)->value;
        if (const auto* f = as<FieldAccessE>(x)) {
            const auto* g = as<FieldAccessE>(y);
            return f->field == g->field && go(f->recv, g->recv, fwd, bwd);
        }
        if (const auto* s = as<FieldAssignE>(x)) {
            const auto* t = as<FieldAssignE>(y);
            return s->field == t->field && go(s->recv, t->recv, fwd, bwd) &&
                   go(s->rhs, t->rhs, fwd, bwd);
        }
        if (const auto* n = as<NewE>(x)) {
            const auto* m = as<NewE>(y);
            if (n->cls != m->cls || n->args.size() != m->args.size()) return false;
            for (std::size_t k = 0; k < n->args.size(); ++k)
                if (!go(n->args[k], m->args[k], fwd, bwd)) return false;
            return true;
        }
        if (const auto* iv = as<InvokeE>(x)) {
            const auto* jw = as<InvokeE>(y);
            if (iv->method != jw->method || iv->args.size() != jw->args.size()) return false;
            if (!go(iv->recv, jw->recv, fwd, bwd)) return false;
            for (std::size_t k = 0; k < iv->args.size(); ++k)
                if (!go(iv->args[k], jw->args[k], fwd, bwd)) return false;
            return true;
        }
        const auto* bx = as<BlockE>(x);
        const auto* by = as<BlockE>(y);
        if (bx->decls.size() != by->decls.size()) return false;
        Env fwd2 = fwd, bwd2 = bwd;
        for (std::size_t k = 0; k < bx->decls.size(); ++k) {
            fwd2[bx->decls[k].var] = by->decls[k].var;
            bwd2[by->decls[k].var] = bx->decls[k].var;
        }
        for (std::size_t k = 0; k < bx->decls.size(); ++k) {
            const auto& dx = bx->decls[k];
            const auto& dy = by->decls[k];
            if (dx.type != dy.type) return false;
            if (!go(dx.init, dy.init, fwd2, bwd2)) return false;
        }
        std::set<Ident> ax, ay;
        for (const auto& v : bx->annot) {
            auto it = fwd2.find(v);
            ax.insert(it == fwd2.end() ? v : it->second);
        }
        ay = by->annot;
        if (ax != ay) return false;
        return go(bx->body, by->body, fwd2, bwd2);
    };
    return go(a, b, {}, {});
}

enum class CongruenceMode {
    syntactic,     // alpha + block-elim + reorder (Fig. 3)
    conventional,  // alpha + block-elim only (Fig. 1)
};

struct CanonicalForm {
    ExprPtr term;
    std::string key;
};

namespace detail {

// Collapses empty blocks and, in syntactic mode, moves evaluated
// declarations to the block front (keeping the relative order of
// unevaluated ones). The order within each dv group is resolved later.
inline ExprPtr canon_normalize(const ExprPtr& e, CongruenceMode mode) {
    if (const auto* f = as<FieldAccessE>(e))
        return mk_access(canon_normalize(f->recv, mode), f->field);
    if (const auto* s = as<FieldAssignE>(e))
        return mk_assign(canon_normalize(s->recv, mode), s->field, canon_normalize(s->rhs, mode));
    if (const auto* n = as<NewE>(e)) {
        std::vector<ExprPtr> args;
        for (const auto& a : n->args) args.push_back(canon_normalize(a, mode));
        return mk_new(n->cls, std::move(args));
    }
    if (const auto* i = as<InvokeE>(e)) {
        std::vector<ExprPtr> args;
        for (const auto& a : i->args) args.push_back(canon_normalize(a, mode));
        return mk_invoke(canon_normalize(i->recv, mode), i->method, std::move(args));
    }
    const auto* b = as<BlockE>(e);
    if (!b) return e;
    std::vector<Decl> decls;
    for (const auto& d : b->decls)
        decls.push_back(Decl{d.type, d.var, canon_normalize(d.init, mode)});
    ExprPtr body = canon_normalize(b->body, mode);
    if (decls.empty()) return body;
    if (mode == CongruenceMode::syntactic) {
        std::stable_partition(decls.begin(), decls.end(),
                              [](const Decl& d) { return is_evaluated_decl(d); });
    }
    return mk_block(std::move(decls), std::move(body), b->annot);
}

// Renames every binder to ("%", k) with k assigned in traversal order.
inline ExprPtr canon_rename(const ExprPtr& e) {
    std::uint32_t next = 0;
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
            for (const auto& a : n->args) args.push_back(go(a, env));
            return mk_new(n->cls, std::move(args));
        }
        if (const auto* i = as<InvokeE>(x)) {
            std::vector<ExprPtr> args;
            for (const auto& a : i->args) args.push_back(go(a, env));
            return mk_invoke(go(i->recv, env), i->method, std::move(args));
        }
        const auto* b = as<BlockE>(x);
        Env env2 = env;
        for (const auto& d : b->decls) env2[d.var] = Ident{"%", ++next};
        std::vector<Decl> decls;
        for (const auto& d : b->decls)
            decls.push_back(Decl{d.type, env2.at(d.var), go(d.init, env2)});
        std::set<Ident> annot;
        for (const auto& a : b->annot) {
            auto it = env2.find(a);
            annot.insert(it == env2.end() ? a : it->second);
        }
        return mk_block(std::move(decls), go(b->body, env2), std::move(annot));
    };
    return go(e, {});
}

struct DvGroup {
    const BlockE* block;
    std::size_t size;
};

inline void collect_dv_groups(const ExprPtr& e, std::vector<DvGroup>& out) {
    if (const auto* f = as<FieldAccessE>(e)) {
        collect_dv_groups(f->recv, out);
    } else if (const auto* s = as<FieldAssignE>(e)) {
        collect_dv_groups(s->recv, out);
        collect_dv_groups(s->rhs, out);
    } else if (const auto* n = as<NewE>(e)) {
        for (const auto& a : n->args) collect_dv_groups(a, out);
    } else if (const auto* i = as<InvokeE>(e)) {
        collect_dv_groups(i->recv, out);
        for (const auto& a : i->args) collect_dv_groups(a, out);
    } else if (const auto* b = as<BlockE>(e)) {
        std::size_t k = 0;
        while (k < b->decls.size() && is_evaluated_decl(b->decls[k])) ++k;
        if (k > 1) out.push_back(DvGroup{b, k});
        for (const auto& d : b->decls) collect_dv_groups(d.init, out);
        collect_dv_groups(b->body, out);
    }
}

// Applies one permutation assignment: for the i-th encountered dv
// group, reorders its prefix by perms[i].
inline ExprPtr apply_perms(const ExprPtr& e, const std::vector<std::vector<std::size_t>>& perms,
                           std::size_t& cursor) {
    if (const auto* f = as<FieldAccessE>(e))
        return mk_access(apply_perms(f->recv, perms, cursor), f->field);
    if (const auto* s = as<FieldAssignE>(e)) {
        ExprPtr r = apply_perms(s->recv, perms, cursor);
        return mk_assign(std::move(r), s->field, apply_perms(s->rhs, perms, cursor));
    }
    if (const auto* n = as<NewE>(e)) {
        std::vector<ExprPtr> args;
        for (const auto& a : n->args) args.push_back(apply_perms(a, perms, cursor));
        return mk_new(n->cls, std::move(args));
    }
    if (const auto* i = as<InvokeE>(e)) {
        ExprPtr r = apply_perms(i->recv, perms, cursor);
        std::vector<ExprPtr> args;
        for (const auto& a : i->args) args.push_back(apply_perms(a, perms, cursor));
        return mk_invoke(std::move(r), i->method, std::move(args));
    }
    const auto* b = as<BlockE>(e);
    if (!b) return e;
    std::size_t k = 0;
    while (k < b->decls.size() && is_evaluated_decl(b->decls[k])) ++k;
    std::vector<Decl> decls;
    if (k > 1) {
        const auto& perm = perms[cursor++];
        for (std::size_t j = 0; j < k; ++j) decls.push_back(b->decls[perm[j]]);
    } else {
        for (std::size_t j = 0; j < k; ++j) decls.push_back(b->decls[j]);
    }
    for (std::size_t j = k; j < b->decls.size(); ++j) decls.push_back(b->decls[j]);
    for (auto& d : decls) d.init = apply_perms(d.init, perms, cursor);
    return mk_block(std::move(decls), apply_perms(b->body, perms, cursor), b->annot);
}

}  // namespace detail

// Canonical representative of the congruence class: empty blocks
// collapsed, evaluated declarations hoisted, binders renamed by
// traversal order, and each dv group ordered to minimize the rendered
// form over all permutations.
inline CanonicalForm canonicalize(const ExprPtr& e,
                                  CongruenceMode mode = CongruenceMode::syntactic) {
    ExprPtr base = detail::canon_normalize(e, mode);
    if (mode == CongruenceMode::conventional) {
        ExprPtr t = detail::canon_rename(base);
        return CanonicalForm{t, render(t)};
    }
    std::vector<detail::DvGroup> groups;
    detail::collect_dv_groups(base, groups);
    std::vector<std::vector<std::size_t>> perms;
    for (const auto& g : groups) {
        std::vector<std::size_t> idx(g.size);
        std::iota(idx.begin(), idx.end(), 0);
        perms.push_back(std::move(idx));
    }
    ExprPtr best_term;
    std::string best_key;
    // Odometer over the per-group permutations; group sizes are small
    // everywhere this is used (bounded block sizes).
    std::function<void(std::size_t)> visit = [&](std::size_t i) {
        if (i == perms.size()) {
            std::size_t cursor = 0;
            ExprPtr cand = detail::canon_rename(detail::apply_perms(base, perms, cursor));
            std::string key = render(cand);
            if (best_key.empty() || key < best_key) {
                best_key = key;
                best_term = cand;
            }
            return;
        }
        std::vector<std::size_t>& p = perms[i];
        std::sort(p.begin(), p.end());
        do {
            visit(i + 1);
        } while (std::next_permutation(p.begin(), p.end()));
    };
    visit(0);
    return CanonicalForm{best_term, best_key};
}

inline bool congruent(const ExprPtr& a, const ExprPtr& b,
                      CongruenceMode mode = CongruenceMode::syntactic) {
    return canonicalize(a, mode).key == canonicalize(b, mode).key;
}

}  // namespace capsule
