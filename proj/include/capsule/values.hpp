#pragma once

#include <optional>
#include <variant>

#include "capsule/ast.hpp"
#include "capsule/binding.hpp"

namespace capsule {

// reduct(ds, e): the declarations of variables transitively used by e.
// Least fixed point; order preserved.
inline std::vector<Decl> reduct(const std::vector<Decl>& ds, const ExprPtr& e) {
    std::set<Ident> needed = free_vars(e);
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& d : ds) {
            if (!needed.contains(d.var)) continue;
            for (const auto& x : free_vars(d.init))
                if (needed.insert(x).second) changed = true;
        }
    }
    std::vector<Decl> kept;
    for (const auto& d : ds)
        if (needed.contains(d.var)) kept.push_back(d);
    return kept;
}

struct NotValue {};
struct VarValue {
    Ident ident;
};
struct IntValue {
    long long value;
};
// Block value `{dvs; x}^X`: nonempty evaluated declarations, variable
// body, and reduct(dvs, x) = dvs (no garbage).
struct BlockValue {
    const BlockE* block;
};

using ValueKind = std::variant<NotValue, VarValue, IntValue, BlockValue>;

inline ValueKind classify_value(const ExprPtr& e) {
    if (const auto* v = as<VarE>(e)) return VarValue{v->ident};
    if (const auto* i = as<IntE>(e)) return IntValue{i->value};
    const auto* b = as<BlockE>(e);
    if (!b) return NotValue{};
    if (b->decls.empty() || !is<VarE>(b->body)) return NotValue{};
    for (const auto& d : b->decls)
        if (!is_evaluated_decl(d)) return NotValue{};
    if (reduct(b->decls, b->body).size() != b->decls.size()) return NotValue{};
    return BlockValue{b};
}

inline bool is_value(const ExprPtr& e) {
    return !std::holds_alternative<NotValue>(classify_value(e));
}

// A capsule is a closed block value: an isolated portion of memory.
inline bool is_capsule(const ExprPtr& v) {
    return std::holds_alternative<BlockValue>(classify_value(v)) && free_vars(v).empty();
}

enum class AnnotPolicy { all, used, reach };

// Rewrites every block's annotation according to the policy,
// overwriting existing ones.
inline ExprPtr annotate(const ExprPtr& e, AnnotPolicy policy) {
    if (const auto* f = as<FieldAccessE>(e)) return mk_access(annotate(f->recv, policy), f->field);
    if (const auto* s = as<FieldAssignE>(e))
        return mk_assign(annotate(s->recv, policy), s->field, annotate(s->rhs, policy));
    if (const auto* n = as<NewE>(e)) {
        std::vector<ExprPtr> args;
        for (const auto& a : n->args) args.push_back(annotate(a, policy));
        return mk_new(n->cls, std::move(args));
    }
    if (const auto* i = as<InvokeE>(e)) {
        std::vector<ExprPtr> args;
        for (const auto& a : i->args) args.push_back(annotate(a, policy));
        return mk_invoke(annotate(i->recv, policy), i->method, std::move(args));
    }
    const auto* b = as<BlockE>(e);
    if (!b) return e;
    std::vector<Decl> decls;
    for (const auto& d : b->decls) decls.push_back(Decl{d.type, d.var, annotate(d.init, policy)});
    ExprPtr body = annotate(b->body, policy);
    std::set<Ident> annot;
    switch (policy) {
        case AnnotPolicy::all:
            annot = decl_domain(decls);
            break;
        case AnnotPolicy::used: {
            std::set<Ident> used;
            for (const auto& d : decls)
                for (const auto& x : free_vars(d.init)) used.insert(x);
            for (const auto& x : free_vars(body)) used.insert(x);
            for (const auto& d : decls)
                if (used.contains(d.var)) annot.insert(d.var);
            break;
        }
        case AnnotPolicy::reach:
            for (const auto& d : reduct(decls, body)) annot.insert(d.var);
            break;
    }
    return mk_block(std::move(decls), std::move(body), std::move(annot));
}

inline bool is_pure(const ExprPtr& e) {
    if (is<OidE>(e)) return false;
    if (is<VarE>(e) || is<IntE>(e)) return true;
    if (const auto* f = as<FieldAccessE>(e)) return is_pure(f->recv);
    if (const auto* s = as<FieldAssignE>(e)) return is_pure(s->recv) && is_pure(s->rhs);
    if (const auto* n = as<NewE>(e)) {
        for (const auto& a : n->args)
            if (!is_pure(a)) return false;
        return true;
    }
    if (const auto* i = as<InvokeE>(e)) {
        if (!is_pure(i->recv)) return false;
        for (const auto& a : i->args)
            if (!is_pure(a)) return false;
        return true;
    }
    const auto* b = as<BlockE>(e);
    for (const auto& d : b->decls)
        if (!is_pure(d.init)) return false;
    return is_pure(b->body);
}

}  // namespace capsule
