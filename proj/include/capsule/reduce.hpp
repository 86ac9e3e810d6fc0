#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "capsule/ast.hpp"
#include "capsule/binding.hpp"
#include "capsule/context.hpp"
#include "capsule/values.hpp"

namespace capsule {

enum class Rule {
    ctx_implicit,
    rnew,
    field_access,
    field_assign,
    invk,
    alias_elim,
    affine_elim,
    garbage,
    move_dec,
    move_body,
    move_subterm,
    cong_block_elim,
    cong_alpha,
};

inline const char* rule_name(Rule r) {
    switch (r) {
        case Rule::ctx_implicit: return "ctx-implicit";
        case Rule::rnew: return "new";
        case Rule::field_access: return "field-access";
        case Rule::field_assign: return "field-assign";
        case Rule::invk: return "invk";
        case Rule::alias_elim: return "alias-elim";
        case Rule::affine_elim: return "affine-elim";
        case Rule::garbage: return "garbage";
        case Rule::move_dec: return "move-dec";
        case Rule::move_body: return "move-body";
        case Rule::move_subterm: return "move-subterm";
        case Rule::cong_block_elim: return "cong-block-elim";
        case Rule::cong_alpha: return "cong-alpha";
    }
    return "?";
}

struct CapsuleCheckFailed {
    Ident var;
    ExprPtr value;
};
struct NoApplicableRule {
    std::string detail;
};
using StuckReason = std::variant<CapsuleCheckFailed, NoApplicableRule>;

struct Done {
    ExprPtr value;
};
struct Step {
    ExprPtr term;
    Rule rule;
};
struct Stuck {
    StuckReason reason;
};
using StepOutcome = std::variant<Done, Step, Stuck>;

namespace detail {

// Collapses the first empty-declaration block found in traversal
// order, if any.
inline std::optional<ExprPtr> collapse_one_empty_block(const ExprPtr& e) {
    if (const auto* b = as<BlockE>(e)) {
        if (b->decls.empty()) return b->body;
        for (std::size_t i = 0; i < b->decls.size(); ++i) {
            if (auto r = collapse_one_empty_block(b->decls[i].init)) {
                auto decls = b->decls;
                decls[i].init = *r;
                return mk_block(std::move(decls), b->body, b->annot);
            }
        }
        if (auto r = collapse_one_empty_block(b->body))
            return mk_block(b->decls, *r, b->annot);
        return std::nullopt;
    }
    if (const auto* f = as<FieldAccessE>(e)) {
        if (auto r = collapse_one_empty_block(f->recv)) return mk_access(*r, f->field);
        return std::nullopt;
    }
    if (const auto* s = as<FieldAssignE>(e)) {
        if (auto r = collapse_one_empty_block(s->recv)) return mk_assign(*r, s->field, s->rhs);
        if (auto r = collapse_one_empty_block(s->rhs)) return mk_assign(s->recv, s->field, *r);
        return std::nullopt;
    }
    if (const auto* n = as<NewE>(e)) {
        for (std::size_t i = 0; i < n->args.size(); ++i) {
            if (auto r = collapse_one_empty_block(n->args[i])) {
                auto args = n->args;
                args[i] = *r;
                return mk_new(n->cls, std::move(args));
            }
        }
        return std::nullopt;
    }
    if (const auto* iv = as<InvokeE>(e)) {
        if (auto r = collapse_one_empty_block(iv->recv))
            return mk_invoke(*r, iv->method, iv->args);
        for (std::size_t i = 0; i < iv->args.size(); ++i) {
            if (auto r = collapse_one_empty_block(iv->args[i])) {
                auto args = iv->args;
                args[i] = *r;
                return mk_invoke(iv->recv, iv->method, std::move(args));
            }
        }
        return std::nullopt;
    }
    return std::nullopt;
}

// Substitutes within a declaration suffix and body as one scope, so
// occurrence counting spans both (the elimination rules' ds[v/x] and
// e[v/x]).
struct ElimParts {
    std::vector<Decl> decls;
    ExprPtr body;
};

inline ElimParts subst_parts_var(std::vector<Decl> ds, ExprPtr body, const Ident& y,
                                 const Ident& x) {
    ExprPtr tmp = mk_block(std::move(ds), std::move(body), {});
    ExprPtr out = subst_var(tmp, y, x);
    const auto* b = as<BlockE>(out);
    return ElimParts{b->decls, b->body};
}

inline ElimParts subst_parts_value(std::vector<Decl> ds, ExprPtr body, const ExprPtr& v,
                                   const Ident& x, FreshSupply& supply) {
    ExprPtr tmp = mk_block(std::move(ds), std::move(body), {});
    ExprPtr out = subst_value(tmp, v, x, supply);
    const auto* b = as<BlockE>(out);
    return ElimParts{b->decls, b->body};
}

}  // namespace detail

// Deterministic small-step reducer for the syntactic calculus. One
// call applies exactly one Fig. 4 rule (or an explicit Fig. 3
// block-elim step) chosen by a fixed priority at the unique maximal
// decomposition.
class Reducer {
  public:
    Reducer(const ClassTable& ct, FreshSupply& supply) : ct_(ct), supply_(supply) {}

    StepOutcome step(const ExprPtr& e) {
        if (auto collapsed = detail::collapse_one_empty_block(e))
            return Step{*collapsed, Rule::cong_block_elim};
        if (is_value(e)) return Done{e};

        Decomposition d = decompose(e);

        if (const auto* n = as<NewE>(d.hole); n && all_atomic(n->args))
            return apply_new(d);
        if (const auto* f = as<FieldAccessE>(d.hole); f && is_atomic(f->recv))
            return apply_field_access(d, *f);
        if (const auto* s = as<FieldAssignE>(d.hole);
            s && is_atomic(s->recv) && is_atomic(s->rhs))
            return apply_field_assign(d, *s);
        if (const auto* iv = as<InvokeE>(d.hole); iv && is_atomic(iv->recv))
            return apply_invoke(d, *iv);

        return at_value(d);
    }

    // Applies step up to fuel times.
    struct TraceEntry {
        Rule rule;
        ExprPtr term;
    };
    struct FuelExhausted {};
    using RunFinal = std::variant<Done, Stuck, FuelExhausted>;
    struct Run {
        std::vector<TraceEntry> trace;
        RunFinal final;
        ExprPtr last;
    };

    Run run(ExprPtr e, std::size_t fuel) {
        Run r{{}, FuelExhausted{}, std::move(e)};
        for (std::size_t i = 0; i < fuel; ++i) {
            StepOutcome out = step(r.last);
            if (auto* done = std::get_if<Done>(&out)) {
                r.final = *done;
                return r;
            }
            if (auto* stuck = std::get_if<Stuck>(&out)) {
                r.final = *stuck;
                return r;
            }
            auto& s = std::get<Step>(out);
            r.last = s.term;
            r.trace.push_back(TraceEntry{s.rule, r.last});
        }
        if (is_value(r.last))
            r.final = Done{r.last};
        else
            r.final = FuelExhausted{};
        return r;
    }

  private:
    static bool all_atomic(const std::vector<ExprPtr>& es) {
        return std::all_of(es.begin(), es.end(), [](const ExprPtr& a) { return is_atomic(a); });
    }

    static Stuck nar(std::string detail) { return Stuck{NoApplicableRule{std::move(detail)}}; }

    // new: E[new C(xs)] -> E[{C x=new C(xs); x}^{x}]. The side condition
    // (not at a plain declaration initializer) holds by construction:
    // such a declaration would be evaluated, so decomposition never
    // stops there.
    StepOutcome apply_new(const Decomposition& d) {
        const auto* n = as<NewE>(d.hole);
        std::string base = n->cls.empty() ? "o" : std::string(1, char(std::tolower(n->cls[0])));
        Ident x = supply_.fresh(base);
        ExprPtr block = mk_block({Decl{DeclType{Qualifier::plain, n->cls}, x, d.hole}}, mk_var(x),
                                 {x});
        return Step{reconstruct(d.path, std::move(block)), Rule::rnew};
    }

    StepOutcome apply_field_access(const Decomposition& d, const FieldAccessE& f) {
        const auto* v = as<VarE>(f.recv);
        if (!v) return nar("field access on integer");
        auto enc = lookup_enclosing(d.path, v->ident);
        if (!enc) return nar("no enclosing evaluated declaration for " + v->ident.name);
        auto idx = ct_.field_index(enc->state.cls, f.field);
        if (!idx) return nar("class " + enc->state.cls + " has no field " + f.field);
        return Step{reconstruct(d.path, enc->state.args[*idx]), Rule::field_access};
    }

    StepOutcome apply_field_assign(const Decomposition& d, const FieldAssignE& s) {
        const auto* v = as<VarE>(s.recv);
        if (!v) return nar("field assignment on integer");
        auto enc = lookup_enclosing(d.path, v->ident);
        if (!enc) return nar("no enclosing evaluated declaration for " + v->ident.name);
        auto idx = ct_.field_index(enc->state.cls, s.field);
        if (!idx) return nar("class " + enc->state.cls + " has no field " + s.field);
        if (const auto* y = as<VarE>(s.rhs); y && enc->inner.contains(y->ident)) {
            // Scope extrusion: the assigned reference is declared below
            // the receiver's block. Hoist its declaration one level.
            return hoist_for(d, y->ident);
        }
        // Update the i-th constructor argument of the enclosing dv.
        CtxPath path = d.path;
        Frame& frame = path[enc->frame_index];
        std::vector<Decl>* dvs = nullptr;
        if (auto* bdf = std::get_if<BlockDeclF>(&frame))
            dvs = &bdf->dvs_before;
        else
            dvs = &std::get<BlockBodyF>(frame).dvs;
        for (auto& dv : *dvs) {
            if (dv.var != v->ident) continue;
            const auto* n = as<NewE>(dv.init);
            auto args = n->args;
            args[*idx] = s.rhs;
            dv.init = mk_new(n->cls, std::move(args));
            break;
        }
        return Step{reconstruct(path, s.rhs), Rule::field_assign};
    }

    StepOutcome apply_invoke(const Decomposition& d, const InvokeE& iv) {
        const auto* v = as<VarE>(iv.recv);
        if (!v) return nar("method call on integer");
        auto enc = lookup_enclosing(d.path, v->ident);
        if (!enc) return nar("no enclosing evaluated declaration for " + v->ident.name);
        const auto* sig = ct_.find_method(enc->state.cls, iv.method);
        if (!sig) return nar("class " + enc->state.cls + " has no method " + iv.method);
        if (sig->params.size() != iv.args.size())
            return nar("method arity mismatch for " + enc->state.cls + "." + iv.method);
        Ident fresh_this = supply_.fresh("this");
        std::vector<Ident> fresh_params;
        for (const auto& [pt, px] : sig->params) fresh_params.push_back(supply_.fresh_like(px));
        std::vector<Decl> decls;
        decls.push_back(Decl{DeclType{Qualifier::plain, enc->state.cls}, fresh_this, iv.recv});
        for (std::size_t k = 0; k < sig->params.size(); ++k)
            decls.push_back(Decl{sig->params[k].first, fresh_params[k], iv.args[k]});
        ExprPtr body = sig->body;
        body = subst_var(body, fresh_this, Ident{"this", 0});
        for (std::size_t k = 0; k < sig->params.size(); ++k)
            body = subst_var(body, fresh_params[k], sig->params[k].second);
        body = freshen(body, supply_);
        ExprPtr block = mk_block(std::move(decls), std::move(body), {});
        return Step{reconstruct(d.path, std::move(block)), Rule::invk};
    }

    // The hole is a value (or a finished block); dispatch on the
    // enclosing frame.
    StepOutcome at_value(const Decomposition& d) {
        if (d.path.empty()) {
            // Finished block at top level with unused declarations.
            if (const auto* b = as<BlockE>(d.hole)) return apply_garbage(d, *b);
            return nar("value unexpectedly not recognized");
        }
        const Frame& parent = d.path.back();
        if (const auto* bd = std::get_if<BlockDeclF>(&parent)) return at_decl_init(d, *bd);
        if (std::holds_alternative<BlockBodyF>(parent)) return apply_move_body(d);
        if (std::holds_alternative<InvokeArgF>(parent)) {
            if (const auto* b = as<BlockE>(d.hole)) return apply_garbage(d, *b);
            return nar("non-value in evaluated argument position");
        }
        // Value-context frame: field access/assign receiver, assigned
        // value, constructor argument, or invoke receiver.
        if (is<BlockE>(d.hole)) return apply_move_subterm(d);
        return nar("integer or variable in object position");
    }

    // Leading unevaluated declaration whose initializer is a value.
    StepOutcome at_decl_init(const Decomposition& d, const BlockDeclF& bd) {
        bool affine = bd.dtype.qual == Qualifier::affine;
        if (is<VarE>(d.hole)) {
            // A reference is trivially not a capsule.
            if (affine) return Stuck{CapsuleCheckFailed{bd.var, d.hole}};
            return apply_elim(d, bd, /*by_value=*/false);
        }
        if (is<IntE>(d.hole)) {
            // Integers are opaque substitutable values; both qualifiers
            // eliminate by direct substitution.
            return apply_elim(d, bd, /*by_value=*/true);
        }
        const auto* b = as<BlockE>(d.hole);
        if (!b) return nar("unreducible declaration initializer");
        if (!affine) {
            // Plain declaration of a finished block: flatten it.
            return apply_move_dec(d, bd, b->decls);
        }
        // Affine declaration: the initializer must become a capsule.
        if (reduct(b->decls, b->body).size() != b->decls.size()) return apply_garbage(d, *b);
        if (is_capsule(d.hole)) return apply_elim(d, bd, /*by_value=*/true);
        std::vector<Decl> movable = movable_dvs(*b);
        if (!movable.empty()) return apply_move_dec(d, bd, movable);
        return Stuck{CapsuleCheckFailed{bd.var, d.hole}};
    }

    // alias-elim / affine-elim: remove the declaration, substitute its
    // occurrences in the remaining declarations and body, drop the
    // variable from the annotation.
    StepOutcome apply_elim(const Decomposition& d, const BlockDeclF& bd, bool by_value) {
        detail::ElimParts parts =
            by_value ? detail::subst_parts_value(bd.ds_after, bd.body, d.hole, bd.var, supply_)
                     : detail::subst_parts_var(bd.ds_after, bd.body, as<VarE>(d.hole)->ident,
                                               bd.var);
        std::vector<Decl> decls = bd.dvs_before;
        decls.insert(decls.end(), parts.decls.begin(), parts.decls.end());
        std::set<Ident> annot = bd.annot;
        annot.erase(bd.var);
        ExprPtr block = mk_block(std::move(decls), parts.body, std::move(annot));
        CtxPath outer(d.path.begin(), d.path.end() - 1);
        Rule rule = bd.dtype.qual == Qualifier::affine ? Rule::affine_elim : Rule::alias_elim;
        return Step{reconstruct(outer, std::move(block)), rule};
    }

    // move-dec: relocate `moved` (a reorder-exposed prefix of the
    // initializer block's dvs) into the enclosing block, in front of
    // the declaration under evaluation.
    StepOutcome apply_move_dec(const Decomposition& d, const BlockDeclF& bd,
                               const std::vector<Decl>& moved) {
        const auto* b = as<BlockE>(d.hole);
        std::set<Ident> moved_vars;
        for (const auto& m : moved) moved_vars.insert(m.var);
        std::vector<Decl> kept;
        for (const auto& dv : b->decls)
            if (!moved_vars.contains(dv.var)) kept.push_back(dv);
        std::set<Ident> inner_annot;
        for (const auto& a : b->annot)
            if (!moved_vars.contains(a)) inner_annot.insert(a);
        ExprPtr inner = mk_block(std::move(kept), b->body, std::move(inner_annot));

        BlockDeclF frame = bd;
        frame.dvs_before.insert(frame.dvs_before.end(), moved.begin(), moved.end());
        CtxPath path(d.path.begin(), d.path.end() - 1);
        path.push_back(std::move(frame));
        return Step{reconstruct(path, std::move(inner)), Rule::move_dec};
    }

    // move-body: relocate the body block's dvs into the enclosing block.
    StepOutcome apply_move_body(const Decomposition& d) {
        const auto* b = as<BlockE>(d.hole);
        if (!b) return nar("integer or variable body was not popped");
        BlockBodyF frame = std::get<BlockBodyF>(d.path.back());
        std::set<Ident> moved_vars;
        for (const auto& dv : b->decls) {
            frame.dvs.push_back(dv);
            moved_vars.insert(dv.var);
        }
        std::set<Ident> inner_annot;
        for (const auto& a : b->annot)
            if (!moved_vars.contains(a)) inner_annot.insert(a);
        ExprPtr inner = mk_block({}, b->body, std::move(inner_annot));
        CtxPath path(d.path.begin(), d.path.end() - 1);
        path.push_back(std::move(frame));
        return Step{reconstruct(path, std::move(inner)), Rule::move_body};
    }

    // move-subterm: E_v[{dvs; x}^X] -> {dvs; E_v[{ ; x}^∅]}^X with the
    // whole dv prefix hoisted.
    StepOutcome apply_move_subterm(const Decomposition& d) {
        const auto* b = as<BlockE>(d.hole);
        ExprPtr inner = mk_block({}, b->body, {});
        ExprPtr plugged = plug_frame(d.path.back(), std::move(inner));
        ExprPtr outer = mk_block(b->decls, std::move(plugged), b->annot);
        CtxPath path(d.path.begin(), d.path.end() - 1);
        return Step{reconstruct(path, std::move(outer)), Rule::move_subterm};
    }

    // garbage: remove the evaluated declarations not transitively used
    // by the rest of the block.
    StepOutcome apply_garbage(const Decomposition& d, const BlockE& b) {
        std::vector<Decl> kept = reduct(b.decls, b.body);
        if (kept.size() == b.decls.size()) return nar("no unused declarations to collect");
        std::set<Ident> kept_vars;
        for (const auto& k : kept) kept_vars.insert(k.var);
        std::set<Ident> annot;
        for (const auto& a : b.annot)
            if (kept_vars.contains(a)) annot.insert(a);
        ExprPtr block = mk_block(std::move(kept), b.body, std::move(annot));
        return Step{reconstruct(d.path, std::move(block)), Rule::garbage};
    }

    // Scope extrusion fix for field-assign: hoist the declaration of y
    // out of its block, one level, via move-body or move-dec.
    StepOutcome hoist_for(const Decomposition& d, const Ident& y) {
        auto enc = lookup_enclosing(d.path, y);
        if (!enc) return nar("assigned variable " + y.name + " has no evaluated declaration");
        std::size_t j = enc->frame_index;
        if (j == 0) return nar("cannot hoist a top-level declaration");
        // The moved dvs are the maximal legal prefix of frame j's dv
        // prefix; it must contain y's declaration.
        const auto* dvs = frame_dv_prefix(d.path[j]);
        std::set<Ident> later_decl_vars;  // remaining declarations of the inner block
        if (const auto* bdf = std::get_if<BlockDeclF>(&d.path[j])) {
            later_decl_vars.insert(bdf->var);
            for (const auto& rd : bdf->ds_after) later_decl_vars.insert(rd.var);
        }
        auto legal = [&](std::size_t len) {
            std::vector<Decl> prefix(dvs->begin(), dvs->begin() + static_cast<std::ptrdiff_t>(len));
            std::set<Ident> rest = later_decl_vars;
            for (std::size_t k = len; k < dvs->size(); ++k) rest.insert((*dvs)[k].var);
            for (const auto& fv : free_vars(prefix))
                if (rest.contains(fv)) return false;
            return true;
        };
        std::size_t chosen = 0;
        for (std::size_t len = dvs->size(); len >= 1; --len) {
            if (!legal(len)) continue;
            bool contains_y = false;
            for (std::size_t k = 0; k < len; ++k)
                if ((*dvs)[k].var == y) contains_y = true;
            // The maximal legal prefix is this one; if y is outside it,
            // every shorter prefix misses y as well.
            if (contains_y) chosen = len;
            break;
        }
        if (chosen == 0)
            return nar("declaration of " + y.name + " cannot be moved out of its block");
        std::vector<Decl> moved(dvs->begin(), dvs->begin() + static_cast<std::ptrdiff_t>(chosen));

        CtxPath path = d.path;
        Rule rule;
        // Shrink frame j's dv prefix.
        if (auto* bdf = std::get_if<BlockDeclF>(&path[j])) {
            bdf->dvs_before.erase(bdf->dvs_before.begin(),
                                  bdf->dvs_before.begin() + static_cast<std::ptrdiff_t>(chosen));
        } else {
            auto& bbf = std::get<BlockBodyF>(path[j]);
            bbf.dvs.erase(bbf.dvs.begin(), bbf.dvs.begin() + static_cast<std::ptrdiff_t>(chosen));
        }
        // Extend the parent block frame.
        Frame& pf = path[j - 1];
        if (auto* pbd = std::get_if<BlockDeclF>(&pf)) {
            pbd->dvs_before.insert(pbd->dvs_before.end(), moved.begin(), moved.end());
            rule = Rule::move_dec;
        } else if (auto* pbb = std::get_if<BlockBodyF>(&pf)) {
            pbb->dvs.insert(pbb->dvs.end(), moved.begin(), moved.end());
            rule = Rule::move_body;
        } else {
            return nar("declaration of " + y.name + " is confined by a non-block context");
        }
        return Step{reconstruct(path, d.hole), rule};
    }

    // Maximal reorder-exposed subset of the block's dvs that is outside
    // the annotation and closed under not depending on kept ones.
    std::vector<Decl> movable_dvs(const BlockE& b) const {
        std::vector<Decl> candidates;
        for (const auto& dv : b.decls)
            if (!b.annot.contains(dv.var)) candidates.push_back(dv);
        bool changed = true;
        while (changed) {
            changed = false;
            std::set<Ident> kept;
            for (const auto& dv : b.decls) kept.insert(dv.var);
            for (const auto& c : candidates) kept.erase(c.var);
            for (std::size_t i = 0; i < candidates.size(); ++i) {
                for (const auto& fv : free_vars(candidates[i].init)) {
                    if (kept.contains(fv)) {
                        candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(i));
                        changed = true;
                        break;
                    }
                }
                if (changed) break;
            }
        }
        return candidates;
    }

    const ClassTable& ct_;
    FreshSupply& supply_;
};

}  // namespace capsule
