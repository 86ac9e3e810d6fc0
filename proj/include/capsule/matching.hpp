#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "capsule/ast.hpp"
#include "capsule/binding.hpp"
#include "capsule/context.hpp"
#include "capsule/conventional.hpp"
#include "capsule/values.hpp"

namespace capsule {

// Injective map from object identifiers to variables, labelling the
// matching relation. Only ever extended during a simulation.
struct RhoMap {
    std::map<ObjId, Ident> fwd;
    std::map<Ident, ObjId> bwd;

    bool bind(ObjId o, const Ident& x) {
        auto f = fwd.find(o);
        if (f != fwd.end()) return f->second == x;
        auto b = bwd.find(x);
        if (b != bwd.end()) return b->second == o;
        fwd.emplace(o, x);
        bwd.emplace(x, o);
        return true;
    }

    std::optional<Ident> image(ObjId o) const {
        auto it = fwd.find(o);
        if (it == fwd.end()) return std::nullopt;
        return it->second;
    }

    std::optional<ObjId> preimage(const Ident& x) const {
        auto it = bwd.find(x);
        if (it == bwd.end()) return std::nullopt;
        return it->second;
    }

    bool extends(const RhoMap& base) const {
        for (const auto& [o, x] : base.fwd) {
            auto it = fwd.find(o);
            if (it == fwd.end() || it->second != x) return false;
        }
        return true;
    }

    std::vector<std::pair<ObjId, Ident>> added_over(const RhoMap& base) const {
        std::vector<std::pair<ObjId, Ident>> out;
        for (const auto& [o, x] : fwd)
            if (!base.fwd.contains(o)) out.emplace_back(o, x);
        return out;
    }
};

namespace detail {

// One engine implements both match_check (frozen ρ) and match_infer
// (ρ extended by unification). Non-evaluated declarations are aligned
// through a binder correspondence, so the two calculi may freshen
// method-body copies independently.
struct Matcher {
    const Memory& mem;
    RhoMap rho;
    bool allow_bind;
    std::map<Ident, Ident> benv_fwd;  // syntactic binder -> conventional binder
    std::map<Ident, Ident> benv_bwd;
    std::set<Ident> free_matched;  // vars matched by rule var; must stay outside img(rho)

    bool expr(const ExprPtr& e, const ExprPtr& ce) {
        if (const auto* v = as<VarE>(e)) return var(v->ident, ce);
        if (const auto* i = as<IntE>(e)) {
            const auto* ci = as<IntE>(ce);
            return ci && ci->value == i->value;
        }
        if (is<OidE>(e)) return false;  // syntactic side must be pure
        if (const auto* f = as<FieldAccessE>(e)) {
            const auto* cf = as<FieldAccessE>(ce);
            return cf && cf->field == f->field && expr(f->recv, cf->recv);
        }
        if (const auto* s = as<FieldAssignE>(e)) {
            const auto* cs = as<FieldAssignE>(ce);
            return cs && cs->field == s->field && expr(s->recv, cs->recv) &&
                   expr(s->rhs, cs->rhs);
        }
        if (const auto* n = as<NewE>(e)) {
            const auto* cn = as<NewE>(ce);
            if (!cn || cn->cls != n->cls || cn->args.size() != n->args.size()) return false;
            for (std::size_t k = 0; k < n->args.size(); ++k)
                if (!expr(n->args[k], cn->args[k])) return false;
            return true;
        }
        if (const auto* iv = as<InvokeE>(e)) {
            const auto* civ = as<InvokeE>(ce);
            if (!civ || civ->method != iv->method || civ->args.size() != iv->args.size())
                return false;
            if (!expr(iv->recv, civ->recv)) return false;
            for (std::size_t k = 0; k < iv->args.size(); ++k)
                if (!expr(iv->args[k], civ->args[k])) return false;
            return true;
        }
        return block(*as<BlockE>(e), ce);
    }

    bool var(const Ident& x, const ExprPtr& ce) {
        auto b = benv_fwd.find(x);
        if (b != benv_fwd.end()) {
            const auto* cv = as<VarE>(ce);
            return cv && cv->ident == b->second;
        }
        if (const auto* co = as<OidE>(ce)) {
            auto img = rho.image(co->oid);
            if (img) return *img == x;
            if (!allow_bind) return false;
            if (rho.preimage(x)) return false;
            return rho.bind(co->oid, x);
        }
        const auto* cv = as<VarE>(ce);
        if (!cv || cv->ident != x) return false;
        if (benv_bwd.contains(cv->ident)) return false;
        free_matched.insert(x);
        return true;
    }

    // Fig. 5 block: the dv group is matched against memory and removed
    // on the conventional side; the unevaluated remainder matches the
    // conventional block declaration-wise. Interleaved dvs are exposed
    // by the reorder congruence first.
    bool block(const BlockE& b, const ExprPtr& ce) {
        std::vector<const Decl*> dvs, ds;
        for (const auto& d : b.decls)
            (is_evaluated_decl(d) ? dvs : ds).push_back(&d);
        for (const auto* dv : dvs)
            if (!ev_dec(*dv)) return false;
        if (ds.empty()) return expr(b.body, ce);
        const auto* cb = as<BlockE>(ce);
        if (!cb || cb->decls.size() != ds.size()) return false;
        for (std::size_t k = 0; k < ds.size(); ++k) {
            benv_fwd[ds[k]->var] = cb->decls[k].var;
            benv_bwd[cb->decls[k].var] = ds[k]->var;
        }
        for (std::size_t k = 0; k < ds.size(); ++k) {
            if (ds[k]->type.cls != cb->decls[k].type.cls) return false;
            if (!expr(ds[k]->init, cb->decls[k].init)) return false;
        }
        return expr(b.body, cb->body);
    }

    // ev-dec: μ(ρ⁻¹(x)) = new C(ρ⁻¹(x1), ..., ρ⁻¹(xn)).
    bool ev_dec(const Decl& dv) {
        const auto* n = as<NewE>(dv.init);
        auto pre = rho.preimage(dv.var);
        if (pre) return ev_dec_at(dv, *pre);
        if (!allow_bind) return false;
        // Unbound dv variable: unify with the first unmapped object of
        // the right shape, in serial order.
        for (const auto& [oid, st] : mem.objects) {
            if (rho.image(oid)) continue;
            if (st.cls != n->cls || st.slots.size() != n->args.size()) continue;
            Matcher trial = *this;
            if (!trial.rho.bind(oid, dv.var)) continue;
            if (trial.ev_dec_at(dv, oid)) {
                *this = std::move(trial);
                return true;
            }
        }
        return false;
    }

    bool ev_dec_at(const Decl& dv, ObjId oid) {
        const auto* n = as<NewE>(dv.init);
        const auto* st = mem.find(oid);
        if (!st || st->cls != n->cls || st->slots.size() != n->args.size()) return false;
        for (std::size_t k = 0; k < n->args.size(); ++k)
            if (!expr(n->args[k], st->slots[k])) return false;
        return true;
    }

    bool finish() {
        for (const auto& x : free_matched)
            if (rho.preimage(x)) return false;
        return true;
    }
};

}  // namespace detail

// Fig. 5 check: does e match ⟨ê | μ⟩ under ρ?
inline bool match_check(const ExprPtr& e, const Config& cfg, const RhoMap& rho) {
    detail::Matcher m{cfg.mem, rho, /*allow_bind=*/false, {}, {}, {}};
    return m.expr(e, cfg.expr) && m.finish();
}

// Minimal ρ' ⊇ base with match_check(e, cfg, ρ'), or nothing. Built by
// unification over the Fig. 5 rules.
inline std::optional<RhoMap> match_infer(const ExprPtr& e, const Config& cfg,
                                         const RhoMap& base) {
    detail::Matcher m{cfg.mem, base, /*allow_bind=*/true, {}, {}, {}};
    if (!m.expr(e, cfg.expr) || !m.finish()) return std::nullopt;
    return m.rho;
}

// Canonical erasure of a pure term to a conventional configuration:
// every evaluated declaration becomes a memory entry, its variable is
// mapped by ρ, and remaining occurrences become object identifiers.
struct EraseResult {
    Config cfg;
    RhoMap rho;
};

inline std::optional<EraseResult> erase(const ExprPtr& e, std::string* error = nullptr) {
    Memory mem;
    RhoMap rho;
    bool failed = false;
    std::string why;

    std::function<ExprPtr(const ExprPtr&)> go = [&](const ExprPtr& x) -> ExprPtr {
        if (failed) return x;
        if (const auto* v = as<VarE>(x)) {
            if (auto pre = rho.preimage(v->ident)) return mk_oid(*pre);
            return x;
        }
        if (is<IntE>(x)) return x;
        if (is<OidE>(x)) {
            failed = true;
            why = "term is not pure";
            return x;
        }
        if (const auto* f = as<FieldAccessE>(x)) return mk_access(go(f->recv), f->field);
        if (const auto* s = as<FieldAssignE>(x))
            return mk_assign(go(s->recv), s->field, go(s->rhs));
        if (const auto* n = as<NewE>(x)) {
            std::vector<ExprPtr> args;
            for (const auto& a : n->args) args.push_back(go(a));
            return mk_new(n->cls, std::move(args));
        }
        if (const auto* iv = as<InvokeE>(x)) {
            ExprPtr r = go(iv->recv);
            std::vector<ExprPtr> args;
            for (const auto& a : iv->args) args.push_back(go(a));
            return mk_invoke(std::move(r), iv->method, std::move(args));
        }
        const auto* b = as<BlockE>(x);
        std::vector<const Decl*> dvs, ds;
        for (const auto& d : b->decls)
            (is_evaluated_decl(d) ? dvs : ds).push_back(&d);
        // Allocate ids for the whole dv group first: groups may be
        // mutually referential.
        for (const auto* dv : dvs) {
            const auto* n = as<NewE>(dv->init);
            ObjId o = mem.alloc(ObjState{n->cls, {}});
            if (!rho.bind(o, dv->var)) {
                failed = true;
                why = "duplicate binder in erasure";
            }
        }
        for (const auto* dv : dvs) {
            const auto* n = as<NewE>(dv->init);
            ObjId o = *rho.preimage(dv->var);
            std::vector<ExprPtr> slots;
            for (const auto& a : n->args) {
                if (const auto* av = as<VarE>(a)) {
                    auto pre = rho.preimage(av->ident);
                    if (!pre) {
                        failed = true;
                        why = "evaluated declaration references non-evaluated variable " +
                              av->ident.name;
                        return x;
                    }
                    slots.push_back(mk_oid(*pre));
                } else {
                    slots.push_back(a);  // integer literal
                }
            }
            mem.objects[o].slots = std::move(slots);
        }
        std::vector<Decl> decls;
        for (const auto* d : ds)
            decls.push_back(Decl{DeclType{Qualifier::plain, d->type.cls}, d->var, go(d->init)});
        ExprPtr body = go(b->body);
        if (decls.empty()) return body;
        return mk_block(std::move(decls), std::move(body), {});
    };

    ExprPtr ce = go(e);
    if (failed) {
        if (error) *error = why;
        return std::nullopt;
    }
    return EraseResult{Config{ce, std::move(mem)}, std::move(rho)};
}

// Matching of evaluation contexts (Fig. 6), used to validate Lemma 1 on
// sampled decompositions: the syntactic path matches the conventional
// path frame-wise, with block-body frames transparent on the
// conventional side. On success returns a matcher carrying the binder
// correspondence for the hole.
inline std::optional<detail::Matcher> match_context(const CtxPath& spath, const CtxPath& cpath,
                                                    const Config& cfg, const RhoMap& rho) {
    detail::Matcher m{cfg.mem, rho, /*allow_bind=*/false, {}, {}, {}};
    std::size_t ci = 0;
    auto atom = [&](const ExprPtr& a, const ExprPtr& ca) { return m.expr(a, ca); };
    for (const auto& sf : spath) {
        if (const auto* bb = std::get_if<BlockBodyF>(&sf)) {
            for (const auto& dv : bb->dvs)
                if (!m.ev_dec(dv)) return std::nullopt;
            continue;  // C-blk-body: no conventional frame
        }
        if (ci >= cpath.size()) return std::nullopt;
        const Frame& cf = cpath[ci++];
        if (const auto* f = std::get_if<FieldAccessRecvF>(&sf)) {
            const auto* g = std::get_if<FieldAccessRecvF>(&cf);
            if (!g || g->field != f->field) return std::nullopt;
            continue;
        }
        if (const auto* f = std::get_if<FieldAssignRecvF>(&sf)) {
            const auto* g = std::get_if<FieldAssignRecvF>(&cf);
            if (!g || g->field != f->field || !m.expr(f->rhs, g->rhs)) return std::nullopt;
            continue;
        }
        if (const auto* f = std::get_if<FieldAssignRhsF>(&sf)) {
            const auto* g = std::get_if<FieldAssignRhsF>(&cf);
            if (!g || g->field != f->field || !atom(f->recv, g->recv)) return std::nullopt;
            continue;
        }
        if (const auto* f = std::get_if<NewArgF>(&sf)) {
            const auto* g = std::get_if<NewArgF>(&cf);
            if (!g || g->cls != f->cls || g->done.size() != f->done.size() ||
                g->pending.size() != f->pending.size())
                return std::nullopt;
            for (std::size_t k = 0; k < f->done.size(); ++k)
                if (!atom(f->done[k], g->done[k])) return std::nullopt;
            for (std::size_t k = 0; k < f->pending.size(); ++k)
                if (!m.expr(f->pending[k], g->pending[k])) return std::nullopt;
            continue;
        }
        if (const auto* f = std::get_if<InvokeRecvF>(&sf)) {
            const auto* g = std::get_if<InvokeRecvF>(&cf);
            if (!g || g->method != f->method || g->args.size() != f->args.size())
                return std::nullopt;
            for (std::size_t k = 0; k < f->args.size(); ++k)
                if (!m.expr(f->args[k], g->args[k])) return std::nullopt;
            continue;
        }
        if (const auto* f = std::get_if<InvokeArgF>(&sf)) {
            const auto* g = std::get_if<InvokeArgF>(&cf);
            if (!g || g->method != f->method || g->done.size() != f->done.size() ||
                g->pending.size() != f->pending.size() || !atom(f->recv, g->recv))
                return std::nullopt;
            for (std::size_t k = 0; k < f->done.size(); ++k)
                if (!m.expr(f->done[k], g->done[k])) return std::nullopt;
            for (std::size_t k = 0; k < f->pending.size(); ++k)
                if (!m.expr(f->pending[k], g->pending[k])) return std::nullopt;
            continue;
        }
        const auto* f = std::get_if<BlockDeclF>(&sf);
        const auto* g = std::get_if<BlockDeclF>(&cf);
        if (!f || !g) return std::nullopt;
        for (const auto& dv : f->dvs_before)
            if (!m.ev_dec(dv)) return std::nullopt;
        if (!g->dvs_before.empty()) return std::nullopt;
        if (f->dtype.cls != g->dtype.cls) return std::nullopt;
        if (f->ds_after.size() != g->ds_after.size()) return std::nullopt;
        m.benv_fwd[f->var] = g->var;
        m.benv_bwd[g->var] = f->var;
        for (std::size_t k = 0; k < f->ds_after.size(); ++k) {
            m.benv_fwd[f->ds_after[k].var] = g->ds_after[k].var;
            m.benv_bwd[g->ds_after[k].var] = f->ds_after[k].var;
        }
        for (std::size_t k = 0; k < f->ds_after.size(); ++k) {
            if (f->ds_after[k].type.cls != g->ds_after[k].type.cls) return std::nullopt;
            if (!m.expr(f->ds_after[k].init, g->ds_after[k].init)) return std::nullopt;
        }
        if (!m.expr(f->body, g->body)) return std::nullopt;
    }
    if (ci != cpath.size()) return std::nullopt;
    return m;
}

// Conventional-calculus maximal decomposition (Fig. 1's E grammar),
// for the Lemma 1 validation.
inline Decomposition conv_decompose(const ExprPtr& e) {
    Decomposition d;
    std::function<void(const ExprPtr&)> go = [&](const ExprPtr& x) {
        if (const auto* f = as<FieldAccessE>(x)) {
            if (is_conv_value(f->recv)) {
                d.hole = x;
                return;
            }
            d.path.push_back(FieldAccessRecvF{f->field});
            go(f->recv);
            return;
        }
        if (const auto* s = as<FieldAssignE>(x)) {
            if (!is_conv_value(s->recv)) {
                d.path.push_back(FieldAssignRecvF{s->field, s->rhs});
                go(s->recv);
                return;
            }
            if (!is_conv_value(s->rhs)) {
                d.path.push_back(FieldAssignRhsF{s->recv, s->field});
                go(s->rhs);
                return;
            }
            d.hole = x;
            return;
        }
        if (const auto* n = as<NewE>(x)) {
            for (std::size_t i = 0; i < n->args.size(); ++i) {
                if (is_conv_value(n->args[i])) continue;
                d.path.push_back(
                    NewArgF{n->cls,
                            {n->args.begin(), n->args.begin() + static_cast<std::ptrdiff_t>(i)},
                            {n->args.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                             n->args.end()}});
                go(n->args[i]);
                return;
            }
            d.hole = x;
            return;
        }
        if (const auto* iv = as<InvokeE>(x)) {
            if (!is_conv_value(iv->recv)) {
                d.path.push_back(InvokeRecvF{iv->method, iv->args});
                go(iv->recv);
                return;
            }
            for (std::size_t i = 0; i < iv->args.size(); ++i) {
                if (is_conv_value(iv->args[i])) continue;
                d.path.push_back(
                    InvokeArgF{iv->recv,
                               iv->method,
                               {iv->args.begin(), iv->args.begin() + static_cast<std::ptrdiff_t>(i)},
                               {iv->args.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                                iv->args.end()}});
                go(iv->args[i]);
                return;
            }
            d.hole = x;
            return;
        }
        if (const auto* b = as<BlockE>(x)) {
            if (!b->decls.empty() && !is_conv_value(b->decls.front().init)) {
                const Decl& first = b->decls.front();
                d.path.push_back(BlockDeclF{{},
                                            first.type,
                                            first.var,
                                            {b->decls.begin() + 1, b->decls.end()},
                                            b->body,
                                            b->annot});
                go(first.init);
                return;
            }
            d.hole = x;
            return;
        }
        d.hole = x;
    };
    go(e);
    return d;
}

}  // namespace capsule
