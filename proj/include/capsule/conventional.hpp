#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "capsule/ast.hpp"
#include "capsule/binding.hpp"
#include "capsule/values.hpp"

namespace capsule {

// Object state `new C(vs)`: slot values are object ids or integers.
struct ObjState {
    std::string cls;
    std::vector<ExprPtr> slots;
};

// Finite map from object identifiers to object states. Serials are
// allocated monotonically; the domain only grows during reduction.
struct Memory {
    std::map<ObjId, ObjState> objects;
    std::uint64_t next_serial = 1;

    ObjId alloc(ObjState state) {
        ObjId o{next_serial++};
        objects.emplace(o, std::move(state));
        return o;
    }

    const ObjState* find(ObjId o) const {
        auto it = objects.find(o);
        return it == objects.end() ? nullptr : &it->second;
    }
};

// A configuration ⟨e | μ⟩ of the conventional calculus.
struct Config {
    ExprPtr expr;
    Memory mem;
};

inline bool is_conv_value(const ExprPtr& e) { return is<OidE>(e) || is<IntE>(e); }

enum class ConvRule { field_access, field_assign, cnew, invk, dec };

inline const char* conv_rule_name(ConvRule r) {
    switch (r) {
        case ConvRule::field_access: return "field-access";
        case ConvRule::field_assign: return "field-assign";
        case ConvRule::cnew: return "new";
        case ConvRule::invk: return "invk";
        case ConvRule::dec: return "dec";
    }
    return "?";
}

struct ConvDone {
    ExprPtr value;
};
struct ConvStep {
    Config cfg;
    ConvRule rule;
};
struct ConvStuck {
    std::string detail;
};
using ConvOutcome = std::variant<ConvDone, ConvStep, ConvStuck>;

namespace detail {

// Rebuilds a method body with this/parameters renamed to fresh idents
// and all internal binders freshened.
inline ExprPtr instantiate_method_body(const MethodSig& sig, const Ident& fresh_this,
                                       const std::vector<Ident>& fresh_params,
                                       FreshSupply& supply) {
    ExprPtr body = sig.body;
    body = subst_var(body, fresh_this, Ident{"this", 0});
    for (std::size_t i = 0; i < sig.params.size(); ++i)
        body = subst_var(body, fresh_params[i], sig.params[i].second);
    return freshen(body, supply);
}

struct ConvStepper {
    const ClassTable& ct;
    Memory& mem;
    FreshSupply& supply;
    std::optional<ConvRule> rule;
    std::optional<std::string> stuck;

    ExprPtr fail(const std::string& msg) {
        if (!stuck) stuck = msg;
        return nullptr;
    }

    // Returns the rewritten subterm, or null if no step happened below
    // (value reached) or a stuck state was recorded.
    ExprPtr step(const ExprPtr& e) {
        if (is_conv_value(e)) return nullptr;
        if (const auto* v = as<VarE>(e))
            return fail("free variable " + v->ident.name + " at redex");
        if (const auto* f = as<FieldAccessE>(e)) {
            if (!is_conv_value(f->recv)) {
                ExprPtr r = step(f->recv);
                return r ? mk_access(r, f->field) : nullptr;
            }
            return field_access(*f);
        }
        if (const auto* s = as<FieldAssignE>(e)) {
            if (!is_conv_value(s->recv)) {
                ExprPtr r = step(s->recv);
                return r ? mk_assign(r, s->field, s->rhs) : nullptr;
            }
            if (!is_conv_value(s->rhs)) {
                ExprPtr r = step(s->rhs);
                return r ? mk_assign(s->recv, s->field, r) : nullptr;
            }
            return field_assign(*s);
        }
        if (const auto* n = as<NewE>(e)) {
            for (std::size_t i = 0; i < n->args.size(); ++i) {
                if (is_conv_value(n->args[i])) continue;
                ExprPtr r = step(n->args[i]);
                if (!r) return nullptr;
                auto args = n->args;
                args[i] = r;
                return mk_new(n->cls, std::move(args));
            }
            return alloc(*n);
        }
        if (const auto* i = as<InvokeE>(e)) {
            if (!is_conv_value(i->recv)) {
                ExprPtr r = step(i->recv);
                return r ? mk_invoke(r, i->method, i->args) : nullptr;
            }
            for (std::size_t k = 0; k < i->args.size(); ++k) {
                if (is_conv_value(i->args[k])) continue;
                ExprPtr r = step(i->args[k]);
                if (!r) return nullptr;
                auto args = i->args;
                args[k] = r;
                return mk_invoke(i->recv, i->method, std::move(args));
            }
            return invoke(*i);
        }
        const auto* b = as<BlockE>(e);
        if (b->decls.empty()) return fail("empty block in conventional term");
        const Decl& d = b->decls.front();
        if (!is_conv_value(d.init)) {
            ExprPtr r = step(d.init);
            if (!r) return nullptr;
            auto decls = b->decls;
            decls.front().init = r;
            return mk_block(std::move(decls), b->body, b->annot);
        }
        // dec: substitute and drop the declaration; collapse the block
        // when the declaration list empties.
        rule = ConvRule::dec;
        std::vector<Decl> rest(b->decls.begin() + 1, b->decls.end());
        ExprPtr remainder =
            rest.empty() ? b->body : mk_block(std::move(rest), b->body, b->annot);
        return subst_value(remainder, d.init, d.var, supply);
    }

    ExprPtr field_access(const FieldAccessE& f) {
        const auto* o = as<OidE>(f.recv);
        if (!o) return fail("field access on integer");
        const auto* st = mem.find(o->oid);
        if (!st) return fail("dangling object identifier");
        auto idx = ct.field_index(st->cls, f.field);
        if (!idx) return fail("class " + st->cls + " has no field " + f.field);
        rule = ConvRule::field_access;
        return st->slots[*idx];
    }

    ExprPtr field_assign(const FieldAssignE& s) {
        const auto* o = as<OidE>(s.recv);
        if (!o) return fail("field assignment on integer");
        const auto* st = mem.find(o->oid);
        if (!st) return fail("dangling object identifier");
        auto idx = ct.field_index(st->cls, s.field);
        if (!idx) return fail("class " + st->cls + " has no field " + s.field);
        rule = ConvRule::field_assign;
        mem.objects[o->oid].slots[*idx] = s.rhs;
        return s.rhs;
    }

    ExprPtr alloc(const NewE& n) {
        const auto* ci = ct.find_class(n.cls);
        if (!ci) return fail("constructor call on unknown class " + n.cls);
        if (ci->fields.size() != n.args.size())
            return fail("constructor arity mismatch for " + n.cls);
        rule = ConvRule::cnew;
        ObjId o = mem.alloc(ObjState{n.cls, n.args});
        return mk_oid(o);
    }

    ExprPtr invoke(const InvokeE& i) {
        const auto* o = as<OidE>(i.recv);
        if (!o) return fail("method call on integer");
        const auto* st = mem.find(o->oid);
        if (!st) return fail("dangling object identifier");
        const auto* sig = ct.find_method(st->cls, i.method);
        if (!sig) return fail("class " + st->cls + " has no method " + i.method);
        if (sig->params.size() != i.args.size())
            return fail("method arity mismatch for " + st->cls + "." + i.method);
        rule = ConvRule::invk;
        Ident fresh_this = supply.fresh("this");
        std::vector<Ident> fresh_params;
        for (const auto& [pt, px] : sig->params) fresh_params.push_back(supply.fresh_like(px));
        std::vector<Decl> decls;
        decls.push_back(Decl{DeclType{Qualifier::plain, st->cls}, fresh_this, i.recv});
        for (std::size_t k = 0; k < sig->params.size(); ++k)
            decls.push_back(Decl{DeclType{Qualifier::plain, sig->params[k].first.cls},
                                 fresh_params[k], i.args[k]});
        ExprPtr body = instantiate_method_body(*sig, fresh_this, fresh_params, supply);
        return mk_block(std::move(decls), std::move(body), {});
    }
};

}  // namespace detail

// One step of the conventional calculus at the unique maximal
// evaluation context of Fig. 1.
inline ConvOutcome cstep(const Config& cfg, const ClassTable& ct, FreshSupply& supply) {
    if (is_conv_value(cfg.expr)) return ConvDone{cfg.expr};
    Config next = cfg;
    detail::ConvStepper stepper{ct, next.mem, supply, std::nullopt, std::nullopt};
    ExprPtr e2 = stepper.step(cfg.expr);
    if (!e2) return ConvStuck{stepper.stuck.value_or("no applicable rule")};
    next.expr = e2;
    return ConvStep{std::move(next), *stepper.rule};
}

struct ConvTraceEntry {
    ConvRule rule;
    Config cfg;
};

struct ConvFuelExhausted {};
using ConvFinal = std::variant<ConvDone, ConvStuck, ConvFuelExhausted>;

struct ConvRun {
    std::vector<ConvTraceEntry> trace;
    ConvFinal final;
    Config last;
};

inline ConvRun crun(Config cfg, const ClassTable& ct, FreshSupply& supply, std::size_t fuel) {
    ConvRun run{{}, ConvFuelExhausted{}, cfg};
    for (std::size_t i = 0;; ++i) {
        if (is_conv_value(run.last.expr)) {
            run.final = ConvDone{run.last.expr};
            return run;
        }
        if (i >= fuel) {
            run.final = ConvFuelExhausted{};
            return run;
        }
        ConvOutcome out = cstep(run.last, ct, supply);
        if (auto* st = std::get_if<ConvStuck>(&out)) {
            run.final = *st;
            return run;
        }
        auto& step = std::get<ConvStep>(out);
        run.last = step.cfg;
        run.trace.push_back(ConvTraceEntry{step.rule, run.last});
    }
}

}  // namespace capsule
