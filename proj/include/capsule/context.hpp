#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "capsule/ast.hpp"
#include "capsule/binding.hpp"
#include "capsule/values.hpp"

namespace capsule {

// One frame of an evaluation context, following Fig. 2's grammar. A
// path of frames plus the term at the hole reconstructs the term.
struct FieldAccessRecvF {
    std::string field;
};
struct FieldAssignRecvF {
    std::string field;
    ExprPtr rhs;
};
struct FieldAssignRhsF {
    ExprPtr recv;  // atomic
    std::string field;
};
struct NewArgF {
    std::string cls;
    std::vector<ExprPtr> done;  // atomic
    std::vector<ExprPtr> pending;
};
struct InvokeRecvF {
    std::string method;
    std::vector<ExprPtr> args;
};
struct InvokeArgF {
    ExprPtr recv;  // atomic
    std::string method;
    std::vector<ExprPtr> done;  // values
    std::vector<ExprPtr> pending;
};
struct BlockDeclF {
    std::vector<Decl> dvs_before;
    DeclType dtype;
    Ident var;
    std::vector<Decl> ds_after;
    ExprPtr body;
    std::set<Ident> annot;
};
struct BlockBodyF {
    std::vector<Decl> dvs;
    std::set<Ident> annot;
};

using Frame = std::variant<FieldAccessRecvF, FieldAssignRecvF, FieldAssignRhsF, NewArgF,
                           InvokeRecvF, InvokeArgF, BlockDeclF, BlockBodyF>;

using CtxPath = std::vector<Frame>;  // outermost first

struct Decomposition {
    CtxPath path;
    ExprPtr hole;
};

inline ExprPtr plug_frame(const Frame& fr, ExprPtr hole) {
    if (const auto* f = std::get_if<FieldAccessRecvF>(&fr)) return mk_access(hole, f->field);
    if (const auto* s = std::get_if<FieldAssignRecvF>(&fr))
        return mk_assign(hole, s->field, s->rhs);
    if (const auto* s = std::get_if<FieldAssignRhsF>(&fr))
        return mk_assign(s->recv, s->field, hole);
    if (const auto* n = std::get_if<NewArgF>(&fr)) {
        std::vector<ExprPtr> args = n->done;
        args.push_back(std::move(hole));
        args.insert(args.end(), n->pending.begin(), n->pending.end());
        return mk_new(n->cls, std::move(args));
    }
    if (const auto* i = std::get_if<InvokeRecvF>(&fr)) return mk_invoke(hole, i->method, i->args);
    if (const auto* i = std::get_if<InvokeArgF>(&fr)) {
        std::vector<ExprPtr> args = i->done;
        args.push_back(std::move(hole));
        args.insert(args.end(), i->pending.begin(), i->pending.end());
        return mk_invoke(i->recv, i->method, std::move(args));
    }
    if (const auto* b = std::get_if<BlockDeclF>(&fr)) {
        std::vector<Decl> decls = b->dvs_before;
        decls.push_back(Decl{b->dtype, b->var, std::move(hole)});
        decls.insert(decls.end(), b->ds_after.begin(), b->ds_after.end());
        return mk_block(std::move(decls), b->body, b->annot);
    }
    const auto& b = std::get<BlockBodyF>(fr);
    return mk_block(b.dvs, std::move(hole), b.annot);
}

inline ExprPtr reconstruct(const CtxPath& path, ExprPtr hole) {
    for (auto it = path.rbegin(); it != path.rend(); ++it) hole = plug_frame(*it, hole);
    return hole;
}

// Variables bound by one frame over its hole.
inline std::set<Ident> frame_binders(const Frame& fr) {
    std::set<Ident> out;
    if (const auto* b = std::get_if<BlockDeclF>(&fr)) {
        for (const auto& d : b->dvs_before) out.insert(d.var);
        out.insert(b->var);
        for (const auto& d : b->ds_after) out.insert(d.var);
    } else if (const auto* b2 = std::get_if<BlockBodyF>(&fr)) {
        for (const auto& d : b2->dvs) out.insert(d.var);
    }
    return out;
}

// HB(E): the union over the path's block frames of their declared
// variables.
inline std::set<Ident> hole_binders(const CtxPath& path) {
    std::set<Ident> out;
    for (const auto& fr : path)
        for (const auto& x : frame_binders(fr)) out.insert(x);
    return out;
}

inline std::set<Ident> hole_binders_below(const CtxPath& path, std::size_t frame_index) {
    std::set<Ident> out;
    for (std::size_t i = frame_index + 1; i < path.size(); ++i)
        for (const auto& x : frame_binders(path[i])) out.insert(x);
    return out;
}

// The object state found in a block context's dv prefix.
struct DvState {
    std::string cls;
    std::vector<ExprPtr> args;  // atomic
};

struct EnclosingDecl {
    std::size_t frame_index;
    DvState state;
    std::set<Ident> inner;  // variables declared strictly below the frame
};

inline const std::vector<Decl>* frame_dv_prefix(const Frame& fr) {
    if (const auto* b = std::get_if<BlockDeclF>(&fr)) return &b->dvs_before;
    if (const auto* b = std::get_if<BlockBodyF>(&fr)) return &b->dvs;
    return nullptr;
}

// dec(E_b, x) together with inner(E_b): the innermost block frame whose
// dv prefix declares x. Returns nothing for free or not-yet-evaluated
// variables.
inline std::optional<EnclosingDecl> lookup_enclosing(const CtxPath& path, const Ident& x) {
    for (std::size_t i = path.size(); i-- > 0;) {
        const auto* dvs = frame_dv_prefix(path[i]);
        if (!dvs) continue;
        for (const auto& d : *dvs) {
            if (d.var != x) continue;
            const auto* n = as<NewE>(d.init);
            return EnclosingDecl{i, DvState{n->cls, n->args}, hole_binders_below(path, i)};
        }
    }
    return std::nullopt;
}

namespace detail {

inline void descend(const ExprPtr& e, CtxPath& path, ExprPtr& hole);

inline void descend_into_slot(const ExprPtr& sub, Frame fr, CtxPath& path, ExprPtr& hole) {
    path.push_back(std::move(fr));
    if (is_value(sub)) {
        hole = sub;  // a block value at a non-transparent position
    } else {
        descend(sub, path, hole);
    }
}

inline void descend(const ExprPtr& e, CtxPath& path, ExprPtr& hole) {
    if (is_atomic(e)) {
        hole = e;
        return;
    }
    if (const auto* f = as<FieldAccessE>(e)) {
        if (is_atomic(f->recv)) {
            hole = e;
            return;
        }
        descend_into_slot(f->recv, FieldAccessRecvF{f->field}, path, hole);
        return;
    }
    if (const auto* s = as<FieldAssignE>(e)) {
        if (!is_atomic(s->recv)) {
            descend_into_slot(s->recv, FieldAssignRecvF{s->field, s->rhs}, path, hole);
            return;
        }
        if (!is_atomic(s->rhs)) {
            descend_into_slot(s->rhs, FieldAssignRhsF{s->recv, s->field}, path, hole);
            return;
        }
        hole = e;
        return;
    }
    if (const auto* n = as<NewE>(e)) {
        for (std::size_t i = 0; i < n->args.size(); ++i) {
            if (is_atomic(n->args[i])) continue;
            NewArgF fr{n->cls,
                       {n->args.begin(), n->args.begin() + static_cast<std::ptrdiff_t>(i)},
                       {n->args.begin() + static_cast<std::ptrdiff_t>(i) + 1, n->args.end()}};
            descend_into_slot(n->args[i], std::move(fr), path, hole);
            return;
        }
        hole = e;
        return;
    }
    if (const auto* iv = as<InvokeE>(e)) {
        if (!is_atomic(iv->recv)) {
            descend_into_slot(iv->recv, InvokeRecvF{iv->method, iv->args}, path, hole);
            return;
        }
        for (std::size_t i = 0; i < iv->args.size(); ++i) {
            if (is_value(iv->args[i])) continue;  // method arguments may be block values
            InvokeArgF fr{iv->recv,
                          iv->method,
                          {iv->args.begin(), iv->args.begin() + static_cast<std::ptrdiff_t>(i)},
                          {iv->args.begin() + static_cast<std::ptrdiff_t>(i) + 1, iv->args.end()}};
            path.push_back(std::move(fr));
            descend(iv->args[i], path, hole);
            return;
        }
        hole = e;
        return;
    }
    const auto* b = as<BlockE>(e);
    std::size_t k = 0;
    while (k < b->decls.size() && is_evaluated_decl(b->decls[k])) ++k;
    if (k < b->decls.size()) {
        const Decl& d = b->decls[k];
        BlockDeclF fr{{b->decls.begin(), b->decls.begin() + static_cast<std::ptrdiff_t>(k)},
                      d.type,
                      d.var,
                      {b->decls.begin() + static_cast<std::ptrdiff_t>(k) + 1, b->decls.end()},
                      b->body,
                      b->annot};
        path.push_back(std::move(fr));
        if (is_value(d.init)) {
            hole = d.init;
        } else {
            descend(d.init, path, hole);
        }
        return;
    }
    path.push_back(BlockBodyF{b->decls, b->annot});
    if (is_value(b->body)) {
        hole = b->body;
    } else {
        descend(b->body, path, hole);
    }
}

}  // namespace detail

// Unique maximal decomposition per the Fig. 2 context grammar: blocks
// are entered at the first unevaluated declaration's initializer, else
// at the body; receivers before arguments, arguments left to right.
// A hole that is itself a value is returned as-is; additionally a
// variable or literal in body position is popped to its enclosing
// finished block so the scheduler sees the whole value unit.
inline Decomposition decompose(const ExprPtr& e) {
    Decomposition d;
    detail::descend(e, d.path, d.hole);
    while (!d.path.empty() && is_atomic(d.hole)) {
        const auto* bb = std::get_if<BlockBodyF>(&d.path.back());
        if (!bb) break;
        d.hole = plug_frame(d.path.back(), d.hole);
        d.path.pop_back();
    }
    return d;
}

}  // namespace capsule
