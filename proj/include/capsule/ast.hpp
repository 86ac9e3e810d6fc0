#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace capsule {

// A variable. Freshening assigns globally unique ids to binding
// occurrences; id 0 means "as written in source".
struct Ident {
    std::string name;
    std::uint32_t id = 0;

    friend auto operator<=>(const Ident&, const Ident&) = default;
};

// Global heap name of the conventional calculus. Not subject to
// alpha-renaming; serials are allocated monotonically and never reused.
struct ObjId {
    std::uint64_t serial = 0;

    friend auto operator<=>(const ObjId&, const ObjId&) = default;
};

enum class Qualifier { plain, affine };

// Declaration type `q C`. The class name may be the primitive "int".
struct DeclType {
    Qualifier qual = Qualifier::plain;
    std::string cls;

    friend bool operator==(const DeclType&, const DeclType&) = default;
};

inline constexpr const char* int_type_name = "int";

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Decl {
    DeclType type;
    Ident var;
    ExprPtr init;
};

struct VarE {
    Ident ident;
};

struct OidE {
    ObjId oid;
};

struct IntE {
    long long value = 0;
};

struct FieldAccessE {
    ExprPtr recv;
    std::string field;
};

struct FieldAssignE {
    ExprPtr recv;
    std::string field;
    ExprPtr rhs;
};

struct NewE {
    std::string cls;
    std::vector<ExprPtr> args;
};

struct InvokeE {
    ExprPtr recv;
    std::string method;
    std::vector<ExprPtr> args;
};

// Block `{ds; e}^X`. The annotation is a subset of the declared
// variables; it gates the affine case of move-dec.
struct BlockE {
    std::vector<Decl> decls;
    ExprPtr body;
    std::set<Ident> annot;
};

struct Expr {
    std::variant<VarE, OidE, IntE, FieldAccessE, FieldAssignE, NewE, InvokeE, BlockE> node;
};

inline ExprPtr mk(Expr e) { return std::make_shared<const Expr>(std::move(e)); }

inline ExprPtr mk_var(Ident x) { return mk(Expr{VarE{std::move(x)}}); }
inline ExprPtr mk_var(std::string name, std::uint32_t id = 0) {
    return mk_var(Ident{std::move(name), id});
}
inline ExprPtr mk_oid(ObjId o) { return mk(Expr{OidE{o}}); }
inline ExprPtr mk_int(long long v) { return mk(Expr{IntE{v}}); }
inline ExprPtr mk_access(ExprPtr recv, std::string f) {
    return mk(Expr{FieldAccessE{std::move(recv), std::move(f)}});
}
inline ExprPtr mk_assign(ExprPtr recv, std::string f, ExprPtr rhs) {
    return mk(Expr{FieldAssignE{std::move(recv), std::move(f), std::move(rhs)}});
}
inline ExprPtr mk_new(std::string cls, std::vector<ExprPtr> args) {
    return mk(Expr{NewE{std::move(cls), std::move(args)}});
}
inline ExprPtr mk_invoke(ExprPtr recv, std::string m, std::vector<ExprPtr> args) {
    return mk(Expr{InvokeE{std::move(recv), std::move(m), std::move(args)}});
}
inline ExprPtr mk_block(std::vector<Decl> ds, ExprPtr body, std::set<Ident> annot = {}) {
    return mk(Expr{BlockE{std::move(ds), std::move(body), std::move(annot)}});
}

template <class T>
const T* as(const ExprPtr& e) {
    return std::get_if<T>(&e->node);
}

template <class T>
bool is(const ExprPtr& e) {
    return std::holds_alternative<T>(e->node);
}

// Atomic terms are the `xs` of the grammars: variables, integer
// literals and (in conventional-calculus terms) object identifiers.
inline bool is_atomic(const ExprPtr& e) {
    return is<VarE>(e) || is<IntE>(e) || is<OidE>(e);
}

// Evaluated declaration `C x = new C(xs)`: plain qualifier, constructor
// of the declared class, all arguments atomic.
inline bool is_evaluated_decl(const Decl& d) {
    if (d.type.qual != Qualifier::plain) return false;
    const auto* n = as<NewE>(d.init);
    if (!n || n->cls != d.type.cls) return false;
    for (const auto& a : n->args)
        if (!is_atomic(a)) return false;
    return true;
}

struct MethodSig {
    std::vector<std::pair<DeclType, Ident>> params;
    ExprPtr body;
    std::string ret_cls;
};

struct ClassInfo {
    std::vector<std::pair<std::string, std::string>> fields;  // (class, field), ordered
    std::map<std::string, MethodSig> methods;
};

struct ClassTable {
    std::map<std::string, ClassInfo> classes;

    const ClassInfo* find_class(const std::string& c) const {
        auto it = classes.find(c);
        return it == classes.end() ? nullptr : &it->second;
    }

    // Index of field f in fields(C), if any.
    std::optional<std::size_t> field_index(const std::string& c, const std::string& f) const {
        const auto* ci = find_class(c);
        if (!ci) return std::nullopt;
        for (std::size_t i = 0; i < ci->fields.size(); ++i)
            if (ci->fields[i].second == f) return i;
        return std::nullopt;
    }

    const MethodSig* find_method(const std::string& c, const std::string& m) const {
        const auto* ci = find_class(c);
        if (!ci) return nullptr;
        auto it = ci->methods.find(m);
        return it == ci->methods.end() ? nullptr : &it->second;
    }
};

// Monotone supply of binder ids for one reduction session.
class FreshSupply {
  public:
    explicit FreshSupply(std::uint32_t start = 0) : next_(start) {}

    Ident fresh(const std::string& name) { return Ident{name, ++next_}; }
    Ident fresh_like(const Ident& x) { return Ident{x.name, ++next_}; }

    std::uint32_t watermark() const { return next_; }
    void raise_to(std::uint32_t n) {
        if (n > next_) next_ = n;
    }

  private:
    std::uint32_t next_;
};

// Structural equality, including binder ids and annotations.
inline bool equal(const ExprPtr& a, const ExprPtr& b);

inline bool equal(const Decl& a, const Decl& b) {
    return a.type == b.type && a.var == b.var && equal(a.init, b.init);
}

inline bool equal(const ExprPtr& a, const ExprPtr& b) {
    if (a == b) return true;
    if (a->node.index() != b->node.index()) return false;
    if (const auto* v = as<VarE>(a)) return v->ident == as<VarE>(b)->ident;
    if (const auto* o = as<OidE>(a)) return o->oid == as<OidE>(b)->oid;
    if (const auto* i = as<IntE>(a)) return i->value == as<IntE>(b)->value;
    if (const auto* fa = as<FieldAccessE>(a)) {
        const auto* fb = as<FieldAccessE>(b);
        return fa->field == fb->field && equal(fa->recv, fb->recv);
    }
    if (const auto* sa = as<FieldAssignE>(a)) {
        const auto* sb = as<FieldAssignE>(b);
        return sa->field == sb->field && equal(sa->recv, sb->recv) && equal(sa->rhs, sb->rhs);
    }
    if (const auto* na = as<NewE>(a)) {
        const auto* nb = as<NewE>(b);
        if (na->cls != nb->cls || na->args.size() != nb->args.size()) return false;
        for (std::size_t i = 0; i < na->args.size(); ++i)
            if (!equal(na->args[i], nb->args[i])) return false;
        return true;
    }
    if (const auto* ia = as<InvokeE>(a)) {
        const auto* ib = as<InvokeE>(b);
        if (ia->method != ib->method || ia->args.size() != ib->args.size()) return false;
        if (!equal(ia->recv, ib->recv)) return false;
        for (std::size_t i = 0; i < ia->args.size(); ++i)
            if (!equal(ia->args[i], ib->args[i])) return false;
        return true;
    }
    const auto* ba = as<BlockE>(a);
    const auto* bb = as<BlockE>(b);
    if (ba->decls.size() != bb->decls.size() || ba->annot != bb->annot) return false;
    for (std::size_t i = 0; i < ba->decls.size(); ++i)
        if (!equal(ba->decls[i], bb->decls[i])) return false;
    return equal(ba->body, bb->body);
}

}  // namespace capsule
