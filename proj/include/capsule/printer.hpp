#pragma once

#include <map>
#include <sstream>
#include <string>

#include "capsule/ast.hpp"
#include "capsule/conventional.hpp"

namespace capsule {

namespace detail {

// Decides which identifiers need their unique-id suffix: only names
// borne by more than one distinct Ident in the rendered term.
struct NameTable {
    std::map<std::string, std::set<std::uint32_t>> ids;

    void collect(const ExprPtr& e) {
        if (const auto* v = as<VarE>(e)) {
            ids[v->ident.name].insert(v->ident.id);
        } else if (const auto* f = as<FieldAccessE>(e)) {
            collect(f->recv);
        } else if (const auto* s = as<FieldAssignE>(e)) {
            collect(s->recv);
            collect(s->rhs);
        } else if (const auto* n = as<NewE>(e)) {
            for (const auto& a : n->args) collect(a);
        } else if (const auto* i = as<InvokeE>(e)) {
            collect(i->recv);
            for (const auto& a : i->args) collect(a);
        } else if (const auto* b = as<BlockE>(e)) {
            for (const auto& d : b->decls) {
                ids[d.var.name].insert(d.var.id);
                collect(d.init);
            }
            collect(b->body);
            for (const auto& a : b->annot) ids[a.name].insert(a.id);
        }
    }

    std::string show(const Ident& x) const {
        auto it = ids.find(x.name);
        if (it != ids.end() && it->second.size() > 1) return x.name + "#" + std::to_string(x.id);
        return x.name;
    }
};

struct Printer {
    NameTable names;

    void expr(std::ostringstream& os, const ExprPtr& e) const {
        if (const auto* v = as<VarE>(e)) {
            os << names.show(v->ident);
        } else if (const auto* o = as<OidE>(e)) {
            os << "#" << o->oid.serial;
        } else if (const auto* i = as<IntE>(e)) {
            os << i->value;
        } else if (const auto* f = as<FieldAccessE>(e)) {
            recv(os, f->recv);
            os << "." << f->field;
        } else if (const auto* s = as<FieldAssignE>(e)) {
            recv(os, s->recv);
            os << "." << s->field << "=";
            expr(os, s->rhs);
        } else if (const auto* n = as<NewE>(e)) {
            os << "new " << n->cls << "(";
            for (std::size_t k = 0; k < n->args.size(); ++k) {
                if (k) os << ",";
                expr(os, n->args[k]);
            }
            os << ")";
        } else if (const auto* iv = as<InvokeE>(e)) {
            recv(os, iv->recv);
            os << "." << iv->method << "(";
            for (std::size_t k = 0; k < iv->args.size(); ++k) {
                if (k) os << ",";
                expr(os, iv->args[k]);
            }
            os << ")";
        } else {
            block(os, *as<BlockE>(e));
        }
    }

    // Receivers follow the surface grammar: identifiers, literals,
    // constructor calls and blocks stand alone; anything else is
    // parenthesized.
    void recv(std::ostringstream& os, const ExprPtr& e) const {
        bool plain = is<VarE>(e) || is<OidE>(e) || is<IntE>(e) || is<NewE>(e) || is<BlockE>(e) ||
                     is<FieldAccessE>(e) || is<InvokeE>(e);
        if (plain) {
            expr(os, e);
        } else {
            os << "(";
            expr(os, e);
            os << ")";
        }
    }

    void decl(std::ostringstream& os, const Decl& d) const {
        if (d.type.qual == Qualifier::affine) os << "a ";
        os << d.type.cls << " " << names.show(d.var) << "=";
        expr(os, d.init);
    }

    void block(std::ostringstream& os, const BlockE& b) const {
        os << "{";
        for (const auto& d : b.decls) {
            decl(os, d);
            os << "; ";
        }
        expr(os, b.body);
        os << "}";
        if (!b.annot.empty()) {
            os << "^[";
            bool first = true;
            for (const auto& a : b.annot) {
                if (!first) os << ",";
                first = false;
                os << names.show(a);
            }
            os << "]";
        }
    }
};

}  // namespace detail

inline std::string render(const ExprPtr& e) {
    detail::Printer p;
    p.names.collect(e);
    std::ostringstream os;
    p.expr(os, e);
    return os.str();
}

inline std::string render(const Memory& mem) {
    detail::Printer p;
    std::ostringstream os;
    bool first = true;
    for (const auto& [oid, st] : mem.objects) {
        if (!first) os << ", ";
        first = false;
        os << "#" << oid.serial << "↦" << st.cls << "(";
        for (std::size_t k = 0; k < st.slots.size(); ++k) {
            if (k) os << ",";
            p.expr(os, st.slots[k]);
        }
        os << ")";
    }
    return os.str();
}

inline std::string render(const Config& cfg) {
    std::ostringstream os;
    os << "⟨" << render(cfg.expr) << " | " << render(cfg.mem) << "⟩";
    return os.str();
}

inline std::string render(const ClassTable& ct) {
    detail::Printer p;
    std::ostringstream os;
    bool first_class = true;
    for (const auto& [cname, ci] : ct.classes) {
        if (!first_class) os << "\n";
        first_class = false;
        os << "class " << cname << " { ";
        for (const auto& [fc, fn] : ci.fields) os << fc << " " << fn << "; ";
        for (const auto& [mname, sig] : ci.methods) {
            detail::Printer mp;
            mp.names.collect(sig.body);
            os << sig.ret_cls << " " << mname << "(";
            bool first = true;
            for (const auto& [pt, px] : sig.params) {
                if (!first) os << ", ";
                first = false;
                if (pt.qual == Qualifier::affine) os << "a ";
                os << pt.cls << " " << px.name;
            }
            os << ") { ";
            std::ostringstream body;
            mp.expr(body, sig.body);
            os << body.str() << " } ";
        }
        os << "}";
    }
    return os.str();
}

}  // namespace capsule
