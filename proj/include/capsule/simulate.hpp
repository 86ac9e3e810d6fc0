#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "capsule/ast.hpp"
#include "capsule/conventional.hpp"
#include "capsule/matching.hpp"
#include "capsule/reduce.hpp"

namespace capsule {

// One record per syntactic step: which rule fired, how many
// conventional steps were needed to restore the matching relation, and
// which ρ entries were added.
struct SimStepRecord {
    std::size_t index = 0;
    Rule rule = Rule::ctx_implicit;
    std::size_t conv_steps = 0;
    std::vector<std::pair<ObjId, Ident>> rho_added;
    ExprPtr term;          // syntactic term after the step
    Config cfg;            // conventional configuration after matching
    std::vector<ConvRule> conv_rules;
};

enum class SimVerdict {
    value_matched,      // both sides finished and the final values match
    stuck_capsule,      // syntactic side stuck on a capsule check; conventional may continue
    stuck_no_rule,      // syntactic side stuck outside the capsule check (a reducer gap)
    fuel_exhausted,
    violation,          // a syntactic step could not be simulated within K steps
};

struct SimViolation {
    std::size_t step_index = 0;
    Rule rule = Rule::ctx_implicit;
    ExprPtr term;             // syntactic term the conventional side failed to match
    Config cfg;               // configuration the search started from
    std::size_t tried = 0;    // conventional steps explored
    std::string note;
};

struct SimReport {
    std::vector<SimStepRecord> steps;
    SimVerdict verdict = SimVerdict::value_matched;
    std::optional<SimViolation> violation;
    std::optional<CapsuleCheckFailed> capsule_failure;
    std::string note;
    ExprPtr final_term;
    Config final_cfg;
    RhoMap final_rho;
    std::size_t bound = 0;  // K
};

struct SimStepOk {
    Config cfg;
    RhoMap rho;
    std::size_t conv_steps = 0;
    std::vector<ConvRule> conv_rules;
};

// Searches j = 0..K conventional steps from cfg for the first
// configuration matching e_next; Theorem 1 guarantees one exists for
// genuine reduction steps from a matching state.
inline std::variant<SimStepOk, SimViolation> simulate_step(const ExprPtr& e_next,
                                                           const Config& cfg, const RhoMap& rho,
                                                           const ClassTable& ct,
                                                           FreshSupply& conv_supply,
                                                           std::size_t K) {
    Config current = cfg;
    std::vector<ConvRule> rules;
    for (std::size_t j = 0; j <= K; ++j) {
        if (auto rho2 = match_infer(e_next, current, rho)) {
            return SimStepOk{current, std::move(*rho2), j, rules};
        }
        if (j == K) break;
        ConvOutcome out = cstep(current, ct, conv_supply);
        if (std::holds_alternative<ConvDone>(out)) {
            return SimViolation{0, Rule::ctx_implicit, e_next, cfg, j,
                                "conventional side finished without matching"};
        }
        if (auto* st = std::get_if<ConvStuck>(&out)) {
            return SimViolation{0, Rule::ctx_implicit, e_next, cfg, j,
                                "conventional side stuck: " + st->detail};
        }
        auto& s = std::get<ConvStep>(out);
        rules.push_back(s.rule);
        current = std::move(s.cfg);
    }
    return SimViolation{0, Rule::ctx_implicit, e_next, cfg, K,
                        "no matching configuration within the step bound"};
}

// Erases e, co-runs both reducers, and checks every syntactic step is
// simulated. e must be closed, pure and freshened.
inline SimReport simulate_run(const ExprPtr& e, const ClassTable& ct, FreshSupply& supply,
                              std::size_t fuel, std::size_t K) {
    SimReport report;
    report.bound = K;

    auto erased = erase(e);
    if (!erased) {
        report.verdict = SimVerdict::violation;
        report.violation = SimViolation{0, Rule::ctx_implicit, e, Config{e, {}}, 0,
                                        "initial term is not erasable"};
        return report;
    }
    Config cfg = erased->cfg;
    RhoMap rho = erased->rho;
    if (!match_check(e, cfg, rho)) {
        report.verdict = SimVerdict::violation;
        report.violation =
            SimViolation{0, Rule::ctx_implicit, e, cfg, 0, "erasure does not match its input"};
        return report;
    }

    FreshSupply conv_supply(supply.watermark());
    cfg.mem.next_serial = std::max<std::uint64_t>(cfg.mem.next_serial, 1);

    Reducer reducer(ct, supply);
    ExprPtr term = e;
    report.verdict = SimVerdict::fuel_exhausted;
    for (std::size_t i = 0; i < fuel; ++i) {
        StepOutcome out = reducer.step(term);
        if (std::holds_alternative<Done>(out)) {
            report.verdict = SimVerdict::value_matched;
            break;
        }
        if (auto* stuck = std::get_if<Stuck>(&out)) {
            if (auto* cf = std::get_if<CapsuleCheckFailed>(&stuck->reason)) {
                report.verdict = SimVerdict::stuck_capsule;
                report.capsule_failure = *cf;
                report.note = "syntactic side stuck on the capsule runtime check; "
                              "the conventional side may continue";
            } else {
                report.verdict = SimVerdict::stuck_no_rule;
                report.note = std::get<NoApplicableRule>(stuck->reason).detail;
            }
            break;
        }
        auto& step = std::get<Step>(out);
        auto sim = simulate_step(step.term, cfg, rho, ct, conv_supply, K);
        if (auto* v = std::get_if<SimViolation>(&sim)) {
            v->step_index = report.steps.size();
            v->rule = step.rule;
            report.verdict = SimVerdict::violation;
            report.violation = *v;
            report.final_term = step.term;
            report.final_cfg = cfg;
            report.final_rho = rho;
            return report;
        }
        auto& ok = std::get<SimStepOk>(sim);
        SimStepRecord rec;
        rec.index = report.steps.size();
        rec.rule = step.rule;
        rec.conv_steps = ok.conv_steps;
        rec.conv_rules = ok.conv_rules;
        rec.rho_added = ok.rho.added_over(rho);
        rec.term = step.term;
        rec.cfg = ok.cfg;
        report.steps.push_back(rec);

        term = step.term;
        cfg = std::move(ok.cfg);
        rho = std::move(ok.rho);
    }
    if (report.verdict == SimVerdict::fuel_exhausted && is_value(term))
        report.verdict = SimVerdict::value_matched;

    report.final_term = term;
    report.final_cfg = cfg;
    report.final_rho = rho;

    if (report.verdict == SimVerdict::value_matched) {
        // Lemma 2 final shape: a block value matches an object id whose
        // ρ-image is the body variable; an integer matches itself.
        ValueKind vk = classify_value(term);
        if (const auto* bv = std::get_if<BlockValue>(&vk)) {
            const auto* oid = as<OidE>(cfg.expr);
            const auto* body = as<VarE>(bv->block->body);
            if (!oid || !body || rho.image(oid->oid) != body->ident) {
                report.verdict = SimVerdict::violation;
                report.violation = SimViolation{report.steps.size(), Rule::ctx_implicit, term,
                                                cfg, 0,
                                                "final block value does not match an object id"};
            }
        } else if (const auto* iv = std::get_if<IntValue>(&vk)) {
            const auto* ci = as<IntE>(cfg.expr);
            if (!ci || ci->value != iv->value) {
                report.verdict = SimVerdict::violation;
                report.violation = SimViolation{report.steps.size(), Rule::ctx_implicit, term,
                                                cfg, 0, "final integers differ"};
            }
        }
    }
    return report;
}

}  // namespace capsule
