#pragma once

// Test-only reference implementations. These deliberately avoid the library's
// rule functions and oracle so they can check them independently.

#include <set>
#include <tuple>
#include <vector>

#include "logipath/logic.hpp"

namespace logipath::testing {

// (category, var1, pol1, var2, pol2); Fact atoms use var2 = -1.
using RawAtom = std::tuple<int, long, bool, long, bool>;

inline RawAtom raw(const Atom& a) {
    const auto& l = a.literals();
    if (l.size() == 1) return {static_cast<int>(a.category()), l[0].variable.value, l[0].positive, -1, true};
    return {static_cast<int>(a.category()), l[0].variable.value, l[0].positive, l[1].variable.value, l[1].positive};
}

inline constexpr int kCause = 0, kSA = 1, kNA = 2, kFact = 3;

// Row-by-row truth table with NA read backwards and Cause/SA forwards.
inline bool reference_entails(const std::vector<RawAtom>& premises, const RawAtom& goal) {
    std::vector<long> vars;
    auto note = [&](const RawAtom& a) {
        vars.push_back(std::get<1>(a));
        if (std::get<3>(a) >= 0) vars.push_back(std::get<3>(a));
    };
    for (const auto& p : premises) note(p);
    note(goal);
    std::set<long> uniq(vars.begin(), vars.end());
    vars.assign(uniq.begin(), uniq.end());
    for (unsigned long row = 0; row < (1UL << vars.size()); ++row) {
        auto value = [&](long v, bool pos) {
            for (std::size_t i = 0; i < vars.size(); ++i)
                if (vars[i] == v) return (((row >> i) & 1UL) != 0) == pos;
            return false;
        };
        auto holds = [&](const RawAtom& a) {
            const auto [c, v1, p1, v2, p2] = a;
            if (c == kFact) return value(v1, p1);
            const bool x = value(v1, p1), y = value(v2, p2);
            return c == kNA ? (y ? x : true) : (x ? y : true);
        };
        bool all = true;
        for (const auto& p : premises) all = all && holds(p);
        if (all && !holds(goal)) return false;
    }
    return true;
}

// Naive fixed point over the four rewrite rules.
inline std::set<RawAtom> reference_closure(const std::vector<RawAtom>& body, bool sound_only, int max_rounds = 64) {
    std::set<RawAtom> base(body.begin(), body.end());
    for (int round = 0; round < max_rounds; ++round) {
        std::vector<std::pair<RawAtom, std::vector<RawAtom>>> fresh;
        for (const auto& a : base) {
            const auto [c, v1, p1, v2, p2] = a;
            if (c == kCause || c == kSA) fresh.push_back({{c, v2, !p2, v1, !p1}, {a}});
            if (c == kNA) fresh.push_back({{kSA, v1, !p1, v2, !p2}, {a}});
            for (const auto& b : base) {
                const auto [d, w1, q1, w2, q2] = b;
                if (c == kFact && d != kFact && v1 == w1 && p1 == q1) fresh.push_back({{kFact, w2, q2, -1, true}, {a, b}});
                if (c != kFact && d != kFact && v2 == w1 && p2 == q1) fresh.push_back({{c, v1, p1, w2, q2}, {a, b}});
            }
        }
        bool grew = false;
        for (const auto& [atom, premises] : fresh) {
            if (base.contains(atom)) continue;
            if (sound_only && !reference_entails(premises, atom)) continue;
            base.insert(atom);
            grew = true;
        }
        if (!grew) break;
    }
    return base;
}

inline std::vector<RawAtom> raw_all(const std::vector<Atom>& atoms) {
    std::vector<RawAtom> out;
    for (const auto& a : atoms) out.push_back(raw(a));
    return out;
}

} // namespace logipath::testing
