#pragma once

// Forward occupancy propagation under a policy. Mass stops at states where
// the policy is undefined (goals). on_edge(s, edge, w) sees every edge
// traversal with its probability mass w.

#include <cstddef>
#include <vector>

#include "darko/mdp.hpp"
#include "darko/planner.hpp"

namespace darko {

inline constexpr double kNegligibleMass = 1e-15;

template <class OnEdge>
double propagate_occupancy(const Policy& policy, const GrowingMdp& mdp, StateId start, std::size_t horizon,
                           OnEdge&& on_edge) {
    if (!policy.defined_at(start)) return 0.0;
    std::vector<double> cur(mdp.num_states(), 0.0), nxt(mdp.num_states(), 0.0);
    std::vector<StateId> active{start}, touched;
    cur[start] = 1.0;
    double residual = 1.0;
    for (std::size_t k = 0; k < horizon && !active.empty(); ++k) {
        touched.clear();
        for (StateId s : active) {
            const double m = cur[s];
            cur[s] = 0.0;
            const auto probs = policy.probs(s);
            const auto edges = mdp.out_edges(s);
            for (std::size_t i = 0; i < probs.size(); ++i) {
                if (probs[i] <= 0.0) continue;
                const double w = m * probs[i];
                // Underflowed mass would defeat the nxt[n] == 0 dedup below.
                if (w == 0.0) continue;
                on_edge(s, edges[i], w);
                const StateId n = edges[i].next;
                if (!policy.defined_at(n)) continue;
                if (nxt[n] == 0.0) touched.push_back(n);
                nxt[n] += w;
            }
        }
        residual = 0.0;
        for (StateId n : touched) residual += nxt[n];
        std::swap(cur, nxt);
        active.swap(touched);
        if (residual < kNegligibleMass) break;
    }
    return residual;
}

}  // namespace darko
