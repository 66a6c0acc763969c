// Build a small circuit, restrict it with a label hierarchy, and run the exact queries.

#include "crisp/crisp.hpp"

#include <cstdio>

using namespace crisp;

int main()
{
    const std::size_t c = 6;
    const auto vt = random_vtree(c, VtreeShape::BalancedRandom, 3);
    const auto base = build_crisp(vt, 2, 3);
    // Y1 and Y2 need Y0; Y4 needs Y3.
    const Hierarchy h(c, {{1, 0}, {2, 0}, {4, 3}});
    const auto model = apply_constraints(base, build_hierarchy_circuit(h, vt), vt).circuit;
    std::printf("base: %zu units, %zu edges; constrained: %zu units, %zu edges\n", base.size(), base.num_edges(), model.size(),
                model.num_edges());

    const auto p = random_params(base.layout(), 42);
    const auto mode = map_state(model, p);
    std::printf("MAP %s with probability %.4f, margin %.4f\n", detail::labels_string(mode.assignment).c_str(), std::exp(mode.log_prob),
                margin(model, p));
    std::printf("Shannon entropy %.4f nats\n", shannon_entropy(model, p));

    EvidenceMask ev(c);
    ev.observe(0, 1);
    std::printf("p(Y0 = 1) = %.4f\n", conditional_marginal(model, p, ev));

    const auto pc = power(model, 2);
    auto R = renyi_objective(pc, p);
    const auto q = select_subset_bb(R, c, 2);
    std::printf("best pair to ask about: %s, Renyi-2 entropy %.4f nats (%zu nodes expanded)\n", q.Q.to_string().c_str(), q.objective_value,
                q.expanded);

    const auto s = suspiciousness(model, p, std::vector<std::uint8_t>{1, 0, 1, 0, 0, 1});
    std::printf("suspiciousness of 101001: %.4f\n", s.value);
}
