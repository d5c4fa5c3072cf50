"""Solve the canonical instance and read the optimal policy.

Builds the default problem, runs the average-cost solver on the unfolded
failure chain, and prints what came out: the optimal long-run cost, how the
policy-iteration rounds progressed, and the threshold rules at the states
the closed loop actually visits.  Ends with the structural sanity check
that no tabular rule beats the threshold class in a one-step backup.
"""

from remotepower import (
    build_geometry,
    build_problem,
    default_config,
    solve,
    structure_witness,
)


def main() -> None:
    cfg = default_config()
    problem = build_problem(cfg)
    geometry = build_geometry(cfg, problem)

    print("solving the default instance "
          f"(depth {cfg['solver']['depth']}, grid {geometry.n_points} points) ...")
    result = solve(
        problem,
        geometry,
        depth=cfg["solver"]["depth"],
        tol_rho=cfg["solver"]["tol_rho"],
        max_rounds=cfg["solver"]["max_rounds"],
    )

    ev = result.evaluation
    print(f"\n  converged: {result.converged} after {result.iterations} rounds")
    print(f"  optimal average cost rho* = {result.rho_star:.9f}")
    print(f"  split: 0.5 * power {ev.power_mean:.6f} + error {ev.error_mean:.6f}")
    print(f"  success rate {ev.success_rate:.4f}, "
          f"tail occupancy {ev.tail_occupancy:.2e}, "
          f"Bellman residual {result.residual:.2e}")

    print("\n  cost per round (monotone by acceptance):")
    for i, rho in enumerate(result.rho_history):
        print(f"    round {i}: {rho:.9f}")

    print("\nthreshold rules at the most-visited states")
    print("  (radii where power steps up to the next level, levels "
          f"{list(problem.actions.levels)}):")
    chain = result.chain
    occ_by_state = ev.occupancy
    ranked = sorted(range(chain.n_states), key=lambda s: -occ_by_state[s])
    for s in ranked[:6]:
        node, g = chain.state_key(s)
        rule = result.policy.rule_for(node, g)
        radii = [round(t, 3) for t in rule.thresholds]
        print(f"    failures {node!s:12} gain {problem.channel.gains[g]:3.1f} "
              f"occ {occ_by_state[s]:.4f}  radii {radii}")
    print("  deeper failure runs transmit sooner: uncertainty raises urgency.")

    witness = structure_witness(chain, problem.cost, ev.relative_values)
    print(f"\nbest tabular rule beats best threshold rule by {witness:.2e} "
          "(<= 0 up to roundoff: thresholds suffice)")


if __name__ == "__main__":
    main()
