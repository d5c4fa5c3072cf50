"""Why threshold rules are enough: the rearrangement argument, numerically.

Take any belief and any measurable power rule.  Rearranging the belief into
its symmetric decreasing version and rewriting the rule so power increases
outward preserves the expected power and the success probability exactly,
while never increasing the stage cost.  Run on a deliberately scrambled
belief to make the point vivid.
"""

import numpy as np

from remotepower import (
    ActionFunction,
    GridGeometry,
    build_problem,
    default_config,
    expected_power,
    is_even_unimodal,
    rearranged_action,
    relation_R,
    random_relation_pair,
    stage_cost,
    success_prob,
)


def main() -> None:
    problem = build_problem(default_config())
    geometry = GridGeometry(half_width=24.0, n_points=1601, convolution="direct")
    rng = np.random.default_rng(7)

    theta, theta_hat = random_relation_pair(geometry, rng, max_radius=10.0)
    print("theta:     scrambled Gaussian mixture (interior cells permuted)")
    print("theta_hat: its symmetric decreasing rearrangement\n")
    print(f"  theta even-unimodal?     {is_even_unimodal(theta)}")
    print(f"  theta_hat even-unimodal? {is_even_unimodal(theta_hat)}")
    print(f"  related (theta R theta_hat)? "
          f"{relation_R(theta, theta_hat, problem.actions.saturation_radius)}\n")

    # a messy rule on theta: random level per cell, no structure at all
    levels = np.asarray(problem.actions.levels)
    messy_values = rng.choice(levels, size=geometry.n_points)
    messy_values[np.abs(geometry.nodes()) >= problem.actions.saturation_radius] = (
        problem.actions.u_max
    )
    messy = ActionFunction(messy_values, problem.actions, geometry)
    tidy = rearranged_action(messy, theta, theta_hat)

    gain = problem.channel.gains[1]
    rec = problem.reception
    rows = [
        ("expected power", expected_power(theta, messy), expected_power(theta_hat, tidy)),
        ("success prob", success_prob(theta, gain, messy, rec),
         success_prob(theta_hat, gain, tidy, rec)),
        ("stage cost", stage_cost(theta, gain, messy, rec, problem.cost),
         stage_cost(theta_hat, gain, tidy, rec, problem.cost)),
    ]
    print("         metric        (theta, messy)   (theta_hat, rearranged)")
    for name, before, after in rows:
        print(f"  {name:>16}:   {before:12.8f}     {after:12.8f}")

    p_gap = abs(rows[0][1] - rows[0][2])
    s_gap = abs(rows[1][1] - rows[1][2])
    print(f"\n  power preserved to {p_gap:.2e}, success to {s_gap:.2e}")
    print(f"  stage cost dropped by {rows[2][1] - rows[2][2]:.6f} "
          "(never negative: that is the whole argument)")

    radii = tidy.bands[0] if tidy.bands is not None else None
    print(f"\nrearranged rule switch radii: {np.round(radii, 4).tolist()}")
    print("power is now a nondecreasing function of |e| by construction.")


if __name__ == "__main__":
    main()
