"""Life of the innovation belief between successful receptions.

The estimator's uncertainty about the innovation error starts as pure
process noise after every success.  Each failed transmission first
reweights the belief by the miss probability (high-power regions lose
mass), then the unstable plant stretches it and fresh noise smears it.
This script walks a failure streak step by step under an on-off rule and
shows the two competing effects: conditioning sharpens, dynamics spread.
"""

import numpy as np

from remotepower import (
    GridGeometry,
    build_problem,
    default_config,
    gaussian_grid,
    mean,
    on_off_action,
    outward_mass,
    post_failure,
    propagate,
    success_prob,
    variance,
)


def main() -> None:
    cfg = default_config()
    problem = build_problem(cfg)
    geometry = GridGeometry(half_width=60.0, n_points=4001, convolution="direct")
    gain = problem.channel.gains[0]

    rule = on_off_action(2.0, problem.actions).as_action(geometry, problem.actions)
    print("rule: stay silent for |e| < 2, full power outside")
    print(f"channel gain fixed at h = {gain}\n")

    theta = gaussian_grid(0.0, problem.process.noise_var, geometry)
    print("failure streak (each row: belief BEFORE the k-th attempt):")
    print("  k   mean       var      P(success)   mass beyond |e|=2")
    for k in range(6):
        phi = success_prob(theta, gain, rule, problem.reception)
        print(
            f"  {k}  {mean(theta):+8.5f}  {variance(theta):7.4f}   "
            f"{phi:8.5f}      {outward_mass(theta, 2.0):8.5f}"
        )
        theta = propagate(theta, gain, rule, 0, problem.process, problem.reception)

    # conditioning alone, before the plant stretches anything
    base = gaussian_grid(0.0, problem.process.noise_var, geometry)
    cond = post_failure(base, gain, rule, problem.reception)
    print(
        "\nconditioning on one miss, before dynamics: "
        f"var {variance(base):.4f} -> {variance(cond):.4f}"
    )
    print("  (failure is evidence the error sat in the silent band)")

    stretched = propagate(base, gain, rule, 0, problem.process, problem.reception)
    a2 = problem.process.a ** 2
    print(
        f"one full failure step: var {variance(stretched):.4f}"
        f"  (= a^2 * {variance(cond):.4f} + {problem.process.noise_var:g}"
        f" = {a2 * variance(cond) + problem.process.noise_var:.4f})"
    )

    after_success = propagate(theta, gain, rule, 1, problem.process, problem.reception)
    print(
        f"\na success resets everything: var {variance(theta):.4f} -> "
        f"{variance(after_success):.4f} (pure process noise)"
    )

    drift = np.trapezoid(
        np.abs(after_success.weights - base.weights), after_success.nodes
    )
    print(f"reset belief matches the streak's starting point to {drift:.2e} (L1)")


if __name__ == "__main__":
    main()
