"""How transmission power buys reception probability, and when the channel
is good enough to stabilize the plant at all.

Prints the success-probability curves of the three reception families over
the action levels at both canonical channel gains, then checks the
stability margin for the default setup and for a deliberately anemic
variant that cannot keep an unstable plant bounded.
"""

from remotepower import (
    FadingChannel,
    ReceptionModel,
    ScalarProcess,
    build_problem,
    default_config,
    reception_prob,
    stationary_distribution,
    validate_stability,
)


def main() -> None:
    cfg = default_config()
    problem = build_problem(cfg)
    levels = problem.actions.levels
    gains = problem.channel.gains

    forms = [
        ReceptionModel(form="exponential", scale=1.0),
        ReceptionModel(form="logistic", scale=1.0),
        ReceptionModel(form="on_off", on_level=2.0, on_prob=0.7),
    ]

    print("reception probability q(u, h) by family")
    header = "  ".join(f"u={u:g}" for u in levels)
    for rec in forms:
        print(f"\n  {rec.form}:")
        for h in gains:
            row = "  ".join(f"{reception_prob(rec, u, h):5.3f}" for u in levels)
            print(f"    h={h:3.1f}:  {row}   ({header})")
    print("\n  zero power never gets through; higher gain needs less power.")

    pi = stationary_distribution(problem.channel)
    print(f"\nchannel stationary gain occupancy: {pi.round(4).tolist()}")

    report = validate_stability(problem.process, problem.channel, problem.reception,
                                problem.actions)
    print("\nstability at full power (canonical setup):")
    for line in report.messages:
        print(f"  {line}")
    print(f"  ok = {report.ok}")

    # same plant, but the best available power cannot make failures rare
    # enough for a = 1.2: expected squared growth a^2 * (1 - q) exceeds 1
    weak = validate_stability(
        ScalarProcess(a=1.2, noise_var=1.0),
        FadingChannel(gains=(0.05,), transition=((1.0,),)),
        ReceptionModel(form="exponential", scale=1.0),
        problem.actions,
    )
    print("\nsame plant on a gain-0.05 channel:")
    for line in weak.messages:
        print(f"  {line}")
    print(f"  ok = {weak.ok}")


if __name__ == "__main__":
    main()
