"""End to end on one random cell: draw a scenario, share the idle
sub-channels out by energy figure of merit, then pick every user's
harvesting ratio and check the result against the grid oracle."""
from greencr.allocation import allocate_baseline, allocate_efm, initial_thetas, satisfied_rt_count
from greencr.model import evaluate_constraints
from greencr.oracle import constrained_grid_solve
from greencr.scenario import ScenarioConfig, generate_scenario
from greencr.structopt import SolverConfig, dual_subgradient_solve, solve_closed_form


def main():
    cfg = ScenarioConfig(seed=7, num_users=4, num_rt=2, num_pus=2, num_subchannels=16,
                         num_available=12, harvest_rate=(5.0, 8.0, 12.0, 20.0),
                         rate_requirement=(2.0,), distance_min=100.0, distance_max=100.0)
    sc = generate_scenario(cfg)
    theta0 = initial_thetas(sc)

    alloc = allocate_efm(sc, theta0)
    print("EFM allocation")
    for i, su in enumerate(sc.users):
        kind = "RT " if su.is_rt else "NRT"
        print(f"  user {i} ({kind}, chi={su.harvest_rate:g}): sub-channels {list(alloc[i])}")
    base = allocate_baseline(sc, theta0)
    print(f"RT users served at the initial ratios: EFM {satisfied_rt_count(sc, alloc, theta0)}, "
          f"greedy baseline {satisfied_rt_count(sc, base, theta0)}")

    closed = solve_closed_form(sc, alloc)
    dual = dual_subgradient_solve(sc, alloc, SolverConfig(max_iter=3000))
    oracle = constrained_grid_solve(sc, alloc)
    print("\nharvesting ratios")
    for name, rep in (("closed form", closed), ("dual", dual), ("grid oracle", oracle)):
        thetas = " ".join(f"{t:.4f}" for t in rep.theta)
        print(f"  {name:12s} {thetas}   sum rate {rep.objective:.4f}")

    slack = evaluate_constraints(sc, alloc, closed.theta).interference
    print("\ninterference headroom per PU (W):", " ".join(f"{s:.3g}" for s in slack))
    if closed.fallback:
        # zero headroom: the unconstrained optimum overloads a PU, so the
        # closed-form pipeline handed over to the dual method
        print("a PU limit binds; the closed-form pipeline fell back to the dual method")


if __name__ == "__main__":
    main()
