"""How long should one secondary user harvest before it transmits?

Harvesting longer buys more energy but leaves less of the slot for sending.
The rate-optimal split has a Lambert-W closed form; this walks a few
harvest rates and shows it agrees with a brute-force grid search.
"""
from greencr.model import SecondaryUser, SystemParams, TrafficClass, feasible_interval
from greencr.oracle import grid_theta_optimum
from greencr.structopt import closed_form_theta

import numpy as np


def main():
    params = SystemParams(num_subchannels=1)
    H = 2.0  # effective gain, already divided by the SNR gap and noise
    raw_gain = H * params.snr_gap * params.noise_power
    print(f"{'chi (J/s)':>10} {'window':>18} {'closed form':>12} {'grid':>12} {'rate':>8}")
    for chi in (2.0, 5.0, 10.0, 20.0, 50.0):
        su = SecondaryUser(0, TrafficClass.NRT, chi, 1e-3, 10e-6, 0.0,
                           np.array([raw_gain]), np.zeros((1, 0)))
        lo, hi = feasible_interval(su, params)
        theta = closed_form_theta(su, H, params)
        ref = grid_theta_optimum(su, [0], params)
        T = params.slot_duration
        a = T - theta * T - su.sensing_time
        b = chi * theta * T - su.sensing_energy
        rate = (a / T) * np.log2(1.0 + H * b / a)
        print(f"{chi:10g} [{lo:.4f}, {hi:.4f}] {theta:12.6f} {ref:12.6f} {rate:8.3f}")
    print("\nA richer energy source needs a shorter harvest to reach its best rate.")


if __name__ == "__main__":
    main()
