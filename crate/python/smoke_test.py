"""Smoke test for the Python bindings.

Build and run from the repository root:

    cargo build -p secbw-py --release
    cp target/release/libsecbw_py.so python/secbw_py.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import secbw_py as sb


def main():
    p = sb.SystemParams()
    assert p.total_bandwidth_hz == 10e6
    assert math.isclose(p.min_secrecy_rate_bps, 0.8e6)

    users = sb.sample_channels(7, 10, p)
    assert len(users) == 10

    ch = sb.UserChannel(50.0, 100.0, 1.0, 1.0)
    w = 1e6
    assert sb.secrecy_rate(w, ch, p) > 0
    assert sb.secrecy_rate_deriv(w, ch, p) > 0
    assert sb.secrecy_rate_second_deriv(w, ch, p) < 0
    w_min = sb.min_bandwidth(ch, p)
    assert sb.secrecy_rate(w_min, ch, p) >= p.min_secrecy_rate_bps

    sched = sb.schedule_users(users, p)
    assert len(sched) == len(sched.scheduled_idx) >= 1
    assert len(sched.scheduled_idx) + len(sched.dropped) == 10

    allocations = {
        "ivs": sb.allocate_ivs(sched, p, 1e5),
        "bec": sb.allocate_bec(sched, p, "legitimate-snr"),
        "gnn": sb.Gnn(seed=3).allocate(sched),
    }
    for name, alloc in allocations.items():
        assert abs(sum(alloc) - p.total_bandwidth_hz) < 1e-6, name
        assert all(a >= m - 1e-6 for a, m in zip(alloc, sched.w_min_hz)), name
        rate = sched.sum_secrecy_rate(alloc, p)
        print(f"{name:>4}: sum secrecy rate {rate / 1e6:.3f} Mbps")

    try:
        sb.UserChannel(-1.0, 1.0, 1.0, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative distance accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
