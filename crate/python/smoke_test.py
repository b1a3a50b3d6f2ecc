"""Smoke test for the Python extension: run after building it."""

import math

import twoatom_cqed_py as tq


def main():
    p = tq.SystemParams()
    assert abs(tq.phi_angle(-1, p) - 60 * math.pi) < 1e-3

    e = tq.closed_form_energies(0.3, p, 0)
    numeric = tq.eigenvalues(0.3, p, 0)
    assert max(abs(a - b) for a, b in zip(sorted(e), numeric)) < 1e-9 * p.g0

    labels, s = tq.scatter_matrix(p, 1)
    assert labels == ["|0;ge>", "|0;eg>", "|1;gg>"]
    for i in range(3):
        for j in range(3):
            dot = sum(s[k][i].conjugate() * s[k][j] for k in range(3))
            assert abs(dot - (1 if i == j else 0)) < 1e-6

    fidelity, success = tq.entangle_atoms(p)
    assert fidelity > 0.999 and success > 0.999

    quarter = tq.calibrate_coupling(math.pi / 2, -1, p)
    assert abs(math.remainder(tq.phi_angle(-1, quarter) - math.pi / 2, 2 * math.pi)) < 1e-6

    f, phis, warnings = tq.teleport(complex(0.6, 0), complex(0, 0.8))
    assert f > 0.995, f
    assert len(phis) == 3

    try:
        tq.input_output_residual(p, -1, "sideways")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown regime accepted")

    print(f"ok: entangling fidelity {fidelity:.6f}, transfer fidelity {f:.6f}")


if __name__ == "__main__":
    main()
