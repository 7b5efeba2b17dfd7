"""End-to-end acceptance checks.

Each test prints one ``criterion N: PASS|FAIL`` line (visible under ``-v``
without ``-s``) and then asserts the criterion at its stated tolerance.
"""

import csv
import time

import numpy as np
import pytest

from phasegain import dwshell, kyp
from phasegain import stability as stb
from phasegain.cli import main
from phasegain.errors import NotSectorialError, PreconditionError
from phasegain.kyp import KypStatus
from phasegain.lti import FrequencyGrid, StateSpace, gang_of_four, hinf_norm, is_hurwitz
from phasegain.matnum import matrix_phases, singular_values
from phasegain.stability import Verdict

from conftest import (SHELL_A, data_path, example1_controller, example1_plant, first_order,
                      random_sectorial, random_stable)
from oracles import grid_sector_and_tail, random_minimal

PLANT = data_path("example1_plant.json")
CTRL = data_path("example1_controller.json")


@pytest.fixture
def emit(capsys):
    def out(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(x) if x else np.nan for x in r] for r in rows[1:]]


def series(g2, g1):
    n1, n2 = g1.n_states, g2.n_states
    a = np.block([[g1.a, np.zeros((n1, n2))], [g2.b @ g1.c, g2.a]])
    b = np.vstack([g1.b, g2.b @ g1.d])
    c = np.hstack([g2.d @ g1.c, g2.c])
    return StateSpace(a, b, c, g2.d @ g1.d)


# ---------------------------------------------------------------- criterion 1


def _example1(omega_c, tmp_path, capsys):
    t0 = time.perf_counter()
    code = main(["analyze", "--theorem", "mixed-cutoff", "--plant", PLANT, "--controller", CTRL,
                 "--omega-c", str(omega_c)])
    verdict = capsys.readouterr().out.splitlines()[0]
    sp, sc = tmp_path / f"p{omega_c}.csv", tmp_path / f"c{omega_c}.csv"
    main(["sweep", "--system", PLANT, "--out", str(sp)])
    main(["sweep", "--system", CTRL, "--out", str(sc)])
    _, rp = read_csv(sp)
    _, rc = read_csv(sc)
    gain_bad, phase_bad = [], []
    for a, b in zip(rp, rc):
        w = a[0]
        if omega_c <= w <= 1e4 and not a[1] * b[1] < 1:
            gain_bad.append((w, a[1] * b[1]))
        if w < omega_c and not (a[4] + b[4] < np.pi and a[5] + b[5] > -np.pi):
            phase_bad.append(w)
    hurwitz = is_hurwitz(gang_of_four(example1_plant(), example1_controller()))
    return dict(code=code, verdict=verdict, gain_bad=gain_bad, phase_bad=phase_bad,
                hurwitz=hurwitz, seconds=time.perf_counter() - t0)


def _ex1_ok(r):
    return (r["code"] == 0 and not r["gain_bad"] and not r["phase_bad"] and r["hurwitz"]
            and r["seconds"] < 10)


@pytest.mark.xfail(strict=True,
                   reason="with the printed data the gain product at w = 3 is 1.2211 > 1")
def test_criterion_1_example1(tmp_path, capsys, emit):
    r3 = _example1(3.0, tmp_path, capsys)
    r4 = _example1(4.0, tmp_path, capsys)
    ok = _ex1_ok(r3)
    worst = max((g for _, g in r3["gain_bad"]), default=float("nan"))
    emit(1, ok, f"w_c=3: '{r3['verdict']}', {len(r3['gain_bad'])} grid points in [3, 1e4] "
                f"with gain product >= 1 (max {worst:.4f}), phase sums on [0, 3) "
                f"{'ok' if not r3['phase_bad'] else 'violated'}, closed loop Hurwitz="
                f"{r3['hurwitz']}, {r3['seconds']:.1f}s | companion w_c=4: "
                f"'{r4['verdict']}', all sweep checks {'ok' if _ex1_ok(r4) else 'failed'}")
    assert ok


def test_criterion_1_companion_cutoff_4(tmp_path, capsys):
    r = _example1(4.0, tmp_path, capsys)
    assert _ex1_ok(r), r


# ---------------------------------------------------------------- criterion 2


def _rand_plant(rng, n):
    kind = rng.integers(0, 3)
    if kind == 0:
        # generic stable, random scale
        p = random_stable(rng, int(rng.integers(1, 4)), n)
        p = StateSpace(p.a, p.b, p.c * 10 ** rng.uniform(-1, 1), p.d * rng.choice([0.0, 1.0]))
    elif kind == 1:
        # sum of positive-real lags in a random basis (phases in (-pi/2, 0])
        q = np.linalg.qr(rng.normal(size=(n, n)))[0]
        poles = rng.uniform(0.1, 5, size=n)
        gains = 10 ** rng.uniform(-1, 1, size=n)
        p = StateSpace(-np.diag(poles), q.T, q @ np.diag(gains), 0.1 * rng.uniform() * np.eye(n))
    else:
        # generic stable plus integral action
        p = random_stable(rng, int(rng.integers(1, 3)), n)
        k = rng.normal(size=(n, n))
        p = p + StateSpace(np.zeros((n, n)), np.eye(n), k, np.zeros((n, n)))
    return p


def _rand_controller(rng, n):
    c = random_stable(rng, int(rng.integers(1, 3)), n)
    s = 10 ** rng.uniform(-1.5, 0.5)
    return StateSpace(c.a, c.b, c.c * s, c.d * s)


def _vase_case(rng):
    # controller, scalar weights and a plant drawn from the weighted vase
    c = first_order(10 ** rng.uniform(-1, 0.3), rng.uniform(0.2, 5))
    gw = StateSpace.static([[rng.uniform(0.5, 3.0)]])
    a, b = rng.uniform(0.2, 5, size=2)
    h = StateSpace([[-a]], [[1.0]], [[b - a]], [[1.0]])  # (s + b) / (s + a)
    if rng.random() < 0.5:
        p = series(h, first_order(10 ** rng.uniform(-1, 1.5), rng.uniform(0.01, 10)))
    else:
        q = random_stable(rng, int(rng.integers(1, 3)), 1)
        p = StateSpace(q.a, q.b, q.c, q.d)
        p = StateSpace(p.a, p.b, p.c * (0.99 * gw.d[0, 0] / hinf_norm(p)),
                       p.d * (0.99 * gw.d[0, 0] / hinf_norm(p)))
    return c, gw, h, p


def test_criterion_2_soundness(emit):
    rng = np.random.default_rng(2024)
    grid = FrequencyGrid(40)
    t0 = time.perf_counter()
    tally = {}
    bad = []
    pairs = 0
    rotating = ["frequencywise-mixed", "dw-phase", "dw-gain", "small-vase"]
    while pairs < 500:
        n = int(rng.integers(1, 3))
        p, c = _rand_plant(rng, n), _rand_controller(rng, n)
        try:
            hurwitz = is_hurwitz(gang_of_four(p, c))
        except PreconditionError:
            continue
        wc = 10 ** rng.uniform(-1, 1.5)
        extra = rotating[pairs % 4]
        runs = {
            "small-gain": lambda: stb.small_gain_check(p, c, grid),
            "small-phase": lambda: stb.small_phase_check(p, c, grid),
            "mixed-cutoff": lambda: stb.mixed_cutoff_check(p, c, wc, grid),
        }
        if extra == "frequencywise-mixed":
            runs[extra] = lambda: stb.frequencywise_mixed_check(p, c, stb.cutoff_spec(p, wc), grid)
        elif extra == "dw-phase":
            runs[extra] = lambda: stb.dw_phase_stability_check(p, c, None, grid)
        elif extra == "dw-gain":
            runs[extra] = lambda: stb.dw_gain_stability_check(p, c, None, grid)
        pairs += 1
        for name, run in runs.items():
            try:
                v = run().verdict
            except (PreconditionError, NotSectorialError):
                v = "precondition"
            key = v.value if isinstance(v, Verdict) else v
            tally.setdefault(name, {}).setdefault(key, 0)
            tally[name][key] += 1
            if v is Verdict.STABLE and not hurwitz:
                bad.append((pairs, name))
        if extra == "small-vase":
            cv, gw, h, pv = _vase_case(rng)
            v = stb.small_vase_necessity_check(cv, gw, h, grid).verdict
            tally.setdefault(extra, {}).setdefault(v.value, 0)
            tally[extra][v.value] += 1
            if v is Verdict.STABLE and not is_hurwitz(gang_of_four(pv, cv)):
                bad.append((pairs, extra))
    secs = time.perf_counter() - t0
    stable = {k: d.get("Stable", 0) for k, d in tally.items()}
    ok = not bad and secs < 300 and len(tally) == 7
    emit(2, ok, f"{pairs} pairs, {sum(sum(d.values()) for d in tally.values())} verdicts, "
                f"Stable per checker {stable}, {len(bad)} unsound, {secs:.0f}s")
    assert not bad, bad
    assert len(tally) == 7 and all(v > 0 for v in stable.values())
    assert secs < 300


# ---------------------------------------------------------------- criterion 3


def test_criterion_3_constrained_phase_at_zero(emit):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        a = random_sectorial(rng, 3, spread=float(rng.uniform(0.2, 3.0)))
        ps = matrix_phases(a)
        sec = dwshell.constrained_phase_sector(a, 0.0)
        worst = max(worst, abs(sec.lo - ps.lo), abs(sec.hi - ps.hi))
    ok = worst <= 1e-5
    emit(3, ok, f"100 random sectorial 3x3, max |psi_0 - phi| = {worst:.2e} rad")
    assert ok


# ---------------------------------------------------------------- criterion 4


def test_criterion_4_dw_shell_curves(emit):
    smax = float(singular_values(SHELL_A)[0])
    rs = np.linspace(0.0, smax, 50)
    secs = [dwshell.constrained_phase_sector(SHELL_A, r) for r in rs]
    lo = np.array([s.lo for s in secs])
    hi = np.array([s.hi for s in secs])
    mono = bool(np.all(np.diff(lo) >= -1e-6) and np.all(np.diff(hi) <= 1e-6))
    nonempty = not any(s.empty for r, s in zip(rs, secs) if r <= smax - 1e-3)
    beyond = [dwshell.constrained_phase_sector(SHELL_A, r).empty
              for r in (smax + 1e-3, 1.01 * smax, 2 * smax)]
    gap = 0.0
    for r, s in zip(rs, secs):
        o = dwshell.oracle_phase_sector(SHELL_A, r, seed=7)
        gap = max(gap, abs(o.lo - s.lo), abs(o.hi - s.hi))
    ok = mono and nonempty and all(beyond) and gap <= 1e-3
    emit(4, ok, f"sigma_max={smax:.6f}, monotone={mono}, nonempty below sigma_max={nonempty}, "
                f"empty beyond={all(beyond)}, max SDP-oracle gap {gap:.2e} rad")
    assert ok


# ---------------------------------------------------------------- criterion 5


def _accretive(rng, n=3, spread=1.4):
    t = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) + 2 * np.eye(n)
    ph = rng.uniform(-spread / 2, spread / 2, size=n)
    return t.conj().T @ np.diag(np.exp(1j * ph)) @ t


def test_criterion_5_scaling_law(emit):
    rng = np.random.default_rng(5)
    worst_tau, worst_sqrt = 0.0, 0.0
    for _ in range(20):
        a = _accretive(rng)
        smax = float(singular_values(a)[0])
        for tau in (0.25, 0.5, 1.0):
            for frac in np.linspace(0.0, 0.95, 5):
                r = frac * tau * smax
                lhs = dwshell.constrained_phase_sector(tau * a, r)
                rhs = dwshell.constrained_phase_sector(a, r / tau)
                worst_tau = max(worst_tau, abs(lhs.hi - rhs.hi))
                if r / np.sqrt(tau) < smax * (1 - 1e-6):
                    alt = dwshell.constrained_phase_sector(a, r / np.sqrt(tau))
                    worst_sqrt = max(worst_sqrt, abs(lhs.hi - alt.hi))
    ok = worst_tau <= 1e-5
    emit(5, ok, f"r/tau form max error {worst_tau:.2e} rad over 20 matrices x 3 tau x 5 r; "
                f"r/sqrt(tau) form refuted (max discrepancy {worst_sqrt:.3f} rad)")
    assert ok and worst_sqrt > 1e-2


# ---------------------------------------------------------------- criterion 6


def test_criterion_6_reductions(emit):
    rng = np.random.default_rng(6)
    grid = FrequencyGrid(40)
    mism = []
    for k in range(20):
        n = int(rng.integers(1, 3))
        p, c = random_stable(rng, 2, n), random_stable(rng, 2, n)
        a = stb.small_phase_check(p, c, grid).verdict
        b = stb.dw_phase_stability_check(p, c, lambda w: 0.0, grid).verdict
        if a is not b:
            mism.append(("phase", k, a, b))
        a = stb.small_gain_check(p, c, grid).verdict
        b = stb.dw_gain_stability_check(p, c, lambda w: 0.0, grid).verdict
        if a is not b:
            mism.append(("gain", k, a, b))
    cases = [(example1_plant(), example1_controller(), wc) for wc in (3.0, 4.0)]
    while len(cases) < 12:
        n = int(rng.integers(1, 3))
        p, c = random_minimal(rng, int(rng.integers(1, 4)), n), _rand_controller(rng, n)
        cases.append((p, c, 10 ** rng.uniform(-1, 1)))
    for k, (p, c, wc) in enumerate(cases):
        a = stb.mixed_cutoff_check(p, c, wc, grid).verdict
        b = stb.frequencywise_mixed_check(p, c, stb.cutoff_spec(p, wc), grid).verdict
        if a is not b:
            mism.append(("cutoff", k, a, b))
    ok = not mism
    emit(6, ok, f"20 pairs x 2 reductions + Example 1 (w_c = 3, 4) and 10 random systems, "
                f"{len(mism)} mismatches")
    assert ok, mism


# ---------------------------------------------------------------- criterion 7


def test_criterion_7_bounded_sectored_lemma(emit):
    rng = np.random.default_rng(7)
    systems, agree, total, skipped = 0, 0, 0, 0
    certified = rejected = 0
    tail_err = 0.0
    t0 = time.perf_counter()
    while systems < 20:
        g = random_minimal(rng, int(rng.integers(2, 5)))
        wc = 10 ** rng.uniform(-1, 1)
        try:
            lo, hi, peak = grid_sector_and_tail(g, wc)
        except NotSectorialError:
            continue
        if hi - lo > np.pi - 0.3:
            continue
        systems += 1
        d = rng.uniform(0.02, 0.1, size=3)
        cases = [(lo - d[0], hi + d[1], peak * (1 + d[2]))]
        which = rng.integers(0, 3)
        if which == 0:
            cases.append((lo + d[0], hi + d[1], peak * (1 + d[2])))
        elif which == 1:
            cases.append((lo - d[0], hi - d[1], peak * (1 + d[2])))
        else:
            cases.append((lo - d[0], hi + d[1], peak * (1 - d[2])))
        for alpha, beta, gamma in cases:
            margin = min(lo - alpha, beta - hi, 1 - peak / gamma)
            if abs(margin) < 1e-4:
                skipped += 1
                continue
            r = kyp.bounded_sectored_check(g, wc, alpha, beta, gamma)
            total += 1
            if r.status is not KypStatus.UNKNOWN and bool(r) == (margin > 0):
                agree += 1
            certified += r.status is KypStatus.CERTIFIED
            rejected += r.status is KypStatus.NOT_CERTIFIED
        for lim in (1e-6, 1e6):
            tail_err = max(tail_err, abs(kyp.tail_gain_bound(g, lim) - hinf_norm(g, omega_lo=lim)))
    ok = agree == total and tail_err <= 1e-4 and certified and rejected
    emit(7, ok, f"{agree}/{total} LMI verdicts agree with the grid ({certified} certified, "
                f"{rejected} rejected, {skipped} skipped), limiting-case H-inf error "
                f"{tail_err:.1e}, {time.perf_counter() - t0:.0f}s")
    assert ok


# ---------------------------------------------------------------- criterion 8


def _congruent(rng, n, phases, gain):
    t = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) + 2 * np.eye(n)
    m = t.conj().T @ np.diag(np.exp(1j * phases)) @ t
    return m * (gain / float(singular_values(m)[0]))


def _phases_inside(rng, n, lo, hi):
    # a random window of width < pi inside the open interval (lo, hi)
    w = min(hi - lo, np.pi - 0.05) * rng.uniform(0.3, 0.999)
    start = rng.uniform(lo, hi - w)
    return rng.uniform(start, start + w, size=n)


def test_criterion_8_matrix_lemmas(emit):
    rng = np.random.default_rng(8)
    worst, viol = np.inf, 0
    n_vase = n_dw = 0
    while n_vase < 8000:
        n = int(rng.integers(1, 4))
        alpha = rng.uniform(-np.pi, np.pi)
        beta = alpha + rng.uniform(0.1, np.pi)
        gamma = 10 ** rng.uniform(-1, 1)
        if rng.random() < 0.6:
            a = _congruent(rng, n, rng.uniform(alpha, beta, size=n), 10 ** rng.uniform(-1, 1.5))
        else:
            a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            a *= gamma * rng.uniform(0.5, 1.0) / float(singular_values(a)[0])
        # b phases inside (-pi - alpha, pi - beta), gain below 1/gamma
        pb = _phases_inside(rng, n, -np.pi - alpha, np.pi - beta)
        b = _congruent(rng, n, pb, rng.uniform(0.2, 0.999) / gamma)
        if not stb.vase_invertibility(a, b, alpha, beta, gamma):
            continue
        n_vase += 1
        d = abs(np.linalg.det(np.eye(n) + a @ b))
        worst = min(worst, d)
        viol += not d > 1e-12
    while n_dw < 2000:
        n = int(rng.integers(2, 4))
        a = _accretive(rng, n, spread=rng.uniform(0.5, 2.8))
        smax = float(singular_values(a)[0])
        r = rng.uniform(0.0, 0.99) * smax
        sec = dwshell.constrained_phase_sector(a, r)
        if sec.empty:
            continue
        lo_b, hi_b = -np.pi - sec.lo, np.pi - sec.hi
        if hi_b - lo_b <= 1e-3:
            continue
        pb = _phases_inside(rng, n, lo_b, hi_b)
        cap = 1.0 / r if r > 0 else 10.0
        b = _congruent(rng, n, pb, rng.uniform(0.2, 0.999) * cap)
        if not stb.dw_matrix_invertibility(a, b, r):
            continue
        n_dw += 1
        d = abs(np.linalg.det(np.eye(n) + a @ b))
        worst = min(worst, d)
        viol += not d > 1e-12
    ok = viol == 0
    emit(8, ok, f"{n_vase} vase-lemma + {n_dw} constrained-phase pairs satisfying the "
                f"hypotheses, {viol} violations, min |det(I+AB)| = {worst:.2e}")
    assert ok


# ---------------------------------------------------------------- criterion 9


def _in_s_set(rng, n, delta, eta):
    # real A with A + A^T > 0 and singular values in [delta, eta]
    while True:
        l = rng.normal(size=(n, n))
        s = l @ l.T / n + 0.05 * np.eye(n)
        w = rng.normal(size=(n, n))
        a = s + rng.uniform(0, 2) * (w - w.T)
        sv = singular_values(a)
        a *= rng.uniform(delta, eta) / sv[0]
        sv = singular_values(a)
        if sv[-1] >= delta and sv[0] <= eta and stb.accretivity_margin(a) > 1e-3:
            return a


def test_criterion_9_robust_stabilization(emit):
    rng = np.random.default_rng(9)
    k, delta, eta, gamma = np.eye(3), 0.5, 2.0, 1.0
    fails, eps_vals = 0, []
    for _ in range(200):
        a = _in_s_set(rng, 3, delta, eta)
        dt = stb.accretivity_margin(k @ a)
        wc = 0.9 * stb.cutoff_limit(k, gamma, dt)
        bound = stb.robust_stabilization_epsilon(k, delta, eta, gamma, wc, delta_tilde=dt)
        p = random_stable(rng, int(rng.integers(1, 4)), 3)
        scale = gamma * rng.uniform(0.5, 1.0) / hinf_norm(p)
        p = StateSpace(p.a, p.b, p.c * scale, p.d * scale)
        plant = StateSpace(np.zeros((3, 3)), np.eye(3), a, np.zeros((3, 3))) + p
        eps = 0.9 * bound.epsilon_sup
        eps_vals.append(eps)
        fails += not is_hurwitz(gang_of_four(plant, StateSpace.static(eps * k)))
    ok = fails == 0
    emit(9, ok, f"200 trials, eps = 0.9/c in [{min(eps_vals):.2e}, {max(eps_vals):.2e}], "
                f"{fails} non-Hurwitz closed loops")
    assert ok


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(pytest.main([__file__, "-v"]))
