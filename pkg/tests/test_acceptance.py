"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line, repeated in the terminal summary.
"""

import hashlib
import itertools
import time

import numpy as np
import pytest

from pokforge import litho
from pokforge.bitcore import BitString, make_rng, random_bits
from pokforge.cli import main
from pokforge.codes import Hamming74, get_code
from pokforge.engine import (DeviceHandle, Enrollment, PcmSourceParams, PipelineParams, enroll, prf,
                             reconstruct)
from pokforge.errors import KeyMismatchError
from pokforge.fuzzy import HelperData, decode, encode, fe_gen, fe_rep
from pokforge.metrics import inter_distance, intra_distance, mcv_min_entropy, monobit_runs
from pokforge.pcm import LEFT, RIGHT, PcmCell, GrainMap, program_pulse, read_bit, solve_potentials
from pokforge.pcm.cell import _thermal_step
from pokforge.pcm.network import solve_network
from pokforge.xorfold import XorPlan, predicted_bias, xor_fold

from conftest import dense_dirichlet_solve

pytestmark = pytest.mark.acceptance


def test_c1_yield_band(acceptance_line):
    t0 = time.perf_counter()
    surface = litho.YieldSurface()
    fractions = np.array([litho.fabricate_array(surface, 10, 10, 460.0, 52.0, seed=s).connected_fraction()
                          for s in range(500)])
    elapsed = time.perf_counter() - t0
    in_band = float(np.mean((fractions >= 0.40) & (fractions <= 0.60)))
    ok = in_band >= 0.95 and elapsed < 5.0
    acceptance_line("C1 yield band", ok, f"{in_band:.3f} of 500 experiments in [0.40, 0.60], {elapsed:.2f} s")
    assert ok


def test_c2_fuzzy_round_trip(acceptance_line):
    t0 = time.perf_counter()
    code = get_code("rep3")
    per_block = [np.eye(3, dtype=np.uint8)[i] for i in range(3)] + [np.zeros(3, np.uint8)]
    errors = [BitString(np.concatenate(c)) for c in itertools.product(per_block, repeat=4)]
    words = [BitString(b) for b in itertools.product((0, 1), repeat=12)]
    rng = make_rng(2024)
    failures = 0
    for W in words:
        hd, key = fe_gen(code, W, 4, rng)
        for e in errors:
            failures += fe_rep(code, W ^ e, hd) != key
    elapsed = time.perf_counter() - t0

    ham = Hamming74()
    ham_fail = 0
    for m in itertools.product((0, 1), repeat=4):
        c = encode(ham, BitString(m))
        for pos in range(7):
            flip = np.zeros(7, np.uint8)
            flip[pos] = 1
            ham_fail += decode(ham, c ^ BitString(flip)) != BitString(m)
    ok = failures == 0 and ham_fail == 0 and elapsed < 60.0
    acceptance_line("C2 fuzzy extractor", ok,
                    f"{len(words) * len(errors)} rep3 cases, {failures} failures in {elapsed:.1f} s; "
                    f"hamming74 16x7 single errors, {ham_fail} failures")
    assert ok


def test_c3_xor_bias(acceptance_line):
    N = 100_000
    rng = make_rng(3)
    worst = 0.0
    ok = True
    for p in (0.3, 0.4, 0.45, 0.6):
        for g in (1, 2, 4, 8):
            w = random_bits(N * g, p, rng)
            out = xor_fold(XorPlan(g, N * g), w)
            q = predicted_bias(p, g)
            tol = 4 * np.sqrt(q * (1 - q) / N)
            dev = abs(out.popcount() / N - q)
            worst = max(worst, dev / tol)
            ok &= dev <= tol
    acceptance_line("C3 xor de-correlation", ok, f"16 (p, g) cells, worst deviation {worst:.2f} of the 4-sigma bound")
    assert ok


def test_c4_solver(acceptance_line):
    # transient residuals and current conservation on programmed cells
    max_res, max_kcl = 0.0, 0.0
    for seed in range(5):
        res = program_pulse(PcmCell.from_seed(1000 + seed))
        tr = res.trace
        i_top = np.array(tr.i_top)
        max_res = max(max_res, max(tr.residual))
        max_kcl = max(max_kcl, float(np.max(np.abs(i_top - np.array(tr.i_left) - np.array(tr.i_right)) / i_top)))

    # small networks against a dense elimination oracle
    rng = make_rng(4)
    max_err = 0.0
    for _ in range(300):
        n = int(rng.integers(3, 7))
        order = rng.permutation(n)
        edges = {tuple(sorted((int(order[i]), int(order[i + 1])))) for i in range(n - 1)}
        for _ in range(int(rng.integers(0, 6))):
            a, b = rng.integers(0, n, 2)
            if a != b:
                edges.add(tuple(sorted((int(a), int(b)))))
        edges = sorted(edges)
        g = np.exp(rng.uniform(-4, 4, len(edges)))
        k = int(rng.integers(1, n))
        fixed = {int(i): float(v) for i, v in zip(rng.permutation(n)[:k], rng.uniform(-5, 5, k))}
        ref = dense_dirichlet_solve(n, edges, g, fixed)
        got = solve_network(n, edges, g, fixed).potentials
        max_err = max(max_err, float(np.max(np.abs(got - ref)) / max(1.0, np.abs(ref).max())))

    # mirror-symmetric cell heated without melting keeps an even split
    cell = PcmCell(GrainMap.uniform(32, 64))
    max_split = 0.0
    for _ in range(400):
        sol = solve_potentials(cell, 2.0)
        max_split = max(max_split, abs(sol.i_left - sol.i_right) / sol.i_top)
        _thermal_step(cell, sol.power, 2.0)
        if cell.temperature.max() >= cell.params.t_melt:
            break
    ok = max_res <= 1e-8 and max_kcl <= 1e-8 and max_err <= 1e-10 and max_split <= 1e-6
    acceptance_line("C4 pcm solver", ok,
                    f"max residual {max_res:.1e}, max KCL imbalance {max_kcl:.1e}, "
                    f"oracle error {max_err:.1e}, symmetric split {max_split:.1e}")
    assert ok


def test_c5_pcm_programming(acceptance_line):
    t0 = time.perf_counter()
    sides, flips, non_tie, contrast_min, reads_ok = [], 0, 0, np.inf, True
    failures = 0
    for seed in range(200):
        cell = PcmCell.from_seed(seed)
        try:
            res = program_pulse(cell)
        except Exception:
            failures += 1
            continue
        sides.append(res.plugged_side)
        contrast_min = min(contrast_min, res.resistance_contrast)
        h = cell.state_hash()
        bits = {read_bit(cell) for _ in range(100)}
        reads_ok &= bits == {res.bit} and cell.state_hash() == h
        mirror = cell.mirrored()
        try:
            mres = program_pulse(mirror)
        except Exception:
            failures += 1
            continue
        if not res.tie_broken:
            non_tie += 1
            flips += mres.plugged_side != res.plugged_side
    elapsed = time.perf_counter() - t0
    n = len(sides)
    f_left = sides.count(LEFT) / max(n, 1)
    f_right = sides.count(RIGHT) / max(n, 1)
    ok = (failures == 0 and n == 200 and min(f_left, f_right) >= 0.20 and flips == non_tie
          and reads_ok and contrast_min >= 10 and elapsed < 300)
    acceptance_line("C5 pcm programming", ok,
                    f"{n}/200 single plugs, left {f_left:.2f} right {f_right:.2f}, mirror flips {flips}/{non_tie}, "
                    f"100 reads stable {reads_ok}, min contrast {contrast_min:.1f}, {elapsed:.0f} s")
    assert ok


def test_c6_reliable_pipeline(acceptance_line):
    t0 = time.perf_counter()
    litho_fail = 0
    for seed in range(1000):
        dev = DeviceHandle("litho", seed)
        enr, key = enroll(dev, "xor", PipelineParams(group_size=4))
        try:
            litho_fail += reconstruct(dev, enr) != key
        except KeyMismatchError:
            litho_fail += 1

    pcm_fail = 0
    params = PcmSourceParams(n_cells=4)
    for seed in range(200):
        dev = DeviceHandle("pcm", seed, params)
        enr, key = enroll(dev, "xor", PipelineParams(group_size=2))
        try:
            pcm_fail += reconstruct(dev, enr) != key
        except KeyMismatchError:
            pcm_fail += 1

    record = enr.to_bytes()
    no_helper = (enr.helper is None and b"POKH" not in record
                 and len(record) == 4 + 2 + 2 + len(enr.device_id) + 8 + 4 + 16 + 4)
    elapsed = time.perf_counter() - t0
    ok = litho_fail == 0 and pcm_fail == 0 and no_helper
    acceptance_line("C6 xor-only reliability", ok,
                    f"litho 1000 devices {litho_fail} KCV failures, pcm 200 devices {pcm_fail} KCV failures, "
                    f"record without helper data {no_helper}, {elapsed:.0f} s")
    assert ok


def test_c7_metrics(acceptance_line):
    litho_dev = DeviceHandle("litho", 1)
    pcm_dev = DeviceHandle("pcm", 1, PcmSourceParams(n_cells=4))
    intra_litho = intra_distance([litho_dev.read() for _ in range(10)])
    intra_pcm = intra_distance([pcm_dev.read() for _ in range(10)])
    rng = make_rng(7)
    inter = inter_distance([random_bits(128, 0.5, rng) for _ in range(50)])
    h = mcv_min_entropy(random_bits(100_000, 0.5, rng))
    key = BitString.from_packed(bytes(range(16)), 128)
    stream = b"".join(prf(key, i.to_bytes(4, "big")) for i in range(40))
    t = monobit_runs(BitString.from_packed(stream, 10_000))
    ok = (intra_litho == 0 and intra_pcm == 0 and abs(inter - 0.5) <= 0.02 and h >= 0.95
          and t.monobit_pass and t.runs_pass)
    acceptance_line("C7 metrics", ok,
                    f"intra litho {intra_litho} pcm {intra_pcm}, inter {inter:.4f}, mcv {h:.4f}, "
                    f"prf monobit z {t.monobit_z:.2f} runs z {t.runs_z:.2f}")
    assert ok


def _cli_outputs(tmp, capsys):
    runs = [
        ["litho-map", "--seed", "5"],
        ["pcm-sim", "--seed", "7"],
        ["enroll", "--seed", "5", "--pipeline", "fe", "--code", "rep5"],
        ["analyze", "--seed", "5", "--set", "analyze.n_devices=5", "--set", "analyze.n_reads=2"],
    ]
    for argv in runs:
        assert main(argv + ["--out", str(tmp)]) == 0
    capsys.readouterr()
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(tmp.iterdir())}


def test_c8_bit_exact(acceptance_line, tmp_path, capsys):
    rng = make_rng(8)
    helper_ok = True
    for name, n_bits, out_len in [("rep3", 36, 8), ("rep5", 100, 20), ("hamming74", 70, 32),
                                  ("bch15_7", 60, 0)]:
        hd, _ = fe_gen(get_code(name), random_bits(n_bits, 0.5, rng), out_len, rng)
        data = hd.to_bytes()
        helper_ok &= HelperData.from_bytes(data) == hd and HelperData.from_bytes(data).to_bytes() == data

    enroll_ok = True
    for pipeline in ("fe", "xor"):
        enr, _ = enroll(DeviceHandle("litho", 3), pipeline, PipelineParams(code="hamming74"), rng=rng)
        data = enr.to_bytes()
        enroll_ok &= Enrollment.from_bytes(data) == enr and Enrollment.from_bytes(data).to_bytes() == data

    vector = prf(BitString.from_packed(b"\x0b" * 20, 160), b"Hi There").hex()
    rfc_ok = vector == "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"

    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    ha, hb = _cli_outputs(a, capsys), _cli_outputs(b, capsys)
    cli_ok = ha == hb and len(ha) == 6
    ok = helper_ok and enroll_ok and rfc_ok and cli_ok
    acceptance_line("C8 bit-exact interfaces", ok,
                    f"helper data {helper_ok}, enrollment {enroll_ok}, RFC 4231 case 1 {rfc_ok}, "
                    f"{len(ha)} CLI artifacts identical {cli_ok}")
    assert ok
