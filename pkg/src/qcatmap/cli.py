"""Batch front end: verification suites, character sweeps, distribution runs.

    qcatmap verify       [--matrix 2,1,1,1] [--p 3,5,7,11,13] [--k 1-3]
    qcatmap expsum       --p 101 --k 2 --nu 1 [--out sums.csv]
    qcatmap distribution --p 101 --k 2 --obs observable.json [--out rep.json]

Exit codes: 0 all checks pass, 1 a check failed or a non-finite number
was about to be emitted, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import distribution as dist
from . import expsum, hecke
from .errors import QcatError, RamifiedPrimeError
from .modarith import PrimePower, gauss_quadratic, inv_mod, legendre, sqrt_set
from .quantization import (
    DENSE_CAP_DEFAULT,
    FourierObservable,
    TorusAutomorphism,
    elementary_matrix,
    load_observable,
    propagator,
    row_action,
)

DEFAULT_MATRIX = (2, 1, 1, 1)
DEFAULT_PRIMES = (3, 5, 7, 11, 13)
DEFAULT_KS = (1, 2, 3)
DEFAULT_SEED = 20260809
# default observable modes; Q values -1, 1, 5, 19, 29, 59 for the default matrix
DEFAULT_MODES = ((1, 0), (0, 1), (1, 2), (1, 4), (1, 5), (2, 7))
KS_BOUND = 0.15
SAMPLER_COUNT = 100_000


@dataclass
class RunConfig:
    matrix: tuple[int, int, int, int] = DEFAULT_MATRIX
    p_list: tuple[int, ...] = DEFAULT_PRIMES
    k_list: tuple[int, ...] = DEFAULT_KS
    nu_list: tuple[int, ...] = (1,)
    obs_path: str | None = None
    seed: int = DEFAULT_SEED
    out_path: str | None = None
    fmt: str = "csv"
    jobs: int = 1
    dense_cap: int = DENSE_CAP_DEFAULT
    explicit_p: bool = False  # user passed --p (ramified members then fail hard)


class ConfigError(Exception):
    pass


def _parse_int_list(text: str) -> tuple[int, ...]:
    """Comma list with ranges: '3,5,7' or '1-3' or '1-3,5'."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            cut = part.index("-", 1)
            lo, hi = int(part[:cut]), int(part[cut + 1 :])
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    return tuple(out)


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        fields = {
            "matrix": lambda v: tuple(int(x) for x in v),
            "p": lambda v: tuple(int(x) for x in v),
            "k": lambda v: tuple(int(x) for x in v),
            "nu": lambda v: tuple(int(x) for x in v),
            "obs": str,
            "seed": int,
            "out": str,
            "format": str,
            "jobs": int,
            "dense_cap": int,
        }
        rename = {"p": "p_list", "k": "k_list", "nu": "nu_list", "obs": "obs_path",
                  "out": "out_path", "format": "fmt"}
        for key, conv in fields.items():
            if key in raw:
                cfg = replace(cfg, **{rename.get(key, key): conv(raw[key])})
        if "p" in raw:
            cfg = replace(cfg, explicit_p=True)
    if args.matrix:
        vals = _parse_int_list(args.matrix)
        if len(vals) != 4:
            raise ConfigError("--matrix needs exactly 4 integers a,b,c,d")
        cfg = replace(cfg, matrix=vals)
    if args.p:
        cfg = replace(cfg, p_list=_parse_int_list(args.p), explicit_p=True)
    if args.k:
        cfg = replace(cfg, k_list=_parse_int_list(args.k))
    if args.nu:
        cfg = replace(cfg, nu_list=_parse_int_list(args.nu))
    if args.obs:
        cfg = replace(cfg, obs_path=args.obs)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out:
        cfg = replace(cfg, out_path=args.out)
    if args.format:
        cfg = replace(cfg, fmt=args.format)
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = replace(cfg, jobs=args.jobs)
    return cfg


def _automorphism(cfg: RunConfig) -> TorusAutomorphism:
    try:
        return TorusAutomorphism.from_flat(cfg.matrix)
    except (QcatError, ValueError) as exc:
        raise ConfigError(f"bad matrix {cfg.matrix}: {exc}") from exc


def _usable_modes(A: TorusAutomorphism, p: int) -> list[tuple[int, int]]:
    modes = [n for n in DEFAULT_MODES if dist.quadratic_form(A, n) % p != 0]
    if len({dist.quadratic_form(A, n) for n in modes}) < 4:
        raise ConfigError(f"fewer than 4 usable default modes at p = {p}")
    return modes


# -- verify -------------------------------------------------------------


class CheckTable:
    def __init__(self, stream):
        self.rows: list[tuple[str, bool, str]] = []
        self.stream = stream

    def add(self, name: str, ok: bool, detail: str = ""):
        self.rows.append((name, ok, detail))
        mark = "PASS" if ok else "FAIL"
        print(f"[{mark}] {name}" + (f": {detail}" if detail else ""), file=self.stream)

    def run(self, name: str, fn):
        try:
            ok, detail = fn()
        except QcatError as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        except Exception as exc:  # loud but recorded
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        self.add(name, ok, detail)

    @property
    def all_ok(self) -> bool:
        return all(ok for _, ok, _ in self.rows)


def _check_modarith() -> tuple[bool, str]:
    pp = PrimePower(3, 2)
    assert inv_mod(2, pp) == 5
    for p in (3, 7, 11, 101):
        ppk = PrimePower(p, 2)
        for a in range(1, 20):
            if a % p:
                assert inv_mod(inv_mod(a, ppk), ppk) == a % ppk.N
    for p in (3, 5, 7, 11, 13):
        squares = {(x * x) % p for x in range(1, p)}
        for a in range(1, p):
            assert legendre(a, p) == (1 if a in squares else -1)
    for nu in range(9):
        assert set(sqrt_set(nu, 3, 2)) == {x for x in range(9) if (x * x) % 9 == nu}
    assert abs(gauss_quadratic(0, 0, 7) - 7) < 1e-9
    assert abs(gauss_quadratic(0, 3, 7)) < 1e-9
    assert abs(abs(gauss_quadratic(2, 5, 7)) - math.sqrt(7)) < 1e-9
    return True, "inverses, legendre, sqrt sets, gauss magnitudes"


def _check_quantization(A: TorusAutomorphism, pairs) -> tuple[bool, str]:
    worst_u = worst_e = 0.0
    for pp in pairs:
        U = propagator(A, pp)
        N = pp.N
        err = np.abs(U.entries @ U.entries.conj().T - np.eye(N)).max()
        worst_u = max(worst_u, float(err))
        Amod = A.mat_mod(N)
        for n in [(1, 0), (0, 1), (1, 1), (2, 1), (1, 2), (3, 2), (2, 3), (1, 5)]:
            lhs = U.entries.conj().T @ elementary_matrix(n, pp, twisted=True).entries @ U.entries
            rhs = elementary_matrix(row_action(n, Amod), pp, twisted=True).entries
            worst_e = max(worst_e, float(np.abs(lhs - rhs).max()))
    ok = worst_u < 1e-8 and worst_e < 1e-8
    return ok, f"unitarity {worst_u:.1e}, egorov {worst_e:.1e} over {len(pairs)} spaces"


def _check_hecke(A: TorusAutomorphism, pairs) -> tuple[bool, str]:
    notes = []
    for pp in pairs:
        group = hecke.build_group(A, pp)
        expected = pp.p ** (pp.k - 1) * (pp.p - 1 if group.kind == "split" else pp.p + 1)
        assert group.order == expected
        decomp = hecke.eigendecompose(A, pp)
        mults = sorted(len(v) for v in decomp.clusters.values())
        assert sum(mults) == pp.N
        if group.kind == "inert":
            assert mults[-1] == 1, f"inert multiplicity > 1 at {pp}"
        tr2 = hecke.trace_magnitudes_sq_via_spectrum(decomp)
        for m in range(group.order):
            ker = hecke.qz.fixed_point_count(group.ring.matrix_of(group.element(m)), pp)
            assert abs(tr2[m] - ker) <= 1e-6 * ker, f"trace mismatch at {pp}, m={m}"
        notes.append(f"{pp}:{group.kind[0]}")
    return True, "orders, multiplicities, trace sweep (" + " ".join(notes) + ")"


def _check_expsum(A: TorusAutomorphism, pairs) -> tuple[bool, str]:
    worst = 0.0
    count = 0
    for pp in pairs:
        if pp.k < 2:
            continue
        group = hecke.build_group(A, pp)
        nonres = next(v for v in range(2, pp.p) if legendre(v, pp.p) == -1)
        for nu in (1, 2, nonres):
            for j in range(group.order):
                chi = group.character(j)
                diff = abs(expsum.exp_sum_closed(nu, chi) - expsum.exp_sum_bruteforce(nu, chi))
                worst = max(worst, diff)
                count += 1
    ok = worst < 1e-7
    return ok, f"{count} sums, closed-vs-brute max err {worst:.1e}"


def _check_theorem1(A: TorusAutomorphism, pairs) -> tuple[bool, str]:
    notes = []
    for pp in pairs:
        modes = _usable_modes(A, pp.p)
        rep = dist.verify_matrix_element_formula(A, pp, modes)
        if not rep.unique_up_to_ties:
            return False, f"match not unique at {pp}"
        notes.append(f"{pp}:{rep.sign:+d}")
    return True, "signs " + " ".join(notes)


def _check_slow_decay(A: TorusAutomorphism, primes) -> tuple[bool, str]:
    notes = []
    for p in primes:
        pp = PrimePower(p, 3)
        group = hecke.build_group(A, pp)
        n = next(m for m in DEFAULT_MODES if dist.quadratic_form(A, m) % p != 0)
        nu = dist.quadratic_form(A, n) * pow(2, -1, pp.N) % pp.N
        big = expsum.find_large(group, nu)
        assert big, f"no large sums at p={p}"
        decomp = hecke.eigendecompose(A, pp)
        target = p * p / group.order
        hits = 0
        for _, col in decomp.multiplicity_one_items():
            psi = decomp.state(col)
            el = abs(dist.inner_product(dist.apply_elementary(n, psi), psi))
            if abs(el - target) <= 1e-6 * target:
                hits += 1
        assert hits, f"no eigenfunction realizes 1/(p+-1) at p={p}"
        notes.append(f"p={p}:{len(big)}ch/{hits}ef")
    return True, " ".join(notes)


def _check_distribution(A: TorusAutomorphism, seed: int) -> tuple[bool, str]:
    p = next(q for q in (101, 103, 107, 109) if A.disc % q != 0)
    pp = PrimePower(p, 2)
    f = FourierObservable.harmonic_pair((1, 0))
    sample, _ = dist.normalized_elements_closed(f, A, pp)
    spectrum = dist.twisted_coefficients(f, A)
    model = dist.sample_limit_variable(spectrum, seed, SAMPLER_COUNT)
    rep = dist.compare_distribution(sample, model, winsor_bound=10 * p ** (1 / 6))
    ok = rep.ks <= KS_BOUND
    return ok, f"(p,k)=({p},2) two-sample KS {rep.ks:.4f} <= {KS_BOUND}"


def cmd_verify(cfg: RunConfig, stream=None) -> int:
    stream = stream or sys.stdout
    A = _automorphism(cfg)
    table = CheckTable(stream)
    usable: list[PrimePower] = []
    for p in cfg.p_list:
        try:
            hecke.classify_prime(A, p)
        except RamifiedPrimeError:
            if cfg.explicit_p:
                print(f"error: p = {p} is ramified for D = {A.disc}", file=stream)
                return 2
            table.add(f"p={p}", True, "skipped (ramified)")
            continue
        usable.extend(PrimePower(p, k) for k in sorted(cfg.k_list))
    dense = [pp for pp in usable if pp.N <= cfg.dense_cap]
    skipped = [pp for pp in usable if pp.N > cfg.dense_cap]
    if skipped:
        table.add("dense cap", True, "skipped " + " ".join(str(pp) for pp in skipped))

    table.run("modarith oracles", _check_modarith)
    table.run("quantization invariants", lambda: _check_quantization(A, dense))
    table.run("hecke group/eigen", lambda: _check_hecke(A, dense))
    table.run("expsum oracle equivalence", lambda: _check_expsum(A, dense))
    table.run("matrix-element formula", lambda: _check_theorem1(A, [pp for pp in dense if pp.k >= 2]))
    p3 = sorted({pp.p for pp in dense if pp.k == 3})
    if p3:
        table.run("slow decay (k=3)", lambda: _check_slow_decay(A, p3))
    table.run("limiting distribution", lambda: _check_distribution(A, cfg.seed))
    return 0 if table.all_ok else 1


# -- expsum -------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["p", "k", "nu", "chi_index", "re", "im", "theta", "good", "vanished"])
    for r in records:
        for val in (r.value.real, r.value.imag) + ((r.theta,) if r.good else ()):
            if not math.isfinite(val):
                raise ArithmeticError(f"non-finite value in record {r}")
        writer.writerow(
            [
                r.pp.p,
                r.pp.k,
                r.nu,
                r.chi_index,
                _fmt(r.value.real),
                _fmt(r.value.imag),
                _fmt(r.theta) if r.good else "",
                "true" if r.good else "false",
                "true" if r.vanished else "false",
            ]
        )
    return buf.getvalue()


def cmd_expsum(cfg: RunConfig, stream=None) -> int:
    stream = stream or sys.stdout
    A = _automorphism(cfg)
    if len(cfg.p_list) != 1 or len(cfg.k_list) != 1:
        raise ConfigError("expsum needs exactly one p and one k")
    p, k = cfg.p_list[0], cfg.k_list[0]
    if k < 2:
        raise ConfigError("expsum needs k >= 2 (closed form)")
    for nu in cfg.nu_list:
        if nu % p == 0:
            raise ConfigError(f"nu = {nu} is not a unit mod {p}")
    try:
        group = hecke.build_group(A, PrimePower(p, k))
    except RamifiedPrimeError as exc:
        raise ConfigError(str(exc)) from exc
    records = expsum.scan_characters(group, list(cfg.nu_list), jobs=cfg.jobs)
    text = records_to_csv(records)
    if cfg.out_path:
        with open(cfg.out_path, "w") as fh:
            fh.write(text)
        print(f"wrote {len(records)} records to {cfg.out_path}", file=stream)
    else:
        stream.write(text)
    return 0


# -- distribution -------------------------------------------------------


def observable_digest(f: FourierObservable) -> str:
    canon = ";".join(
        f"{n1},{n2},{complex(c).real:.17g},{complex(c).imag:.17g}"
        for (n1, n2), c in sorted(f.coeffs.items())
    )
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def distribution_report(cfg: RunConfig) -> dict:
    A = _automorphism(cfg)
    if len(cfg.p_list) != 1 or len(cfg.k_list) != 1:
        raise ConfigError("distribution needs exactly one p and one k")
    if not cfg.obs_path:
        raise ConfigError("distribution needs --obs with a JSON observable")
    try:
        f = load_observable(cfg.obs_path, require_real=True)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad observable file: {exc}") from exc
    p, k = cfg.p_list[0], cfg.k_list[0]
    pp = PrimePower(p, k)
    try:
        kind = hecke.classify_prime(A, p)
    except RamifiedPrimeError as exc:
        raise ConfigError(str(exc)) from exc
    spectrum = dist.twisted_coefficients(f, A)
    winsor = 10.0 * p ** (1.0 / 6.0)

    if pp.N <= cfg.dense_cap:
        elements = dist.normalized_elements(f, A, pp)
        sample = elements.empirical
        n_eig = len(sample)
        n_excl = elements.n_excluded_multiplicity
        # the sign is a property of (p, k); pin it on the default mode set
        rep1 = dist.verify_matrix_element_formula(A, pp, _usable_modes(A, p))
        sign = rep1.sign
        matched = rep1.unique_up_to_ties
    else:
        sample, _ = dist.normalized_elements_closed(f, A, pp)
        n_eig = len(sample)
        n_excl = None
        sign = None
        matched = None

    group = hecke.build_group(A, pp)
    halved = sorted({nu * pow(2, -1, pp.N) % pp.N for nu in spectrum})
    n_bad = sum(
        1 for j in range(group.order) if any(not group.character(j).is_good(h) for h in halved)
    )

    if len(spectrum) == 1 and pp.k >= 2:
        ((nu, w),) = spectrum.items()
        scale = abs(complex(w).real) * math.sqrt(pp.N) * p ** (k / 2.0) / group.order
        comp = dist.compare_distribution(sample, dist.ScaledLimitLaw(scale), winsor_bound=winsor)
    else:
        model = dist.sample_limit_variable(spectrum, cfg.seed, SAMPLER_COUNT)
        comp = dist.compare_distribution(sample, model, winsor_bound=winsor)

    report = {
        "p": p,
        "k": k,
        "kind": kind,
        "observable_digest": observable_digest(f),
        "n_eigenfunctions": n_eig,
        "n_excluded_multiplicity": n_excl,
        "n_bad_character": n_bad,
        "ks": comp.ks,
        "moments": comp.moments_left,
        "winsorized": comp.winsorized_left,
        "sign": sign,
        "matched_unique": matched,
    }
    for key, val in report.items():
        if isinstance(val, float) and not math.isfinite(val):
            raise ArithmeticError(f"non-finite {key} in report")
    for m in report["moments"]:
        if not math.isfinite(m):
            raise ArithmeticError("non-finite moment in report")
    return report


def cmd_distribution(cfg: RunConfig, stream=None) -> int:
    stream = stream or sys.stdout
    report = distribution_report(cfg)
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if cfg.out_path:
        with open(cfg.out_path, "w") as fh:
            fh.write(text)
        print(f"wrote report to {cfg.out_path}", file=stream)
    else:
        stream.write(text)
    return 0


# -- entry point --------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcatmap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("verify", "expsum", "distribution"):
        sp = sub.add_parser(name)
        sp.add_argument("--matrix", help="a,b,c,d of the automorphism")
        sp.add_argument("--p", help="prime list, e.g. 3,5,7")
        sp.add_argument("--k", help="exponent list or range, e.g. 1-3")
        sp.add_argument("--nu", help="class values, e.g. 1,2")
        sp.add_argument("--obs", help="observable JSON path")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output path")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--jobs", type=int)
        sp.add_argument("--config", help="JSON config file (flags win)")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "expsum":
            return cmd_expsum(cfg)
        return cmd_distribution(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
