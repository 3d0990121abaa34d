import json
import math
import warnings

import numpy as np
import pytest

from vvlab import geometry as geo
from vvlab.errors import ConfigError, DegenerateFitError
from vvlab.study import (
    EulerSpec,
    LayerParams,
    NsParams,
    StudyConfig,
    export_report,
    fit_rate,
    get_preset,
    parse_config_file,
    preset_rigid_annulus,
    run_convergence_study,
    theory_slope,
    weaker_slope,
)

RIGID_BANDS = {"l2": (0.70, 0.90), "h1": (0.20, 0.40),
               "linf": (0.45, 0.65), "lp:4": (0.57, 0.77)}


def test_fit_rate_exact_power_law():
    pairs = [(1e-2, 1e-1), (1e-3, 10 ** (-1.5)), (1e-4, 1e-2)]
    slope, intercept, r2 = fit_rate(pairs)
    assert slope == pytest.approx(0.5, abs=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_rate_constant_errors():
    slope, _, _ = fit_rate([(1e-2, 0.3), (1e-3, 0.3), (1e-4, 0.3)])
    assert slope == 0.0


def test_fit_rate_noisy_power_law():
    rng = np.random.default_rng(1)
    nus = np.logspace(-2, -5, 7)
    pairs = [(nu, 2.0 * nu**0.75 * (1.0 + 0.01 * rng.standard_normal()))
             for nu in nus]
    slope, _, _ = fit_rate(pairs)
    assert slope == pytest.approx(0.75, abs=0.02)


def test_fit_rate_drops_nonpositive_rows():
    with pytest.warns(UserWarning):
        slope, _, _ = fit_rate([(1e-2, 1e-1), (1e-3, 0.0),
                                (1e-4, 1e-2), (1e-5, 10 ** (-2.5))])
    assert slope == pytest.approx(0.5, abs=1e-12)


def test_fit_rate_degenerate():
    with pytest.raises(DegenerateFitError):
        fit_rate([(1e-2, 1e-15), (1e-3, 1e-16), (1e-4, 1e-17)])
    with pytest.raises(ConfigError):
        fit_rate([(1e-2, 1e-1), (1e-3, 1e-2)])


def test_fit_rate_scale_invariance():
    pairs = [(1e-2, 0.11), (1e-3, 0.022), (1e-4, 0.0041), (1e-5, 0.0009)]
    s1, i1, _ = fit_rate(pairs)
    s2, i2, _ = fit_rate([(nu, 17.0 * e) for nu, e in pairs])
    assert s2 == pytest.approx(s1, rel=1e-12)
    assert i2 != pytest.approx(i1, rel=1e-12)


def test_theory_slopes():
    assert theory_slope("l2") == 0.75
    assert theory_slope("h1") == 0.25
    assert theory_slope("linf") == 0.5
    assert theory_slope("lp:4") == 0.5 + 1.0 / 8.0
    assert theory_slope("lp:6") == pytest.approx(0.5 + 1.0 / 12.0)
    assert weaker_slope("lp:4") == pytest.approx(0.3 + 0.9 / 4.0)
    assert weaker_slope("l2") == pytest.approx(0.75)


def test_config_validation(annulus):
    with pytest.raises(ConfigError):
        StudyConfig(geometry=annulus, euler=EulerSpec(family="rigid"),
                    nu_list=(1e-2, 1e-3))                   # too few
    with pytest.raises(ConfigError):
        StudyConfig(geometry=annulus, euler=EulerSpec(family="rigid"),
                    nu_list=(1e-3, 1e-2, 1e-4))             # not decreasing
    with pytest.raises(ConfigError):
        StudyConfig(geometry=annulus, euler=EulerSpec(family="rigid"),
                    nu_list=(1e-2, 3e-3, 1e-3))             # < 2 decades
    with pytest.raises(ConfigError):
        StudyConfig(geometry=annulus, euler=EulerSpec(family="rigid"),
                    nu_list=(2e-2, 1e-3, 1e-4))             # nu > (eta/4)^2
    with pytest.raises(ConfigError):
        StudyConfig(geometry=annulus, euler=EulerSpec(family="rigid"),
                    norms=("l9",))


def test_default_eval_stencil(annulus):
    cfg = StudyConfig(geometry=annulus, euler=EulerSpec(family="rigid"))
    assert len(cfg.t_eval) == 8
    assert cfg.t_eval[0] > 0.0
    assert cfg.t_eval[-1] == pytest.approx(cfg.ns.t_end)


def test_parse_config_file(tmp_path):
    path = tmp_path / "study.cfg"
    path.write_text("""
[geometry]
kind = annulus_gap
r1 = 1.0
r2 = 2.0
eta = 0.45
collar_points = 8

[euler]
family = rigid
omega = 2.0

[layer]
nz = 128
dt = 1e-3
t_end = 0.5

[ns]
nr = 512
dt = 2.5e-4
t_end = 0.5

[study]
nu_list = 1e-2, 1e-3, 1e-4
norms = l2, linf
output_dir = results
""")
    cfg = parse_config_file(path)
    assert cfg.geometry.kind == geo.ANNULUS_GAP
    assert cfg.euler.omega == 2.0
    assert cfg.layer.nz == 128
    assert cfg.ns.n == 512
    assert cfg.nu_list == (1e-2, 1e-3, 1e-4)
    assert cfg.norms == ("l2", "linf")
    assert cfg.output_dir == "results"


def test_parse_config_missing_file():
    with pytest.raises(ConfigError):
        parse_config_file("/no/such/file.cfg")


def test_presets_build():
    for name in ("rigid-annulus", "vortex-annulus", "flat-shear"):
        cfg = get_preset(name)
        assert cfg.preset_name == name
    with pytest.raises(ConfigError):
        get_preset("nope")


# ---------------------------------------------------------------------------
# study behavior on the presets (session-scoped runs from conftest)
# ---------------------------------------------------------------------------


def test_rigid_rates_in_bands(rigid_report):
    for label, (lo, hi) in RIGID_BANDS.items():
        entry = rigid_report.norm_results[label]
        assert lo <= entry["slope"] <= hi, (label, entry["slope"])
        assert entry["status"] == "pass"
        assert entry["r2"] > 0.999


def test_rigid_errors_monotone_in_nu(rigid_report):
    for entry in rigid_report.norm_results.values():
        assert entry["monotone_ok"]


def test_flat_shear_superconvergence_flagged(flat_report):
    entry = flat_report.norm_results["l2"]
    assert entry["slope"] >= 0.9
    assert entry["status"] == "pass"
    assert entry["superconvergent"]


def test_vortex_exact_regime_flag(vortex_report):
    assert vortex_report.exact_regime
    for entry in vortex_report.norm_results.values():
        assert entry["status"] == "exact regime, no fit"


def test_export_report(tmp_path, vortex_report):
    paths = export_report(vortex_report, tmp_path)
    names = sorted(p.split("/")[-1] for p in paths)
    assert names == ["errors.csv", "rates.json", "run_meta.json"]
    lines = (tmp_path / "errors.csv").read_text().splitlines()
    assert lines[0] == "nu,t,norm,value,part"
    parts = {line.split(",")[-1] for line in lines[1:]}
    assert parts == {"u", "R:full", "R:P", "R:I-P"}
    rates = json.loads((tmp_path / "rates.json").read_text())
    assert rates["exact_regime"] is True
    meta = json.loads((tmp_path / "run_meta.json").read_text())
    assert "wall_time_s" in meta and "versions" in meta


def test_export_deterministic_bytes(tmp_path, vortex_report):
    export_report(vortex_report, tmp_path / "a")
    export_report(vortex_report, tmp_path / "b")
    for name in ("errors.csv", "rates.json"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()


def test_jobs_do_not_change_report_bytes(tmp_path):
    # small fast config: byte-identical errors.csv with and without workers
    cfg = StudyConfig(
        geometry=geo.annulus_gap(1.0, 2.0, eta=0.45),
        euler=EulerSpec(family="rigid", omega=1.0),
        layer=LayerParams(nz=128, dt=1e-3, t_end=0.2),
        ns=NsParams(n=256, dt=1e-3, t_end=0.2),
        nu_list=(1e-2, 1e-3, 1e-4),
        norms=("l2", "linf"),
        t_eval=(0.1, 0.2),
        collar_points=4,
    )
    r1 = run_convergence_study(cfg, jobs=1)
    r2 = run_convergence_study(cfg, jobs=2)
    export_report(r1, tmp_path / "serial")
    export_report(r2, tmp_path / "par")
    assert (tmp_path / "serial" / "errors.csv").read_bytes() == \
        (tmp_path / "par" / "errors.csv").read_bytes()
    assert (tmp_path / "serial" / "rates.json").read_bytes() == \
        (tmp_path / "par" / "rates.json").read_bytes()


def test_empty_norm_list_header_only(tmp_path, annulus):
    cfg = StudyConfig(
        geometry=annulus,
        euler=EulerSpec(family="vortex"),
        layer=LayerParams(nz=64, dt=1e-3, t_end=0.2),
        ns=NsParams(n=128, dt=1e-3, t_end=0.2),
        nu_list=(1e-2, 1e-3, 1e-4),
        norms=(),
        t_eval=(0.2,),
        collar_points=4,
    )
    report = run_convergence_study(cfg)
    export_report(report, tmp_path)
    lines = (tmp_path / "errors.csv").read_text().splitlines()
    assert lines == ["nu,t,norm,value,part"]


def test_single_norm_single_entry(tmp_path, annulus):
    cfg = StudyConfig(
        geometry=annulus,
        euler=EulerSpec(family="rigid"),
        layer=LayerParams(nz=64, dt=1e-3, t_end=0.2),
        ns=NsParams(n=256, dt=1e-3, t_end=0.2),
        nu_list=(1e-2, 1e-3, 1e-4),
        norms=("l2",),
        t_eval=(0.1, 0.2),
        collar_points=4,
    )
    report = run_convergence_study(cfg)
    assert list(report.norm_results) == ["l2"]


def test_failed_rows_recorded_and_too_few_fails(monkeypatch, annulus):
    import vvlab.study as study_mod
    from vvlab.errors import SolverError, StepSizeError

    cfg = StudyConfig(
        geometry=annulus,
        euler=EulerSpec(family="vortex"),
        layer=LayerParams(nz=64, dt=1e-3, t_end=0.2),
        ns=NsParams(n=128, dt=1e-3, t_end=0.2),
        nu_list=(1e-2, 3e-3, 1e-3, 1e-4),
        norms=("l2",),
        t_eval=(0.2,),
        collar_points=4,
    )
    real = study_mod._solve_one_nu

    def flaky(config, profile, nu):
        if nu == 3e-3:
            raise StepSizeError("synthetic failure")
        return real(config, profile, nu)

    monkeypatch.setattr(study_mod, "_solve_one_nu", flaky)
    with pytest.warns(UserWarning):
        report = run_convergence_study(cfg)
    assert list(report.meta["failed_rows"]) == [3e-3]
    assert len(report.norm_results["l2"]["rows"]) == 3

    def broken(config, profile, nu):
        if nu != 1e-2:
            raise StepSizeError("synthetic failure")
        return real(config, profile, nu)

    monkeypatch.setattr(study_mod, "_solve_one_nu", broken)
    with pytest.raises(SolverError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        run_convergence_study(cfg)


def test_gradient_remainder_part_bounded(rigid_report):
    # Leray-complement part of the remainder: identically tangential flows
    # keep it at zero, the uniform-boundedness analogue trivially
    vals = [v for (_, _, _, v, part) in rigid_report.rows if part == "R:I-P"]
    assert max(vals) < 1e-12


def test_pressure_recovery(annulus):
    from vvlab.euler import LaurentProfile
    from vvlab.ns import radial_pressure_gradient, solve_ns_swirl

    sol = solve_ns_swirl(annulus, LaurentProfile({-1: 1.0}), nu=1e-2, nr=256,
                         dt=1e-3, t_end=0.1, store_times=[0.1])
    dp = radial_pressure_gradient(sol, 0)
    assert np.allclose(dp, 1.0 / sol.coords**3, atol=1e-6)


def test_golden_rigid_rates(tmp_path, rigid_report):
    # byte comparison against the blessed first run
    import pathlib

    golden = pathlib.Path(__file__).parent / "golden" / "rigid_rates.json"
    export_report(rigid_report, tmp_path)
    produced = (tmp_path / "rates.json").read_bytes()
    if not golden.exists():
        pytest.skip("golden file not generated yet")
    assert produced == golden.read_bytes()
