import pytest

from llspin.calibration import calibrate_rates, lls_kind, model_frontier, recovery_grid, storage_grid
from llspin.errors import SimulationError
from llspin.experiments import run_lifetime_experiment
from llspin.fitting import fit_inversion_recovery, fit_monoexponential
from llspin.sample import REFERENCE_ROWS, system_at


@pytest.mark.parametrize("row", REFERENCE_ROWS, ids=lambda r: f"{r.phase}-{r.temperature:g}K")
def test_reference_row_closure(row):
    sys = system_at(row.temperature)
    cal = calibrate_rates((row.t1, row.t_lls), sys)
    assert cal.kind == ("LLS-pop" if row.phase == "POP" else "LLS-ip")
    # re-run the drivers independently of the calibrator's own bookkeeping
    t1 = fit_inversion_recovery(run_lifetime_experiment("T1", recovery_grid(row.t1), sys, cal.model))["T1"]
    lls = fit_monoexponential(run_lifetime_experiment(cal.kind, storage_grid(row.t_lls), sys, cal.model))["lifetime"]
    assert t1 == pytest.approx(row.t1, rel=0.02)
    assert lls == pytest.approx(row.t_lls, rel=0.02)
    assert (t1, lls) == pytest.approx(cal.achieved, rel=1e-9)


def test_lls_kind_follows_coupling_regime():
    assert lls_kind(system_at(294.0)) == "LLS-pop"
    assert lls_kind(system_at(305.0)) == "LLS-ip"


def test_non_convergence_reports_diagnostics():
    with pytest.raises(SimulationError) as info:
        calibrate_rates((1.1, 3.7), system_at(294.0), tol=1e-12, max_rounds=1)
    assert set(info.value.diagnostics) == {"targets", "achieved", "rates"}


def test_frontier_text():
    assert "T_LLS > T1" in model_frontier()
