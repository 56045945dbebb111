import numpy as np
import pytest

from dmcc import io, plotdata


def test_contact_windows_partition_progress(small_static_plan):
    wins = plotdata.contact_windows(small_static_plan)
    assert wins
    assert sum(w[4] for w in wins) == pytest.approx(small_static_plan.spec.kappa_init, abs=1e-9)
    active = set(small_static_plan.contact_knots())
    covered = {k for a, b, *_ in wins for k in range(a, b + 1)}
    assert covered == active
    for a, b, t0, t1, _ in wins:
        assert a <= b and t0 < t1


def test_figure_files(small_static_plan, tmp_path):
    p5 = plotdata.fig5(small_static_plan, tmp_path)
    p6 = plotdata.fig6(small_static_plan, tmp_path)
    p7 = plotdata.fig7(small_static_plan, tmp_path)
    t6 = io.read_csv(p6[0], plotdata.FIG6_COLUMNS)
    ee, tg = t6[:, 2:5], t6[:, 8:11]
    np.testing.assert_allclose(t6[:, 14], np.linalg.norm(ee - tg, axis=1))
    np.testing.assert_allclose(tg, np.tile(small_static_plan.spec.target.position(0.0), (21, 1)))
    assert np.isnan(t6[-1, 5:8]).all()
    t5 = io.read_csv(p5[0], plotdata.FIG5_COLUMNS)
    np.testing.assert_allclose(t5[:, 8], ee[:, 0])
    io.read_csv(p7[0], plotdata.FIG7_COLUMNS)
    for p in (p5[1], p6[1], p7[1]):
        io.read_csv(p, plotdata.WINDOW_COLUMNS)


def test_fig8_selects_columns(tmp_path):
    table = np.arange(3 * len(io.TRACK_COLUMNS), dtype=float).reshape(3, -1)
    (path,) = plotdata.fig8(table, tmp_path)
    out = io.read_csv(path, plotdata.FIG8_COLUMNS)
    names = [c for c, _ in io.TRACK_COLUMNS]
    np.testing.assert_array_equal(out[:, 7], table[:, names.index("error")])
