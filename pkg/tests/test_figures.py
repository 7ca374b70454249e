import pytest

from fkmerton import figures


def test_h_surface_renders(paper_solve, tmp_path):
    path = tmp_path / "surface.png"
    figures.render_h_surface(paper_solve.h, path)
    assert path.stat().st_size > 5000


def test_delta_curve_handles_underflowed_metric(paper_solve, tmp_path):
    # the weighted metric underflows to zero on this run; zeros must be
    # masked rather than break the log axis
    assert 0.0 in paper_solve.metric_seq
    path = tmp_path / "deltas.png"
    figures.render_delta_curve(paper_solve.delta_seq, path,
                               metric_seq=paper_solve.metric_seq)
    assert path.stat().st_size > 5000


def test_surface_rejects_two_factor_grids():
    from fkmerton import Grid, GridFunction
    grid = Grid.build(1.0, 5, [(-1, 1), (-1, 1)], [4, 4])
    with pytest.raises(ValueError):
        figures.render_h_surface(GridFunction.constant(grid, 1.0), "x.png")
