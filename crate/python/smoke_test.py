"""Smoke test for the pyinterp3d extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`
or `pip install ./crates/python`, then run `python python/smoke_test.py`.
"""

import math

import pyinterp3d as m


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    chair = m.BaseShapes.bundled("chair")
    assert chair.num_keypoints == 10 and chair.num_bases == 4
    assert len(chair.edges) == 11

    mean = chair.compose([0.0, 0.0, 0.0])
    assert len(mean) == 10

    # parallel projection of the identity pose keeps x, y
    s = m.ParamVector([0.0, 0.0, 0.0])
    x = m.project(s, chair)
    assert all(close(p[0], q[0]) and close(p[1], q[1]) for p, q in zip(x, mean))

    jac = m.projection_jacobian(s, chair)
    assert len(jac) == 20 and len(jac[0]) == 10

    r = m.rotation_matrix(0.3, 0.2, 0.1)
    det = (r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
           - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
           + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]))
    assert close(det, 1.0)

    samples = m.generate(chair, 3, seed=7)
    again = m.generate(chair, 3, seed=7)
    assert samples[0].heatmaps() == again[0].heatmaps()
    assert samples[0].heatmap_shape == (10, 30, 40)

    sample = samples[0]
    truth = sample.params
    fit = m.fit(chair, m.project(truth, chair), restarts=4)
    rmse = m.rmse_3d(chair.compose(fit.params.alpha_free), chair.compose(truth.alpha_free))
    assert rmse < 1e-3, rmse

    rmse_h, az, _ = m.score(m.fit_sample(chair, sample, restarts=2).params, sample, chair)
    assert rmse_h < 0.15 and 0.0 <= az <= 180.0

    assert close(m.azimuth_error(math.radians(10), math.radians(350)), 20.0)
    recall, avg = m.recall_curve([0.1, 0.2, 0.3], [0.25])
    assert close(recall[0], 2 / 3) and close(avg, 2 / 3)
    gt = [[0.0, 0.0], [1.0, 0.0]]
    assert m.pck(gt, gt, 1.0, 0.1) == 1.0
    assert m.pcp(gt, gt, [1.0, 1.0]) == 100.0
    assert m.average_error([[7.0, 0.0], [1.0, 0.0]], gt) == 2.5

    ranked = m.retrieve(truth, [samples[1].params, truth], "structure", 1)
    assert ranked == [(1, 0.0)]

    obj = chair.to_obj([0.0, 0.0, 0.0])
    assert sum(line.startswith("v ") for line in obj.splitlines()) == 10

    try:
        m.BaseShapes.bundled("sofa")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown model should raise")

    print("pyinterp3d smoke test passed")


if __name__ == "__main__":
    main()
