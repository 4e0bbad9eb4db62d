"""Smoke test for the d2cip_py extension module.

Build the module first (see README), then run:

    PYTHONPATH=python python3 python/smoke_test.py
"""

import json
import math
import tempfile

import d2cip_py as d


def main():
    a = d.TargetState([10.0, 10.0], [4.0, 4.0])
    b = d.TargetState.from_corner_box(8.0, 8.0, 4.0, 4.0)
    assert a.iou(b) == 1.0 and a.distance_to(b) == 0.0
    assert a.corners() == [8.0, 8.0, 12.0, 12.0]

    assert math.isclose(d.effective_sample_size([1, 1, 1, 1]), 4.0)
    assert math.isclose(d.effective_sample_size([0.5, 0.25, 0.25]), 1 / 0.375)

    scores = [0.1] * 9
    scores[5] = 0.9
    peak, score, lik = d.response_peak(scores, 3, 3, [20.0, 30.0])
    assert peak == [21.0, 30.0] and score == 0.9
    assert math.isclose(lik, 0.1 * 8 + 0.9)

    seq = d.generate("distractor", seed=1, frames=20)
    assert len(seq) == 20 and len(seq.truth) == 20
    w, h, pixels = seq.frame(0)
    assert len(pixels) == w * h

    result = d.track(seq, {"variant": "D2CIP", "seed": 3, "n_total": 100})
    precision, auc, pcurve, scurve = result.metrics()
    assert result.variant == "D2CIP" and len(result.estimates) == 20
    assert 0.0 <= auc <= 1.0 and len(pcurve) == 51 and len(scurve) == 101
    assert json.loads(result.to_json())["seed"] == 3
    print(f"track: precision {precision:.3f}, success AUC {auc:.3f}")

    with tempfile.TemporaryDirectory() as tmp:
        seq.save(tmp)
        loaded = d.load_sequence(tmp)
        assert len(loaded) == 20

    csv = d.ablate([seq], [0], {"n_total": 60})
    assert csv.splitlines()[0] == "variant,metric,value,gain"
    print(csv, end="")

    try:
        d.track(seq, {"gamma": 2})
    except ValueError as e:
        print(f"bad config rejected: {e}")
    else:
        raise AssertionError("gamma = 2 accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
