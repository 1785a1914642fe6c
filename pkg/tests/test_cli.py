import json

import numpy as np
import pytest

from adaptext import io
from adaptext.cli import main
from adaptext.representation import AdaptiveTextRegion
from adaptext.train import TrainConfig


def rect14(x0=0.0, y0=0.0, w=120.0, h=30.0):
    xs = np.linspace(x0, x0 + w, 7)
    top = [[x, y0] for x in xs]
    bottom = [[x, y0 + h] for x in xs[::-1]]
    return top + bottom


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))


def test_convert_ctw14_rectangle(tmp_path, capsys):
    src, out = tmp_path / "in.jsonl", tmp_path / "out.jsonl"
    write_jsonl(src, [{"image_id": "a", "regions": [rect14()]}])
    assert main(["convert", "--from", "ctw14", "--in", str(src), "--out", str(out)]) == 0
    (rec,) = io.read_jsonl(out)
    assert rec.regions[0].num_pairs == 2
    summary = json.loads(capsys.readouterr().out)
    assert summary["pair_count_histogram"] == {"2": 1}
    assert summary["per_record"][0]["area_ratios"] == [1.0]


def test_convert_quad(tmp_path):
    src, out = tmp_path / "in.jsonl", tmp_path / "out.jsonl"
    write_jsonl(src, [{"image_id": "q", "regions": [[[0, 0], [10, 0], [10, 4], [0, 4]]]}])
    assert main(["convert", "--from", "quad", "--in", str(src), "--out", str(out)]) == 0
    region = io.read_jsonl(out)[0].regions[0]
    assert region.num_pairs == 2
    np.testing.assert_array_equal(region.tops, [[0, 0], [10, 0]])


def test_convert_text_file(tmp_path):
    src, out = tmp_path / "img_7.txt", tmp_path / "out.jsonl"
    flat = ",".join(str(v) for p in rect14() for v in p)
    src.write_text(flat + ",hello\n" + flat + ",###\n")
    assert main(["convert", "--from", "ctw14", "--in", str(src), "--out", str(out)]) == 0
    (rec,) = io.read_jsonl(out)
    assert rec.image_id == "img_7" and rec.ignore == [False, True]


def test_convert_malformed_line_names_it(tmp_path, capsys):
    src = tmp_path / "in.txt"
    good = ",".join(str(v) for p in rect14() for v in p)
    src.write_text(good + "\n" + "1,2,3\n")
    code = main(["convert", "--from", "ctw14", "--in", str(src), "--out", str(tmp_path / "o.jsonl")])
    assert code == 1
    assert ":2:" in capsys.readouterr().err


def test_convert_bad_json_line(tmp_path, capsys):
    src = tmp_path / "in.jsonl"
    src.write_text('{"image_id": "a", "regions": []}\n{not json\n')
    assert main(["convert", "--from", "quad", "--in", str(src), "--out", str(tmp_path / "o.jsonl")]) == 1
    assert ":2:" in capsys.readouterr().err


def test_pairs_round_trip_lossless(tmp_path):
    region = AdaptiveTextRegion([[1.25, 2.5], [10.125, 3.0], [20.0, 2.0]], [[1.0, 9.5], [10.0, 11.0], [20.5, 10.0]])
    rec = io.AnnotationRecord("x", [region], "pairs", [0.75], None)
    path = tmp_path / "r.jsonl"
    io.write_jsonl([rec], path)
    (back,) = io.read_jsonl(path)
    np.testing.assert_array_equal(back.regions[0].tops, region.tops)
    np.testing.assert_array_equal(back.regions[0].bottoms, region.bottoms)
    assert back.scores == [0.75]
    io.write_jsonl([back], tmp_path / "r2.jsonl")
    assert (tmp_path / "r2.jsonl").read_text() == path.read_text()


def _box(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def test_eval_outputs_json(tmp_path, capsys):
    gts, dets = tmp_path / "g.jsonl", tmp_path / "d.jsonl"
    write_jsonl(gts, [{"image_id": "a", "regions": [_box(0, 0, 1, 1), _box(5, 5, 6, 6)]}])
    write_jsonl(dets, [{"image_id": "a", "regions": [_box(0, 0, 1, 1)], "scores": [0.9]}])
    assert main(["eval", "--dets", str(dets), "--gts", str(gts)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["recall"] == 0.5 and report["precision"] == 1.0
    assert report["hmean"] == pytest.approx(2 / 3)
    assert "per_image" not in report


def test_eval_detections_for_unknown_image(tmp_path):
    gts, dets = tmp_path / "g.jsonl", tmp_path / "d.jsonl"
    write_jsonl(gts, [{"image_id": "a", "regions": [_box(0, 0, 1, 1)]}])
    write_jsonl(dets, [{"image_id": "b", "regions": [_box(0, 0, 1, 1)], "scores": [0.9]}])
    assert main(["eval", "--dets", str(dets), "--gts", str(gts)]) == 1


def test_nms_command(tmp_path):
    src, out = tmp_path / "d.jsonl", tmp_path / "k.jsonl"
    write_jsonl(src, [{"image_id": "a", "regions": [_box(0, 0, 1, 1), _box(0, 0, 2, 1), _box(1, 0, 2, 1)],
                       "scores": [0.9, 0.8, 0.7]}])
    assert main(["nms", "--iou", "0.3", "--in", str(src), "--out", str(out)]) == 0
    (rec,) = io.read_jsonl(out, "raw")
    assert rec.scores == [0.9, 0.7]


def _plot(tmp_path, regions):
    src, out = tmp_path / "p.jsonl", tmp_path / "p.svg"
    io.write_jsonl([io.AnnotationRecord("img", regions)], src)
    assert main(["plot", "--in", str(src), "--out", str(out)]) == 0
    return out.read_text()


def test_plot_empty(tmp_path):
    svg = _plot(tmp_path, [])
    assert svg.startswith("<?xml") and "<svg" in svg and "<polygon" not in svg


def test_plot_two_pairs(tmp_path):
    svg = _plot(tmp_path, [AdaptiveTextRegion([[0, 0], [10, 0]], [[0, 4], [10, 4]])])
    poly = svg.split('<polygon points="')[1].split('"')[0]
    assert len(poly.split()) == 4
    assert svg.count('class="rung"') == 2


def test_plot_seven_pairs(tmp_path):
    region = AdaptiveTextRegion.from_polygon(np.array(rect14()))
    svg = _plot(tmp_path, [region])
    assert svg.count('class="pt"') == 14
    assert svg.count('class="rung"') == 7


def test_grad_check_command(capsys):
    assert main(["grad-check", "--seed", "0", "--hidden", "8", "--steps", "4"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["max_rel_error"] <= 1e-4


SMALL = "dataset_size = 24\nepochs = 3\nhidden_dim = 16\nholdout = 0.25\n"


def test_toy_train_deterministic(tmp_path):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text(SMALL)
    for name in ("a", "b"):
        assert main(["toy-train", "--config", str(cfg), "--seed", "5", "--out-dir", str(tmp_path / name)]) == 0
    a, b = (tmp_path / "a" / "metrics.csv").read_bytes(), (tmp_path / "b" / "metrics.csv").read_bytes()
    assert a == b
    assert len(a.splitlines()) == 1 + 4
    assert (tmp_path / "a" / "checkpoint.json").exists()


def test_config_parsing(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\nseed = 3\nlr = 0.05  # inline\nkind = sine\n")
    cfg = TrainConfig.from_file(path)
    assert (cfg.seed, cfg.lr, cfg.kind, cfg.epochs) == (3, 0.05, "sine", 50)
    assert TrainConfig.from_file(_write(tmp_path, cfg.to_text())) == cfg


def _write(tmp_path, text):
    p = tmp_path / "round.cfg"
    p.write_text(text)
    return p


@pytest.mark.parametrize("text, where", [("seed 3\n", ":1:"), ("\nbogus = 1\n", ":2:"), ("epochs = many\n", ":1:")])
def test_config_errors_name_line(tmp_path, text, where):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    with pytest.raises(ValueError, match=where):
        TrainConfig.from_file(path)
    assert main(["toy-train", "--config", str(path)]) == 1
