from debloatkit.harness import SizeStats
from debloatkit.plotting import plot_sizes, reduction_tsv, sizes_tsv

A = SizeStats(97, 2, 26, 2)
B = SizeStats(48, 1, 12, 1)


def test_sizes_tsv():
    text = sizes_tsv([("original", A), ("debloated", B)])
    assert text == ("name\tirInsts\tfuncs\tbasicBlocks\tglobals\n"
                    "original\t97\t2\t26\t2\ndebloated\t48\t1\t12\t1\n")


def test_reduction_tsv():
    rows = [line.split("\t") for line in reduction_tsv(A, B).splitlines()]
    assert rows[0] == ["metric", "before", "after", "reductionPercent"]
    assert rows[1] == ["irInsts", "97", "48", "50.52"]
    assert rows[2] == ["funcs", "2", "1", "50.00"]


def test_reduction_tsv_zero_baseline():
    z = SizeStats(1, 1, 1, 0)
    assert reduction_tsv(z, z).splitlines()[-1] == "globals\t0\t0\t"


def test_plot_png(tmp_path):
    out = tmp_path / "sizes.png"
    plot_sizes([("original", A), ("debloated", B)], out, title="wc -l")
    assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
