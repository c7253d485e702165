"""Plot-ready data files: gnuplot-compatible whitespace columns + script stubs."""

import os

import numpy as np


def _write_data(path, header_cols, rows):
    with open(path, "w") as fh:
        fh.write("# " + " ".join(header_cols) + "\n")
        for row in rows:
            fh.write(" ".join(f"{v:.10g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _write_stub(path, data_file, title, xlabel, ylabel, using="1:2"):
    with open(path, "w") as fh:
        fh.write(f"set title '{title}'\n")
        fh.write(f"set xlabel '{xlabel}'\nset ylabel '{ylabel}'\n")
        fh.write(f"plot '{os.path.basename(data_file)}' using {using} with lines\n")


def emit_speed_profile(record, out_base):
    """(progress, speed) per control step, as raced."""
    rows = [(float(p), float(st.v)) for p, st in zip(record.progress, record.states)]
    data = out_base + ".dat"
    _write_data(data, ["s_m", "v_mps"], rows)
    _write_stub(out_base + ".gp", data, "speed profile", "s [m]", "v [m/s]")
    return data


def emit_trajectory(record, out_base):
    """(x, y, speed) per control step; third column colors the path."""
    rows = [(float(st.x), float(st.y), float(st.v)) for st in record.states]
    data = out_base + ".dat"
    _write_data(data, ["x_m", "y_m", "v_mps"], rows)
    with open(out_base + ".gp", "w") as fh:
        fh.write("set title 'trajectory colored by speed'\n")
        fh.write("set size ratio -1\n")
        fh.write(f"plot '{os.path.basename(data)}' using 1:2:3 with points palette pt 7\n")
    return data


def slip_box_stats(records):
    """Median/quartile/extreme |slip| per record set, for box-whisker plots."""
    slips = np.abs(np.concatenate([
        [st.beta for st in rec.states] for rec in records
    ]))
    q1, med, q3 = np.percentile(slips, [25, 50, 75])
    return {
        "min": float(slips.min()),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "max": float(slips.max()),
    }


def emit_slip_box(labelled_records, out_base):
    """One box-whisker row per label from raw episode slip angles."""
    rows = []
    for i, (label, records) in enumerate(labelled_records):
        st = slip_box_stats(records)
        rows.append((i, st["min"], st["q1"], st["median"], st["q3"], st["max"], label))
    data = out_base + ".dat"
    with open(data, "w") as fh:
        fh.write("# idx min q1 median q3 max label\n")
        for row in rows:
            fh.write(" ".join(f"{v:.10g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")
    with open(out_base + ".gp", "w") as fh:
        fh.write("set title 'slip angle distribution'\n")
        fh.write("set style data boxplot\n")
        fh.write(f"plot '{os.path.basename(data)}' using 1:3:2:6:5 with candlesticks"
                 " whiskerbars, '' using 1:4:4:4:4 with candlesticks lt -1\n")
    return data


def emit_learning_curves(curves, out_base):
    """(step, mean, min, max) per training run."""
    data = out_base + ".dat"
    with open(data, "w") as fh:
        fh.write("# step mean_progress min_progress max_progress per block\n")
        for tag, curve in sorted(curves.items()):
            fh.write(f'# run {tag}\n')
            for step, mean, lo, hi in curve:
                fh.write(f"{step} {mean:.6g} {lo:.6g} {hi:.6g}\n")
            fh.write("\n\n")
    _write_stub(out_base + ".gp", data, "training progress", "step", "mean progress",
                using="1:2")
    return data


def emit_sweep_table(summaries, out_base):
    """Completion/lap-time vs (mu, control_hz, pose) in plot-ready columns."""
    rows = []
    for s in summaries:
        rows.append((s.mu, s.control_hz, s.pose_source, s.planner,
                     s.completion_rate, s.mean_lap_time))
    data = out_base + ".dat"
    with open(data, "w") as fh:
        fh.write("# mu control_hz pose planner completion_pct mean_lap_s\n")
        for row in rows:
            fh.write(" ".join(f"{v:.10g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")
    _write_stub(out_base + ".gp", data, "completion vs friction", "mu",
                "completion [%]", using="1:5")
    return data
