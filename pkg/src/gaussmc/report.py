"""Plain-text, key=value and CSV renderings of evaluation reports and EM traces."""
import csv


def format_table(report, title="", baseline=None):
    rows = [("run", "seed", "mae", "nmae")]
    seeds = report.seeds or tuple(range(report.runs))
    for k, (mae, nm) in enumerate(zip(report.per_run_mae, report.per_run_nmae)):
        rows.append((str(k + 1), str(seeds[k]), f"{mae:.4f}", f"{nm:.4f}"))
    rows.append(("mean", "", f"{report.mae:.4f}", f"{report.nmae:.4f}"))
    if baseline is not None:
        rows.append(("mean-fill", "", f"{baseline.mae:.4f}", f"{baseline.nmae:.4f}"))
    widths = [max(len(r[c]) for r in rows) for c in range(4)]
    out = [title] if title else []
    for k, r in enumerate(rows):
        out.append("  ".join(v.rjust(w) for v, w in zip(r, widths)))
        if k == 0 or k == len(rows) - 2 - (baseline is not None):
            out.append("  ".join("-" * w for w in widths))
    out.append(f"factor={report.normalization_factor!r}  n_predictions={report.n_predictions}"
               f"  wall_time={report.wall_time:.2f}s")
    return "\n".join(out) + "\n"


def write_kv(path, values):
    """One ``key=value`` line per entry, in insertion order."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in values.items():
            fh.write(f"{key}={value!r}\n" if isinstance(value, float) else f"{key}={value}\n")


def read_kv(path):
    """Parse a ``key=value`` file; blank lines and ``#`` comments are skipped."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            out[key.strip()] = value.strip()
    return out


def write_runs_csv(path, report):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "seed", "mae", "nmae"])
        seeds = report.seeds or tuple(range(report.runs))
        for k, (mae, nm) in enumerate(zip(report.per_run_mae, report.per_run_nmae)):
            w.writerow([k + 1, seeds[k], repr(mae), repr(nm)])


def write_trace_csv(path, trace):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "log_posterior", "objective", "seconds", "checksum"])
        for r in trace:
            w.writerow([r.iteration, repr(r.log_posterior), repr(r.objective),
                        f"{r.seconds:.6f}", r.checksum])
