"""Run records, CSV tables and static SVG figures bundled with a manifest."""
import hashlib
import json
from pathlib import Path
from xml.sax.saxutils import escape

from . import __version__
from .transfer import fingerprint

# -- records ---------------------------------------------------------------------


def records_jsonl(records):
    """One sorted-key JSON object per line; wall-clock time is left out."""
    return "".join(r.to_json() + "\n" for r in records)


def read_records(path):
    from .transfer import RunRecord
    with open(path, encoding="utf-8") as f:
        return [RunRecord.from_dict(json.loads(line)) for line in f if line.strip()]


# -- SVG ----------------------------------------------------------------------------

def _num(x):
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _svg(width, height, body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(width)}" height="{_num(height)}" '
            f'viewBox="0 0 {_num(width)} {_num(height)}" font-family="sans-serif" font-size="11">\n'
            + "".join(line + "\n" for line in body) + "</svg>\n")


def accuracy_curve_svg(accuracy, reference=None, title="", reference_label="supervised"):
    """Accuracy per epoch as a polyline; ``reference`` draws a dashed horizontal line."""
    W, H, left, right, top, bottom = 480, 300, 50, 20, 30, 40
    pw, ph = W - left - right, H - top - bottom
    vals = [float(a) for a in accuracy] + ([float(reference)] if reference is not None else [])
    lo, hi = min(vals), max(vals)
    pad = max(0.02, 0.1 * (hi - lo))
    lo, hi = max(0.0, lo - pad), min(1.0, hi + pad)
    if hi <= lo:
        lo, hi = max(0.0, lo - 0.05), min(1.0, hi + 0.05)
    n = max(len(accuracy) - 1, 1)

    def xy(i, a):
        return left + pw * i / n, top + ph * (1 - (a - lo) / (hi - lo))

    body = [f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>']
    if title:
        body.append(f'<text x="{W / 2:.0f}" y="18" text-anchor="middle">{escape(title)}</text>')
    body.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    body.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    for k in range(5):
        a = lo + (hi - lo) * k / 4
        _, y = xy(0, a)
        body.append(f'<text x="{left - 4}" y="{_num(y + 4)}" text-anchor="end">{100 * a:.1f}</text>')
    for i in range(len(accuracy)):
        x, _ = xy(i, lo)
        body.append(f'<text x="{_num(x)}" y="{top + ph + 16}" text-anchor="middle">{i}</text>')
    body.append(f'<text x="{left + pw / 2:.0f}" y="{H - 6}" text-anchor="middle">epoch</text>')
    if reference is not None:
        _, y = xy(0, float(reference))
        body.append(f'<line class="reference" x1="{left}" y1="{_num(y)}" x2="{left + pw}" y2="{_num(y)}" '
                    f'stroke="grey" stroke-dasharray="6,4"/>')
        body.append(f'<text x="{left + pw}" y="{_num(y - 4)}" text-anchor="end" fill="grey">'
                    f'{escape(reference_label)} {100 * float(reference):.1f}</text>')
    pts = " ".join(f"{_num(x)},{_num(y)}" for x, y in (xy(i, float(a)) for i, a in enumerate(accuracy)))
    body.append(f'<polyline class="curve" points="{pts}" fill="none" stroke="steelblue" stroke-width="2"/>')
    for i, a in enumerate(accuracy):
        x, y = xy(i, float(a))
        body.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="3" fill="steelblue"/>')
    return _svg(W, H, body)


def heat_color(w, wmax):
    """White at 0, pure red at ``wmax``; the green/blue channel falls monotonically."""
    t = 0.0 if wmax <= 0 else min(max(w / wmax, 0.0), 1.0)
    c = int(round(255 * (1 - t)))
    return f"#ff{c:02x}{c:02x}"


def attention_heatmap_svg(export, title=""):
    """One row per story sentence, one cell per token, redder for more attention."""
    cell_h, char_w, gap, left, top = 22, 7, 4, 60, 30 if title else 10
    weights = [list(map(float, row)) for row in export.word_level]
    wmax = max((w for row in weights for w in row), default=0.0)
    widths = [[max(len(t), 2) * char_w + 8 for t in sent] for sent in export.sentences]
    W = left + max((sum(ws) + gap * len(ws) for ws in widths), default=0) + 10
    H = top + cell_h * len(export.sentences) + 10
    body = [f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>']
    if title:
        body.append(f'<text x="6" y="18">{escape(title)}</text>')
    for i, (sent, row, ws) in enumerate(zip(export.sentences, weights, widths)):
        y = top + i * cell_h
        sw = float(export.sentence_level[i]) if i < len(export.sentence_level) else 0.0
        body.append(f'<text x="4" y="{y + 15}">s{i} {sw:.2f}</text>')
        x = left
        for tok, w, cw in zip(sent, row, ws):
            body.append(f'<rect class="cell" data-weight="{w:.6f}" x="{x}" y="{y}" width="{cw}" '
                        f'height="{cell_h - 2}" fill="{heat_color(w, wmax)}" stroke="#cccccc"/>')
            body.append(f'<text x="{x + cw / 2:.1f}" y="{y + 15}" text-anchor="middle">{escape(tok)}</text>')
            x += cw + gap
    return _svg(W, H, body)


# -- bundles ---------------------------------------------------------------------

def write_bundle(out_dir, command, config, files):
    """Write ``files`` (name -> text) plus ``manifest.json`` under ``out_dir``.

    The manifest carries the config fingerprint, the engine version and a
    sha256 per file, so identical runs give identical bundles.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digests = {}
    for name in sorted(files):
        data = files[name]
        blob = data if isinstance(data, bytes) else data.encode("utf-8")
        (out / name).parent.mkdir(parents=True, exist_ok=True)
        (out / name).write_bytes(blob)
        digests[name] = hashlib.sha256(blob).hexdigest()
    manifest = {
        "command": command,
        "fingerprint": fingerprint(config),
        "version": __version__,
        "config": config,
        "files": digests,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return manifest
