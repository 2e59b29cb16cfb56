/**
 * Deterministic SVG chart builder: linear/log axes, error bars, reference
 * lines, legend.  Pure string assembly — same options in, same bytes out.
 */

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

export type ScaleKind = "linear" | "log";

export interface Point {
  x: number;
  y: number;
  yErr?: number;
}

export interface Series {
  label: string;
  points: Point[];
  color: string;
  draw: "line" | "markers" | "both";
  width?: number;
  dash?: string; // stroke-dasharray
  opacity?: number;
}

/** Vertical reference line at a fixed x. */
export interface VLine {
  value: number;
  label: string;
  color: string;
  dash?: string;
}

export interface FigureOpts {
  title: string;
  subtitle?: string;
  xLabel: string;
  yLabel: string;
  xScale: ScaleKind;
  yScale: ScaleKind;
  series: Series[];
  annotations?: string[]; // text lines, top-left corner of the plot area
  vLines?: VLine[];
  width?: number;
  height?: number;
}

const FONT = "DejaVu Sans, Helvetica, Arial, sans-serif";

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

export function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) {
    const e = Math.floor(Math.log10(a));
    const mant = v / 10 ** e;
    const m = Math.abs(mant - 1) < 1e-9 ? "" : `${trimNum(mant)}×`;
    return `${m}1e${e}`;
  }
  return trimNum(v);
}

function trimNum(v: number): string {
  return String(Number(v.toPrecision(6)));
}

function niceTicks(min: number, max: number, count: number): number[] {
  const range = max - min || 1;
  const rough = range / count;
  const mag = 10 ** Math.floor(Math.log10(rough));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((n) => n >= rough) ?? rough;
  const ticks: number[] = [];
  for (let v = Math.ceil(min / step) * step; v <= max + step * 1e-9; v += step) {
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

function logTicks(min: number, max: number): number[] {
  const lo = Math.floor(Math.log10(min));
  const hi = Math.ceil(Math.log10(max));
  const decades = hi - lo;
  const mantissas = decades <= 1 ? [1, 2, 3, 5, 7] : decades <= 3 ? [1, 2, 5] : [1];
  const ticks: number[] = [];
  for (let e = lo; e <= hi; e++) {
    for (const m of mantissas) {
      const v = m * 10 ** e;
      if (v >= min * 0.999 && v <= max * 1.001) ticks.push(v);
    }
  }
  return ticks;
}

interface Scale {
  (v: number): number;
  ticks: number[];
}

function makeScale(
  kind: ScaleKind,
  values: number[],
  pixLo: number,
  pixHi: number
): Scale {
  const usable = values.filter((v) =>
    kind === "log" ? Number.isFinite(v) && v > 0 : Number.isFinite(v)
  );
  if (usable.length === 0) {
    throw new Error(`no usable values for a ${kind} axis`);
  }
  let lo = Math.min(...usable);
  let hi = Math.max(...usable);
  let t: (v: number) => number;
  let ticks: number[];
  if (kind === "log") {
    const pad = (Math.log10(hi) - Math.log10(lo) || 1) * 0.06;
    lo = 10 ** (Math.log10(lo) - pad);
    hi = 10 ** (Math.log10(hi) + pad);
    t = Math.log10;
    ticks = logTicks(lo, hi);
  } else {
    const pad = (hi - lo || Math.abs(hi) || 1) * 0.06;
    lo -= pad;
    hi += pad;
    t = (v) => v;
    ticks = niceTicks(lo, hi, 5);
  }
  const tLo = t(lo);
  const span = t(hi) - tLo || 1;
  const scale = ((v: number) =>
    pixLo + ((t(v) - tLo) / span) * (pixHi - pixLo)) as Scale;
  scale.ticks = ticks;
  return scale;
}

// ---------------------------------------------------------------------------
// Figure assembly
// ---------------------------------------------------------------------------

export function buildFigure(opts: FigureOpts): string {
  const W = opts.width ?? 720;
  const H = opts.height ?? 440;
  const ml = 74;
  const mr = 24;
  const mt = opts.subtitle ? 52 : 42;
  const mb = 58;
  const pw = W - ml - mr;
  const ph = H - mt - mb;

  const series = opts.series.filter((s) => s.points.length > 0);
  if (series.length === 0) {
    throw new Error("figure has no points to draw");
  }
  const xs = series.flatMap((s) => s.points.map((p) => p.x));
  const ys = series.flatMap((s) =>
    s.points.flatMap((p) => (p.yErr ? [p.y - p.yErr, p.y + p.yErr, p.y] : [p.y]))
  );
  const xOf = makeScale(opts.xScale, xs, ml, ml + pw);
  const yOf = makeScale(opts.yScale, ys, mt + ph, mt);

  const visible = (p: Point) =>
    Number.isFinite(p.x) &&
    Number.isFinite(p.y) &&
    (opts.xScale !== "log" || p.x > 0) &&
    (opts.yScale !== "log" || p.y > 0);

  let s = `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${W} ${H}" font-family="${FONT}">\n`;
  s += `<rect width="${W}" height="${H}" fill="#fff"/>\n`;

  // title block
  s += `<text x="${ml}" y="20" font-size="14" font-weight="600" fill="#222">${esc(opts.title)}</text>\n`;
  if (opts.subtitle) {
    s += `<text x="${ml}" y="36" font-size="10" fill="#888">${esc(opts.subtitle)}</text>\n`;
  }

  s += `<defs><clipPath id="plot"><rect x="${ml}" y="${mt}" width="${pw}" height="${ph}"/></clipPath></defs>\n`;

  // grid
  for (const v of yOf.ticks) {
    const y = yOf(v).toFixed(1);
    s += `<line x1="${ml}" y1="${y}" x2="${ml + pw}" y2="${y}" stroke="#eee" stroke-width="0.6"/>\n`;
  }
  for (const v of xOf.ticks) {
    const x = xOf(v).toFixed(1);
    s += `<line x1="${x}" y1="${mt}" x2="${x}" y2="${mt + ph}" stroke="#f4f4f4" stroke-width="0.6"/>\n`;
  }

  // vertical reference lines
  for (const vl of opts.vLines ?? []) {
    const x = xOf(vl.value).toFixed(1);
    s += `<line clip-path="url(#plot)" x1="${x}" y1="${mt}" x2="${x}" y2="${mt + ph}" stroke="${vl.color}" stroke-width="1" stroke-dasharray="${vl.dash ?? "5,4"}"/>\n`;
  }

  // series
  for (const sr of series) {
    const pts = sr.points.filter(visible);
    const width = sr.width ?? 1.4;
    const opacity = sr.opacity ?? 1;
    if (sr.draw !== "markers" && pts.length >= 2) {
      const poly = pts
        .map((p) => `${xOf(p.x).toFixed(1)},${yOf(p.y).toFixed(1)}`)
        .join(" ");
      s += `<polyline clip-path="url(#plot)" fill="none" stroke="${sr.color}" stroke-width="${width}" opacity="${opacity}" ${sr.dash ? `stroke-dasharray="${sr.dash}" ` : ""}points="${poly}"/>\n`;
    }
    if (sr.draw !== "line") {
      for (const p of pts) {
        const x = xOf(p.x).toFixed(1);
        if (p.yErr && p.yErr > 0) {
          const yl = p.y - p.yErr;
          const yh = p.y + p.yErr;
          if (opts.yScale !== "log" || yl > 0) {
            const y1 = yOf(yl).toFixed(1);
            const y2 = yOf(yh).toFixed(1);
            s += `<line clip-path="url(#plot)" x1="${x}" y1="${y1}" x2="${x}" y2="${y2}" stroke="${sr.color}" stroke-width="0.9" opacity="${opacity}"/>\n`;
            for (const yc of [y1, y2]) {
              s += `<line clip-path="url(#plot)" x1="${Number(x) - 3}" y1="${yc}" x2="${Number(x) + 3}" y2="${yc}" stroke="${sr.color}" stroke-width="0.9" opacity="${opacity}"/>\n`;
            }
          }
        }
        s += `<circle clip-path="url(#plot)" cx="${x}" cy="${yOf(p.y).toFixed(1)}" r="2.8" fill="${sr.color}" opacity="${opacity}"/>\n`;
      }
    }
  }

  // axes frame
  s += `<line x1="${ml}" y1="${mt}" x2="${ml}" y2="${mt + ph}" stroke="#333" stroke-width="0.8"/>\n`;
  s += `<line x1="${ml}" y1="${mt + ph}" x2="${ml + pw}" y2="${mt + ph}" stroke="#333" stroke-width="0.8"/>\n`;

  // x ticks
  for (const v of xOf.ticks) {
    const x = xOf(v).toFixed(1);
    s += `<line x1="${x}" y1="${mt + ph}" x2="${x}" y2="${mt + ph + 4}" stroke="#333" stroke-width="0.6"/>\n`;
    s += `<text x="${x}" y="${mt + ph + 16}" text-anchor="middle" font-size="10" fill="#555">${esc(fmtTick(v))}</text>\n`;
  }
  s += `<text x="${ml + pw / 2}" y="${H - 10}" text-anchor="middle" font-size="12" fill="#333">${esc(opts.xLabel)}</text>\n`;

  // y ticks
  for (const v of yOf.ticks) {
    const y = yOf(v);
    s += `<line x1="${ml - 4}" y1="${y.toFixed(1)}" x2="${ml}" y2="${y.toFixed(1)}" stroke="#333" stroke-width="0.6"/>\n`;
    s += `<text x="${ml - 7}" y="${(y + 3.5).toFixed(1)}" text-anchor="end" font-size="10" fill="#555">${esc(fmtTick(v))}</text>\n`;
  }
  s += `<text x="16" y="${mt + ph / 2}" text-anchor="middle" font-size="12" fill="#333" transform="rotate(-90,16,${mt + ph / 2})">${esc(opts.yLabel)}</text>\n`;

  // annotations, top-left inside the plot
  (opts.annotations ?? []).forEach((line, i) => {
    s += `<text x="${ml + 10}" y="${mt + 18 + i * 15}" font-size="11.5" fill="#333">${esc(line)}</text>\n`;
  });

  // legend, top-right inside the plot
  const entries = [
    ...series.map((sr) => ({
      label: sr.label,
      color: sr.color,
      dash: sr.dash,
      marker: sr.draw !== "line",
      line: sr.draw !== "markers",
    })),
    ...(opts.vLines ?? []).map((vl) => ({
      label: vl.label,
      color: vl.color,
      dash: vl.dash ?? "5,4",
      marker: false,
      line: true,
    })),
  ];
  const legendW = Math.max(...entries.map((e) => e.label.length)) * 6.2 + 34;
  const legendH = entries.length * 16 + 8;
  const lx = ml + pw - legendW - 8;
  const ly = mt + 8;
  s += `<rect x="${lx}" y="${ly}" width="${legendW}" height="${legendH}" rx="3" fill="#fff" fill-opacity="0.88" stroke="#ddd" stroke-width="0.6"/>\n`;
  entries.forEach((e, i) => {
    const yy = ly + 14 + i * 16;
    if (e.line) {
      s += `<line x1="${lx + 8}" y1="${yy - 3.5}" x2="${lx + 26}" y2="${yy - 3.5}" stroke="${e.color}" stroke-width="1.4" ${e.dash ? `stroke-dasharray="${e.dash}" ` : ""}/>\n`;
    }
    if (e.marker) {
      s += `<circle cx="${lx + 17}" cy="${yy - 3.5}" r="2.8" fill="${e.color}"/>\n`;
    }
    s += `<text x="${lx + 30}" y="${yy}" font-size="10.5" fill="#444">${esc(e.label)}</text>\n`;
  });

  s += `</svg>\n`;
  return s;
}
