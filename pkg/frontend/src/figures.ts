/**
 * The four figure builders.  Each consumes parsed Dataset(s) and returns an
 * SVG string; anything missing or empty raises CsvError (the CLI maps that
 * to exit code 2 without writing a file).
 */

import { CsvError, correlationProfile, type Dataset, type Row } from "./csv.js";
import { buildFigure, type Point, type Series } from "./svg.js";

export const FIGURE_KINDS = ["scaling", "correlation", "kt", "bifurcation"] as const;
export type FigureKind = (typeof FIGURE_KINDS)[number];

export interface FigureJobOpts {
  title?: string;
  width?: number;
  height?: number;
}

const COL = {
  data: "#4361ee",
  derived: "#2d6a4f",
  quoted: "#b5651d",
  guide: "#e63946",
  threshold: "#999999",
};

export function formatSlope(v: number): string {
  return v.toFixed(3);
}

function dedupeByN(rows: Row[]): Row[] {
  const seen = new Map<number, Row>();
  for (const r of rows) {
    if (!seen.has(r.N)) seen.set(r.N, r);
  }
  return [...seen.values()].sort((a, b) => a.N - b.N);
}

// ---------------------------------------------------------------------------
// scaling: observable vs system size, log-log, with the fitted slope
// ---------------------------------------------------------------------------

export function scalingFigure(ds: Dataset, opts: FigureJobOpts = {}): string {
  const fit = ds.fits.find((f) => f.source === "value");
  if (!fit) {
    throw new CsvError(
      "scaling figure needs a '# fit ... source=value' summary line " +
        "(emitted for runs with at least three sizes)"
    );
  }
  const scaleByN = fit.quantity === "n_times_sum_g";
  const observable = scaleByN ? "sum_g" : fit.quantity;
  const rows = ds.rows.filter((r) => r.observable === observable);
  if (rows.length === 0) {
    throw new CsvError(`CSV has no '${observable}' rows for the scaling figure`);
  }

  const factor = (r: Row) => (scaleByN ? r.N : 1);
  const pts: Point[] = rows
    .map((r) => ({
      x: r.N,
      y: factor(r) * r.value,
      yErr: factor(r) * r.std_error,
    }))
    .filter((p) => p.y > 0);
  if (pts.length < 2) {
    throw new CsvError("scaling figure needs at least two positive points");
  }

  // guide line with the fitted slope, anchored through the cloud's center
  const intercept =
    pts.reduce((acc, p) => acc + (Math.log10(p.y) - fit.slope * Math.log10(p.x)), 0) /
    pts.length;
  const xLo = Math.min(...pts.map((p) => p.x));
  const xHi = Math.max(...pts.map((p) => p.x));
  const guide: Point[] = [xLo, xHi].map((x) => ({
    x,
    y: 10 ** (intercept + fit.slope * Math.log10(x)),
  }));

  const derived: Point[] = dedupeByN(rows)
    .map((r) => ({ x: r.N, y: factor(r) * r.theory_errorprop }))
    .filter((p) => p.y > 0);

  const yLabel = scaleByN ? "N × pair sum" : "information about the drive";
  const series: Series[] = [
    { label: "sampled", points: pts, color: COL.data, draw: "markers" },
    {
      label: `fit: slope = ${formatSlope(fit.slope)}`,
      points: guide,
      color: COL.guide,
      draw: "line",
      dash: "7,4",
    },
  ];
  if (derived.length >= 2) {
    series.push({
      label: "error-propagated reference",
      points: derived,
      color: COL.derived,
      draw: "line",
      dash: "2,3",
      width: 1.2,
    });
  }

  return buildFigure({
    title: opts.title ?? "Scaling with system size",
    subtitle: `${ds.mode} · ${rows.length} rows · K_bond = ${trim(rows[0].K_bond)}`,
    xLabel: "system size N",
    yLabel,
    xScale: "log",
    yScale: "log",
    series,
    annotations: [
      `slope = ${formatSlope(fit.slope)} ± ${formatSlope(fit.stderr)}`,
      `95% CI [${formatSlope(fit.ci95Low)}, ${formatSlope(fit.ci95High)}]`,
    ],
    width: opts.width,
    height: opts.height,
  });
}

// ---------------------------------------------------------------------------
// correlation: ring profile G(d) vs d, semilog-y, exact reference
// ---------------------------------------------------------------------------

export function correlationFigure(ds: Dataset, opts: FigureJobOpts = {}): string {
  const profile = correlationProfile(ds);
  const pts: Point[] = profile
    .map((e) => ({ x: e.d, y: e.row.value, yErr: e.row.std_error }))
    .filter((p) => p.y > 0);
  if (pts.length < 2) {
    throw new CsvError("correlation figure needs at least two positive G(d) points");
  }
  const reference: Point[] = profile
    .map((e) => ({ x: e.d, y: e.row.theory_errorprop }))
    .filter((p) => p.y > 0);

  const head = profile[0].row;
  return buildFigure({
    title: opts.title ?? "Phase correlations along the ring",
    subtitle: `${ds.mode} · N = ${head.N} · K_bond = ${trim(head.K_bond)} · seed ${head.seed}`,
    xLabel: "separation d",
    yLabel: "G(d)",
    xScale: "linear",
    yScale: "log",
    series: [
      { label: "sampled", points: pts, color: COL.data, draw: "both", width: 1.1 },
      {
        label: "exact ring profile",
        points: reference,
        color: COL.derived,
        draw: "line",
        dash: "6,3",
      },
    ],
    width: opts.width,
    height: opts.height,
  });
}

// ---------------------------------------------------------------------------
// kt: torus profile G(d) vs d, log-log, both algebraic references
// ---------------------------------------------------------------------------

export function ktFigure(ds: Dataset, opts: FigureJobOpts = {}): string {
  const profile = correlationProfile(ds);
  const pts: Point[] = profile
    .map((e) => ({ x: e.d, y: e.row.value, yErr: e.row.std_error }))
    .filter((p) => p.y > 0);
  if (pts.length < 2) {
    throw new CsvError("torus figure needs at least two positive G(d) points");
  }
  const head = profile[0].row;
  const quoted: Point[] = profile.map((e) => ({ x: e.d, y: e.row.theory_paper }));
  const derived: Point[] = profile.map((e) => ({ x: e.d, y: e.row.theory_errorprop }));

  const etaRow = ds.rows.find(
    (r) => r.observable === "eta_fit" && r.N === head.N
  );
  const annotations = etaRow
    ? [`fitted η = ${etaRow.value.toFixed(4)} ± ${etaRow.std_error.toFixed(4)}`]
    : [];

  return buildFigure({
    title: opts.title ?? "Algebraic decay on the torus",
    subtitle: `${ds.mode} · ${head.N}×${head.N} · K_bond = ${trim(head.K_bond)} · seed ${head.seed}`,
    xLabel: "separation d",
    yLabel: "G(d)",
    xScale: "log",
    yScale: "log",
    series: [
      { label: "sampled", points: pts, color: COL.data, draw: "both", width: 1.1 },
      {
        label: "d^-η, quoted exponent",
        points: quoted,
        color: COL.quoted,
        draw: "line",
        dash: "2,3",
      },
      {
        label: "d^-η, per-bond exponent",
        points: derived,
        color: COL.derived,
        draw: "line",
        dash: "6,3",
      },
    ],
    annotations,
    width: opts.width,
    height: opts.height,
  });
}

// ---------------------------------------------------------------------------
// bifurcation: steady intensity vs pump cooperativity across many runs
// ---------------------------------------------------------------------------

interface BifurcationEntry {
  cp: number;
  intensity: Row;
}

export function bifurcationFigure(dss: Dataset[], opts: FigureJobOpts = {}): string {
  if (dss.length < 2) {
    throw new CsvError(
      "bifurcation figure needs at least two steady-state CSVs (one per pump point)"
    );
  }
  const entries: BifurcationEntry[] = dss.map((ds, i) => {
    const intensity = ds.rows.find((r) => r.observable === "steady_intensity");
    const cp = ds.rows.find((r) => r.observable === "pump_cooperativity");
    if (!intensity || !cp) {
      throw new CsvError(
        `input ${i + 1} lacks steady_intensity/pump_cooperativity rows ` +
          "(is it a steady-state run?)"
      );
    }
    return { cp: cp.value, intensity };
  });
  entries.sort((a, b) => a.cp - b.cp);

  const sampled: Point[] = entries.map((e) => ({ x: e.cp, y: e.intensity.value }));
  const derived: Point[] = entries.map((e) => ({
    x: e.cp,
    y: e.intensity.theory_errorprop,
  }));
  const quoted: Point[] = entries.map((e) => ({
    x: e.cp,
    y: e.intensity.theory_paper,
  }));

  return buildFigure({
    title: opts.title ?? "Lasing bifurcation",
    subtitle: `${entries.length} pump points`,
    xLabel: "pump cooperativity",
    yLabel: "steady per-site intensity",
    xScale: "linear",
    yScale: "linear",
    series: [
      {
        label: "integrated steady state",
        points: sampled,
        color: COL.data,
        draw: "markers",
      },
      {
        label: "fixed point (derived)",
        points: derived,
        color: COL.derived,
        draw: "line",
        dash: "6,3",
      },
      {
        label: "quoted occupation",
        points: quoted,
        color: COL.quoted,
        draw: "line",
        dash: "2,3",
      },
    ],
    vLines: [
      { value: 1.0, label: "threshold", color: COL.threshold, dash: "5,4" },
    ],
    width: opts.width,
    height: opts.height,
  });
}

// ---------------------------------------------------------------------------

function trim(v: number): string {
  return String(Number(v.toPrecision(6)));
}

export function buildFigureFor(
  kind: FigureKind,
  datasets: Dataset[],
  opts: FigureJobOpts = {}
): string {
  if (kind === "bifurcation") {
    return bifurcationFigure(datasets, opts);
  }
  if (datasets.length !== 1) {
    throw new CsvError(`${kind} figure takes exactly one input CSV, got ${datasets.length}`);
  }
  switch (kind) {
    case "scaling":
      return scalingFigure(datasets[0], opts);
    case "correlation":
      return correlationFigure(datasets[0], opts);
    case "kt":
      return ktFigure(datasets[0], opts);
  }
}
