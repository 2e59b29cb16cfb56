/**
 * Reader for the simulation CSVs.
 *
 * A results file is: `#`-prefixed comment lines (version, spec hash, mode),
 * one header row with a fixed 14-column schema, data rows, and trailing
 * `# fit ...` comment lines carrying log-log fit summaries.  Everything a
 * figure needs travels in this one file; nothing else is read.
 */

import Papa from "papaparse";
import { z } from "zod";

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

export class CsvError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "CsvError";
  }
}

const finite = z.number().finite();

export const RowSchema = z.object({
  mode: z.enum([
    "meanfield",
    "sample",
    "langevin",
    "exact",
    "qfi-scaling",
    "quantum-oracle",
    "kt-2d",
  ]),
  N: z.number().int().positive(),
  K_bond: finite,
  h_field: finite,
  epsilon_abs: finite,
  phi: finite,
  observable: z.string().min(1),
  value: finite,
  std_error: finite.nonnegative(),
  theory_paper: finite,
  theory_errorprop: finite,
  finite_size_metric: finite,
  seed: z.number().int(),
  wall_time: finite,
});

export type Row = z.infer<typeof RowSchema>;

export const FIT_SOURCES = ["value", "theory_paper", "theory_errorprop"] as const;
export type FitSource = (typeof FIT_SOURCES)[number];

/** One trailing `# fit ...` summary line. */
export interface FitSummary {
  quantity: string;
  source: FitSource;
  nPoints: number;
  slope: number;
  stderr: number;
  ci95Low: number;
  ci95High: number;
}

export interface Dataset {
  mode: Row["mode"];
  rows: Row[];
  fits: FitSummary[];
  comments: string[];
}

// ---------------------------------------------------------------------------
// Fit-summary comment lines
// ---------------------------------------------------------------------------

const FIT_RE =
  /^# fit quantity=(\S+) source=(\S+) n_points=(\d+) slope=(\S+) stderr=(\S+) ci95_low=(\S+) ci95_high=(\S+)$/;

function parseFitLine(line: string): FitSummary | null {
  const m = FIT_RE.exec(line.trim());
  if (!m) return null;
  const source = m[2] as FitSource;
  if (!FIT_SOURCES.includes(source)) {
    throw new CsvError(`fit line has unknown source ${m[2]}: ${line}`);
  }
  const nums = [m[4], m[5], m[6], m[7]].map(Number);
  if (nums.some((v) => !Number.isFinite(v))) {
    throw new CsvError(`fit line has non-finite numbers: ${line}`);
  }
  return {
    quantity: m[1],
    source,
    nPoints: Number(m[3]),
    slope: nums[0],
    stderr: nums[1],
    ci95Low: nums[2],
    ci95High: nums[3],
  };
}

// ---------------------------------------------------------------------------
// Dataset parsing
// ---------------------------------------------------------------------------

export function parseDataset(text: string): Dataset {
  const comments: string[] = [];
  const fits: FitSummary[] = [];
  for (const line of text.split("\n")) {
    if (!line.startsWith("#")) continue;
    comments.push(line.trimEnd());
    const fit = parseFitLine(line);
    if (fit) fits.push(fit);
  }

  const parsed = Papa.parse<Record<string, unknown>>(text, {
    header: true,
    comments: "#",
    dynamicTyping: true,
    skipEmptyLines: "greedy",
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0];
    throw new CsvError(`malformed CSV (row ${first.row}): ${first.message}`);
  }

  const expected = Object.keys(RowSchema.shape);
  const got = parsed.meta.fields ?? [];
  if (expected.some((c) => !got.includes(c))) {
    const missing = expected.filter((c) => !got.includes(c));
    throw new CsvError(`CSV header is missing column(s): ${missing.join(", ")}`);
  }

  const rows: Row[] = [];
  for (const [i, raw] of parsed.data.entries()) {
    const check = RowSchema.safeParse(raw);
    if (!check.success) {
      const issue = check.error.issues[0];
      throw new CsvError(
        `bad data row ${i + 1}: ${issue.path.join(".")}: ${issue.message}`
      );
    }
    rows.push(check.data);
  }
  if (rows.length === 0) {
    throw new CsvError("CSV contains no data rows");
  }
  const modes = new Set(rows.map((r) => r.mode));
  if (modes.size > 1) {
    throw new CsvError(`CSV mixes modes: ${[...modes].join(", ")}`);
  }
  return { mode: rows[0].mode, rows, fits, comments };
}

// ---------------------------------------------------------------------------
// Shared row helpers
// ---------------------------------------------------------------------------

export interface CorrelationPoint {
  d: number;
  row: Row;
}

/** Pull the `g_<d>` profile of one size and seed (the largest size present,
 * first seed), ordered by separation. */
export function correlationProfile(ds: Dataset): CorrelationPoint[] {
  const matches = ds.rows
    .map((row) => ({ row, m: /^g_(\d+)$/.exec(row.observable) }))
    .filter((e): e is { row: Row; m: RegExpExecArray } => e.m !== null)
    .map((e) => ({ d: Number(e.m[1]), row: e.row }));
  if (matches.length === 0) {
    throw new CsvError("CSV has no g_<d> correlation rows");
  }
  const n = Math.max(...matches.map((e) => e.row.N));
  const atN = matches.filter((e) => e.row.N === n);
  const seed = atN[0].row.seed;
  return atN
    .filter((e) => e.row.seed === seed)
    .sort((a, b) => a.d - b.d);
}
