/** Shared fixtures for the test suites: golden CSVs and synthetic rows. */

import { readFileSync } from "node:fs";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { parseDataset, type Dataset } from "../src/csv.js";

export const GOLDEN_DIR = fileURLToPath(new URL("./golden/", import.meta.url));

export function goldenText(name: string): string {
  return readFileSync(join(GOLDEN_DIR, name), "utf-8");
}

export function loadGolden(name: string): Dataset {
  return parseDataset(goldenText(name));
}

/** The nine steady-state sweeps, in pump order (cp0 lowest .. cp8 highest). */
export const MEANFIELD_GOLDENS = Array.from(
  { length: 9 },
  (_, i) => `meanfield_cp${i}.csv`
);

export const CSV_HEADER =
  "mode,N,K_bond,h_field,epsilon_abs,phi,observable,value,std_error," +
  "theory_paper,theory_errorprop,finite_size_metric,seed,wall_time";

const BASE_ROW: Record<string, string | number> = {
  mode: "sample",
  N: 8,
  K_bond: 2.0,
  h_field: 0.0,
  epsilon_abs: 0.0,
  phi: 0.0,
  observable: "g_1",
  value: 0.5,
  std_error: 0.01,
  theory_paper: 0.4,
  theory_errorprop: 0.5,
  finite_size_metric: 1.0,
  seed: 3,
  wall_time: 0.1,
};

/** One synthetic data line, with column overrides by name. */
export function rowLine(
  over: Record<string, string | number> = {}
): string {
  const cells = { ...BASE_ROW, ...over };
  return CSV_HEADER.split(",")
    .map((col) => String(cells[col]))
    .join(",");
}
