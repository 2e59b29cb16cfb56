/**
 * End-to-end checks for the `plot` CLI, spawned as a real subprocess.
 *
 * Every figure kind must render from the committed golden CSVs to a nonzero
 * image with a reproducible size; the scaling annotation must agree with the
 * fit summary recorded in the CSV itself; and bad inputs must exit with
 * status 2 without writing an output file.
 */

import { spawnSync } from "node:child_process";
import {
  existsSync,
  mkdtempSync,
  readFileSync,
  statSync,
  writeFileSync,
} from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { beforeAll, describe, expect, it } from "vitest";

import {
  CSV_HEADER,
  GOLDEN_DIR,
  MEANFIELD_GOLDENS,
  goldenText,
  rowLine,
} from "./helpers.js";

const ROOT = fileURLToPath(new URL("..", import.meta.url));
const TSX = join(ROOT, "node_modules", ".bin", "tsx");
const CLI = join(ROOT, "src", "cli.ts");
const PNG_MAGIC = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

let workDir: string;

beforeAll(() => {
  workDir = mkdtempSync(join(tmpdir(), "plot-cli-"));
});

function runCli(args: string[]) {
  const res = spawnSync(TSX, [CLI, ...args], { cwd: ROOT, encoding: "utf-8" });
  if (res.error) throw res.error;
  return res;
}

function plotJob(name: string, job: Record<string, unknown>) {
  const jobPath = join(workDir, `${name}.json`);
  writeFileSync(jobPath, JSON.stringify(job, null, 2));
  return runCli([jobPath]);
}

function golden(name: string): string {
  return join(GOLDEN_DIR, name);
}

/** Render the same job twice and require reproducible nonzero output sizes. */
function renderTwice(
  kind: string,
  input: string | string[],
  ext: "png" | "svg"
): string {
  const sizes: number[] = [];
  let first = "";
  for (const tag of ["a", "b"]) {
    const output = join(workDir, `${kind}-${tag}.${ext}`);
    const res = plotJob(`${kind}-${tag}`, { figure: kind, input, output });
    expect(res.status, res.stderr).toBe(0);
    expect(res.stdout).toContain(`${kind} -> ${output}`);
    const size = statSync(output).size;
    expect(size).toBeGreaterThan(0);
    sizes.push(size);
    if (tag === "a") first = output;
  }
  const [a, b] = sizes;
  expect(Math.abs(a - b)).toBeLessThanOrEqual(0.01 * Math.max(a, b));
  return first;
}

describe("plot renders every figure kind from the goldens", () => {
  it("scaling -> PNG, nonzero and reproducible", () => {
    const out = renderTwice("scaling", golden("scaling_qfi.csv"), "png");
    const head = [...readFileSync(out).subarray(0, 8)];
    expect(head).toEqual(PNG_MAGIC);
  });

  it("kt -> PNG, nonzero and reproducible", () => {
    const out = renderTwice("kt", golden("kt_torus.csv"), "png");
    const head = [...readFileSync(out).subarray(0, 8)];
    expect(head).toEqual(PNG_MAGIC);
  });

  it("correlation -> SVG, nonzero and reproducible", () => {
    const out = renderTwice("correlation", golden("correlation_ring.csv"), "svg");
    const svg = readFileSync(out, "utf-8");
    expect(svg.startsWith("<svg")).toBe(true);
    expect(svg).toContain("exact ring profile");
  });

  it("bifurcation -> SVG from nine steady-state files, order-independent", () => {
    const inputs = MEANFIELD_GOLDENS.map(golden);
    const shuffled = [...inputs].reverse();
    const out = renderTwice("bifurcation", shuffled, "svg");
    const svg = readFileSync(out, "utf-8");
    expect(svg).toContain("9 pump points");
    expect(svg).toContain("threshold");
  });
});

describe("figure content agrees with the CSV it came from", () => {
  it("scaling annotation quotes the slope recorded in the fit line", () => {
    const output = join(workDir, "scaling-annot.svg");
    const res = plotJob("scaling-annot", {
      figure: "scaling",
      input: golden("scaling_qfi.csv"),
      output,
    });
    expect(res.status, res.stderr).toBe(0);

    // independent parse of the golden's own fit summary
    const m =
      /^# fit quantity=qfi_amplitude source=value n_points=\d+ slope=(\S+) stderr=(\S+) /m.exec(
        goldenText("scaling_qfi.csv")
      );
    expect(m).not.toBeNull();
    const slope = Number(m![1]);
    const stderr = Number(m![2]);
    expect(Number.isFinite(slope)).toBe(true);

    const svg = readFileSync(output, "utf-8");
    expect(svg).toContain(`slope = ${slope.toFixed(3)} ± ${stderr.toFixed(3)}`);
  });
});

describe("plot rejects bad inputs with exit 2 and writes nothing", () => {
  it("off-schema CSV (missing column)", () => {
    const badCsv = join(workDir, "missing-column.csv");
    const header = CSV_HEADER.replace(",std_error", "");
    const cells = rowLine().split(",");
    cells.splice(8, 1);
    writeFileSync(badCsv, [header, cells.join(",")].join("\n"));

    const output = join(workDir, "missing-column.svg");
    const res = plotJob("missing-column", {
      figure: "correlation",
      input: badCsv,
      output,
    });
    expect(res.status).toBe(2);
    expect(res.stderr).toMatch(/missing column/);
    expect(res.stderr).toContain("missing-column.csv");
    expect(existsSync(output)).toBe(false);
  });

  it("CSV with a header but no data rows", () => {
    const emptyCsv = join(workDir, "empty-data.csv");
    writeFileSync(
      emptyCsv,
      ["# laserlattice-experiment v0.1.0", CSV_HEADER, ""].join("\n")
    );

    const output = join(workDir, "empty-data.png");
    const res = plotJob("empty-data", {
      figure: "correlation",
      input: emptyCsv,
      output,
    });
    expect(res.status).toBe(2);
    expect(res.stderr).toMatch(/no data rows/);
    expect(existsSync(output)).toBe(false);
  });

  it("job with an unknown figure kind", () => {
    const output = join(workDir, "unknown-kind.svg");
    const res = plotJob("unknown-kind", {
      figure: "pie",
      input: golden("scaling_qfi.csv"),
      output,
    });
    expect(res.status).toBe(2);
    expect(res.stderr).toMatch(/invalid job/);
    expect(existsSync(output)).toBe(false);
  });

  it("job pointing at a missing CSV", () => {
    const output = join(workDir, "missing-input.svg");
    const res = plotJob("missing-input", {
      figure: "scaling",
      input: join(workDir, "does-not-exist.csv"),
      output,
    });
    expect(res.status).toBe(2);
    expect(res.stderr).toMatch(/ENOENT|no such file/i);
    expect(existsSync(output)).toBe(false);
  });

  it("missing job file and bad argument counts", () => {
    const gone = runCli([join(workDir, "no-such-job.json")]);
    expect(gone.status).toBe(2);
    expect(gone.stderr).toMatch(/cannot read job file/);

    const none = runCli([]);
    expect(none.status).toBe(2);
    expect(none.stderr).toContain("usage:");

    const help = runCli(["--help"]);
    expect(help.status).toBe(0);
    expect(help.stderr).toContain("usage:");
  });
});
