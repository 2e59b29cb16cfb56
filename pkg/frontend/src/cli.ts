#!/usr/bin/env node
/**
 * `plot <job.json>`: render one figure from simulation CSV(s).
 *
 * The job file picks the figure kind, the input CSV path(s), and the output
 * path (`.svg` or `.png`).  Exit codes: 0 on success; 2 for an invalid job,
 * unreadable input, off-schema CSV, or empty usable data — in which case no
 * output file is written.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { pathToFileURL } from "node:url";
import { ZodError } from "zod";

import { CsvError, parseDataset } from "./csv.js";
import { buildFigureFor } from "./figures.js";
import { inputPaths, JobSchema } from "./job.js";
import { renderPng } from "./render.js";

const USAGE = "usage: plot <job.json>";

export function runJob(jobPath: string): number {
  let text: string;
  try {
    text = readFileSync(jobPath, "utf-8");
  } catch (err) {
    console.error(`plot: cannot read job file: ${message(err)}`);
    return 2;
  }

  let job;
  try {
    job = JobSchema.parse(JSON.parse(text));
  } catch (err) {
    console.error(`plot: invalid job: ${message(err)}`);
    return 2;
  }

  try {
    const datasets = inputPaths(job).map((p) => {
      try {
        return parseDataset(readFileSync(p, "utf-8"));
      } catch (err) {
        if (err instanceof CsvError) {
          throw new CsvError(`${p}: ${err.message}`);
        }
        throw err;
      }
    });
    const svg = buildFigureFor(job.figure, datasets, {
      title: job.title,
      width: job.width,
      height: job.height,
    });
    const isPng = job.output.toLowerCase().endsWith(".png");
    writeFileSync(job.output, isPng ? renderPng(svg, job.width) : svg);
    console.log(`${job.figure} -> ${job.output}`);
    return 0;
  } catch (err) {
    if (
      err instanceof CsvError ||
      (err instanceof Error && "code" in err && err.code === "ENOENT")
    ) {
      console.error(`plot: ${message(err)}`);
      return 2;
    }
    throw err;
  }
}

function message(err: unknown): string {
  if (err instanceof ZodError) {
    const issue = err.issues[0];
    return `${issue.path.join(".") || "(root)"}: ${issue.message}`;
  }
  if (err instanceof SyntaxError) {
    return `not valid JSON (${err.message})`;
  }
  return err instanceof Error ? err.message : String(err);
}

export function main(argv: string[]): number {
  if (argv.length !== 1 || argv[0] === "-h" || argv[0] === "--help") {
    console.error(USAGE);
    return argv.length === 1 ? 0 : 2;
  }
  return runJob(argv[0]);
}

// invoked directly (not imported by tests)
const isCliEntry =
  process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(process.argv[1]).href;
if (isCliEntry) {
  process.exit(main(process.argv.slice(2)));
}
