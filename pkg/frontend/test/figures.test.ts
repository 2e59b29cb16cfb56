import { describe, expect, it } from "vitest";

import { CsvError } from "../src/csv.js";
import {
  bifurcationFigure,
  buildFigureFor,
  correlationFigure,
  formatSlope,
  ktFigure,
  scalingFigure,
} from "../src/figures.js";
import { MEANFIELD_GOLDENS, loadGolden } from "./helpers.js";

describe("scalingFigure", () => {
  const ds = loadGolden("scaling_qfi.csv");

  it("renders an SVG annotated with the recorded fit", () => {
    const svg = scalingFigure(ds);
    expect(svg.startsWith("<svg")).toBe(true);
    expect(svg.trimEnd().endsWith("</svg>")).toBe(true);

    const fit = ds.fits.find((f) => f.source === "value")!;
    expect(svg).toContain(
      `slope = ${formatSlope(fit.slope)} ± ${formatSlope(fit.stderr)}`
    );
    expect(svg).toContain(
      `95% CI [${formatSlope(fit.ci95Low)}, ${formatSlope(fit.ci95High)}]`
    );
    expect(svg).toContain(`fit: slope = ${formatSlope(fit.slope)}`);
    expect(svg).toContain("Scaling with system size");
    expect(svg).toContain("error-propagated reference");
  });

  it("honors title and size overrides", () => {
    const svg = scalingFigure(ds, { title: "Drive information", width: 900 });
    expect(svg).toContain("Drive information");
    expect(svg).toContain('width="900"');
  });

  it("refuses datasets without a sampled-value fit line", () => {
    const ring = loadGolden("correlation_ring.csv");
    expect(() => scalingFigure(ring)).toThrow(CsvError);
    expect(() => scalingFigure(ring)).toThrow(/source=value/);
  });
});

describe("correlationFigure", () => {
  it("renders the ring profile with its exact reference", () => {
    const svg = correlationFigure(loadGolden("correlation_ring.csv"));
    expect(svg.startsWith("<svg")).toBe(true);
    expect(svg).toContain("exact ring profile");
    expect(svg).toContain("N = 16");
    expect(svg).toContain("seed 3");
    expect(svg).toContain("G(d)");
  });
});

describe("ktFigure", () => {
  it("renders the torus profile with both exponent references", () => {
    const ds = loadGolden("kt_torus.csv");
    const svg = ktFigure(ds);
    expect(svg.startsWith("<svg")).toBe(true);
    expect(svg).toContain("quoted exponent");
    expect(svg).toContain("per-bond exponent");

    const eta = ds.rows.find((r) => r.observable === "eta_fit")!;
    expect(svg).toContain(
      `fitted η = ${eta.value.toFixed(4)} ± ${eta.std_error.toFixed(4)}`
    );
  });
});

describe("bifurcationFigure", () => {
  const sweeps = MEANFIELD_GOLDENS.map((name) => loadGolden(name));

  it("renders the pump sweep with threshold and references", () => {
    const svg = bifurcationFigure(sweeps);
    expect(svg.startsWith("<svg")).toBe(true);
    expect(svg).toContain("9 pump points");
    expect(svg).toContain("threshold");
    expect(svg).toContain("integrated steady state");
    expect(svg).toContain("fixed point (derived)");
    expect(svg).toContain("quoted occupation");
  });

  it("is independent of input order", () => {
    const shuffled = [...sweeps].reverse();
    const mixed = [sweeps[4], ...sweeps.slice(5), ...sweeps.slice(0, 4)];
    const reference = bifurcationFigure(sweeps);
    expect(bifurcationFigure(shuffled)).toBe(reference);
    expect(bifurcationFigure(mixed)).toBe(reference);
  });

  it("needs at least two pump points", () => {
    expect(() => bifurcationFigure([sweeps[0]])).toThrow(CsvError);
    expect(() => bifurcationFigure([sweeps[0]])).toThrow(/at least two/);
  });

  it("rejects inputs without steady-state rows", () => {
    const ring = loadGolden("correlation_ring.csv");
    expect(() => bifurcationFigure([sweeps[0], ring])).toThrow(
      /steady_intensity\/pump_cooperativity/
    );
  });
});

describe("buildFigureFor", () => {
  it("dispatches each kind to its builder", () => {
    expect(buildFigureFor("scaling", [loadGolden("scaling_qfi.csv")])).toContain(
      "Scaling with system size"
    );
    expect(
      buildFigureFor("correlation", [loadGolden("correlation_ring.csv")])
    ).toContain("Phase correlations");
    expect(buildFigureFor("kt", [loadGolden("kt_torus.csv")])).toContain(
      "Algebraic decay"
    );
    expect(
      buildFigureFor(
        "bifurcation",
        MEANFIELD_GOLDENS.map((name) => loadGolden(name))
      )
    ).toContain("Lasing bifurcation");
  });

  it("rejects multi-input jobs for single-dataset figures", () => {
    const ds = loadGolden("scaling_qfi.csv");
    expect(() => buildFigureFor("scaling", [ds, ds])).toThrow(
      /exactly one input CSV/
    );
    expect(() => buildFigureFor("kt", [])).toThrow(/exactly one input CSV/);
  });
});
