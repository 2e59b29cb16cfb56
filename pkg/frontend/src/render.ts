/** SVG-to-PNG rasterization (system fonts, 2x supersampling). */

import { Resvg } from "@resvg/resvg-js";

export function renderPng(svg: string, width: number): Buffer {
  const resvg = new Resvg(svg, {
    fitTo: { mode: "width", value: width * 2 },
    font: { loadSystemFonts: true },
    background: "white",
  });
  return resvg.render().asPng();
}
