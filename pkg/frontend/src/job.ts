/** Job description: which figure, from which CSV(s), to which file. */

import { z } from "zod";
import { FIGURE_KINDS } from "./figures.js";

export const JobSchema = z
  .object({
    figure: z.enum(FIGURE_KINDS),
    input: z.union([z.string().min(1), z.array(z.string().min(1)).nonempty()]),
    output: z
      .string()
      .regex(/\.(svg|png)$/i, "output must end in .svg or .png"),
    title: z.string().min(1).optional(),
    width: z.number().int().min(320).max(4096).default(720),
    height: z.number().int().min(240).max(4096).default(440),
  })
  .strict();

export type Job = z.infer<typeof JobSchema>;

export function inputPaths(job: Job): string[] {
  return Array.isArray(job.input) ? job.input : [job.input];
}
