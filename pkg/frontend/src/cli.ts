/**
 * Standalone figure renderer for eigencurve artifact directories.
 *
 * Usage:
 *   eigencurve-plots <artifact-dir> loss-curve <out.svg> [--log]
 *   eigencurve-plots <artifact-dir> eigenfunction <out.svg> [--index k]
 */

import { existsSync, readFileSync, writeFileSync } from "fs";
import { join } from "path";

import { CsvError } from "./csv.js";
import { plotEigenfunction, plotLossCurve, Refusal } from "./plots.js";

function usage(): string {
  return (
    "usage: eigencurve-plots <artifact-dir> <loss-curve|eigenfunction> <out.svg> " +
    "[--log] [--index k]"
  );
}

export function run(argv: string[]): number {
  const positional: string[] = [];
  let logScale = false;
  let index = 0;
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === "--log") logScale = true;
    else if (a === "--index") {
      index = Number(argv[++i]);
      if (!Number.isInteger(index) || index < 0) {
        console.error(`--index must be a nonnegative integer`);
        return 2;
      }
    } else if (a.startsWith("--")) {
      console.error(`unknown flag ${a}\n${usage()}`);
      return 2;
    } else positional.push(a);
  }
  if (positional.length !== 3) {
    console.error(usage());
    return 2;
  }
  const [dir, kind, outPath] = positional;
  try {
    if (kind === "loss-curve") {
      const curvePath = join(dir, "loss_curve.csv");
      if (!existsSync(curvePath)) {
        console.error(`missing ${curvePath}: run the scan first`);
        return 1;
      }
      const ubPath = join(dir, "upper_bound.csv");
      const evPath = join(dir, "eigenvalues.json");
      const result = plotLossCurve(
        {
          lossCurveCsv: readFileSync(curvePath, "utf8"),
          lossCurveFile: curvePath,
          upperBoundCsv: existsSync(ubPath) ? readFileSync(ubPath, "utf8") : undefined,
          upperBoundFile: ubPath,
          eigenvaluesJson: existsSync(evPath) ? readFileSync(evPath, "utf8") : undefined,
        },
        logScale,
      );
      for (const w of result.warnings) console.warn(`warning: ${w}`);
      writeFileSync(outPath, result.svg);
    } else if (kind === "eigenfunction") {
      const csvPath = join(dir, `eigenfunction_${index}.csv`);
      if (!existsSync(csvPath)) {
        console.error(`missing ${csvPath}: export the eigenfunction first`);
        return 1;
      }
      const result = plotEigenfunction(readFileSync(csvPath, "utf8"), csvPath);
      writeFileSync(outPath, result.svg);
    } else {
      console.error(`unknown figure kind '${kind}'\n${usage()}`);
      return 2;
    }
  } catch (err) {
    if (err instanceof Refusal || err instanceof CsvError) {
      console.error(String(err.message));
      return 1;
    }
    throw err;
  }
  console.log(`wrote ${outPath}`);
  return 0;
}

const isMain = process.argv[1] !== undefined && import.meta.url.endsWith(
  process.argv[1].split("/").pop() ?? "",
);
if (isMain) {
  process.exit(run(process.argv.slice(2)));
}
