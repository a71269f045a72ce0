/**
 * Command line entry point: render figures from simulator output.
 *
 * Usage:
 *   node dist/render.js <preset...> [--data DIR] [--out DIR]
 *
 * Preset names mirror the simulator presets (fig3 ... fig8); "all" renders
 * every figure. --data points at the directory holding one subdirectory per
 * preset (default ./data), --out selects where SVGs are written (default
 * ./figures). Exits 0 only if every requested figure was written.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { SchemaError } from "./csv.js";
import { FIGURES_BY_PRESET, FigureResult } from "./figures.js";

function usage(): string {
  const names = Object.keys(FIGURES_BY_PRESET).join(" ");
  return `usage: render <preset...> [--data DIR] [--out DIR]\npresets: ${names} all`;
}

export function main(argv: string[]): number {
  const presets: string[] = [];
  let dataDir = "data";
  let outDir = "figures";

  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--data" || arg === "--out") {
      const value = argv[++i];
      if (value === undefined) {
        console.error(`${arg} needs a value`);
        return 1;
      }
      if (arg === "--data") dataDir = value;
      else outDir = value;
    } else if (arg === "--help" || arg === "-h") {
      console.log(usage());
      return 0;
    } else if (arg.startsWith("-")) {
      console.error(`unknown option ${arg}`);
      console.error(usage());
      return 1;
    } else {
      presets.push(arg);
    }
  }

  if (presets.length === 0) {
    console.error(usage());
    return 1;
  }

  const expanded: string[] = [];
  for (const name of presets) {
    if (name === "all") {
      expanded.push(...Object.keys(FIGURES_BY_PRESET));
    } else if (name in FIGURES_BY_PRESET) {
      expanded.push(name);
    } else {
      console.error(`unknown preset "${name}"`);
      console.error(usage());
      return 1;
    }
  }

  fs.mkdirSync(outDir, { recursive: true });
  for (const preset of [...new Set(expanded)]) {
    for (const build of FIGURES_BY_PRESET[preset]) {
      let result: FigureResult;
      try {
        result = build(dataDir);
      } catch (err) {
        if (err instanceof SchemaError || (err as NodeJS.ErrnoException).code === "ENOENT") {
          console.error(`${preset}: ${(err as Error).message}`);
          return 1;
        }
        throw err;
      }
      const target = path.join(outDir, `${result.name}.svg`);
      fs.writeFileSync(target, result.svg);
      console.log(`svg: ${target}`);
    }
  }
  return 0;
}

if (process.argv[1] && path.basename(process.argv[1]).startsWith("render")) {
  process.exit(main(process.argv.slice(2)));
}
