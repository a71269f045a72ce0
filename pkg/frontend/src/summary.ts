/**
 * Typed access to the simulator's JSON summary documents.
 *
 * Only the fields the figures consume are modeled; everything else is
 * carried through untyped. Unknown schema versions are refused up front.
 */

import { readFileSync } from "fs";
import { SchemaError } from "./csv.js";

const KNOWN_SCHEMA_VERSIONS = [1];

export interface OnsetBlock {
  natural: number | null;
  seconds: number | null;
  stderr_natural: number | null;
  per_replica_natural: (number | null)[];
}

export interface FinalBlock {
  n_total_mean: number;
  n0_mean: number;
  n0_stderr: number;
  fraction_mean: number;
}

export interface StabilizationBlock {
  window_natural: [number, number];
  mean_n0: number;
  relative_std_mean: number;
  extracted_atoms_mean: number;
  extraction_rate_si: number;
  reference_extraction_rate_si: number | null;
}

export interface PointBlock {
  label: string;
  onset: OnsetBlock;
  final: FinalBlock;
  stabilization: StabilizationBlock | null;
  files: { trajectory: string; ensemble: string };
}

export interface ThresholdBlock {
  xi: number[];
  final_n0: number[];
  reference_n0: number;
  retention_level: number;
  bracket: [number | null, number | null];
  xi0: number | null;
  open_ended: boolean;
}

export interface Summary {
  schema_version: number;
  kind: string;
  name: string;
  loading_mode: string;
  omega_g: number;
  time_unit_seconds: number;
  points: PointBlock[];
  threshold: ThresholdBlock | null;
}

export function parseSummary(text: string, file: string): Summary {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (err) {
    throw new SchemaError(`${file}: not valid JSON (${(err as Error).message})`);
  }
  const summary = doc as Summary;
  if (typeof summary.schema_version !== "number") {
    throw new SchemaError(`${file}: missing schema_version`);
  }
  if (!KNOWN_SCHEMA_VERSIONS.includes(summary.schema_version)) {
    throw new SchemaError(
      `${file}: unknown schema_version ${summary.schema_version}` +
        ` (known: ${KNOWN_SCHEMA_VERSIONS.join(", ")})`
    );
  }
  if (!Array.isArray(summary.points)) {
    throw new SchemaError(`${file}: missing points array`);
  }
  return summary;
}

export function readSummary(file: string): Summary {
  return parseSummary(readFileSync(file, "utf-8"), file);
}
