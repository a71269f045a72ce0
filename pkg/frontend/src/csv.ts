/**
 * Strict CSV access for simulator outputs.
 *
 * Cells are kept as the exact byte strings written by the simulator so the
 * rendering layer can prove that every plotted array is copied verbatim
 * from an input column. Numeric views are derived on demand.
 */

import { readFileSync } from "fs";
import Papa from "papaparse";

/** Raised when an input file does not match the expected schema. */
export class SchemaError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SchemaError";
  }
}

export interface CsvTable {
  /** Path the table was read from, for error messages. */
  file: string;
  /** Header names in file order. */
  columns: string[];
  /** Raw cell strings, row-major, aligned with `columns`. */
  rows: string[][];
}

export function parseCsv(text: string, file: string): CsvTable {
  const result = Papa.parse<string[]>(text.trim(), {
    header: false,
    skipEmptyLines: true,
  });
  if (result.errors.length > 0) {
    const first = result.errors[0];
    throw new SchemaError(`${file}: malformed CSV (${first.message})`);
  }
  const grid = result.data;
  if (grid.length === 0) {
    throw new SchemaError(`${file}: empty CSV`);
  }
  const columns = grid[0];
  const rows = grid.slice(1);
  for (const row of rows) {
    if (row.length !== columns.length) {
      throw new SchemaError(
        `${file}: row with ${row.length} cells, expected ${columns.length}`
      );
    }
  }
  return { file, columns, rows };
}

export function readCsv(file: string): CsvTable {
  return parseCsv(readFileSync(file, "utf-8"), file);
}

/** Assert that every named column exists, naming the first one missing. */
export function requireColumns(table: CsvTable, names: string[]): void {
  for (const name of names) {
    if (!table.columns.includes(name)) {
      throw new SchemaError(`${table.file}: missing column "${name}"`);
    }
  }
}

/** The raw cell strings of one column, exactly as stored in the file. */
export function column(table: CsvTable, name: string): string[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new SchemaError(`${table.file}: missing column "${name}"`);
  }
  return table.rows.map((row) => row[idx]);
}

/**
 * Numeric view of raw cells. Empty cells (the simulator's encoding of a
 * missing value, e.g. no onset) and "nan" both map to NaN; anything else
 * that fails to parse is a schema violation.
 */
export function toNumbers(cells: string[], file: string, name: string): number[] {
  return cells.map((cell) => {
    const trimmed = cell.trim();
    if (trimmed === "" || trimmed === "nan") return NaN;
    const value = Number(trimmed);
    if (Number.isNaN(value)) {
      throw new SchemaError(
        `${file}: column "${name}" holds non-numeric cell "${cell}"`
      );
    }
    return value;
  });
}
