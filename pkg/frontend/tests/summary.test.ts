import * as fs from "node:fs";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { SchemaError } from "../src/csv.js";
import { parseSummary, readSummary } from "../src/summary.js";

const FIXTURES = path.join(path.dirname(fileURLToPath(import.meta.url)), "fixtures");

describe("parseSummary", () => {
  it("reads a real summary produced by the simulator", () => {
    const summary = readSummary(path.join(FIXTURES, "fig7", "summary.json"));
    expect(summary.schema_version).toBe(1);
    expect(summary.points.length).toBeGreaterThan(0);
    expect(summary.threshold).not.toBeNull();
  });

  it("refuses an unknown schema version", () => {
    const raw = fs.readFileSync(path.join(FIXTURES, "fig7", "summary.json"), "utf8");
    const doc = JSON.parse(raw);
    doc.schema_version = 2;
    expect(() => parseSummary(JSON.stringify(doc), "future.json")).toThrow(SchemaError);
    expect(() => parseSummary(JSON.stringify(doc), "future.json")).toThrow(/schema_version 2/);
  });

  it("refuses a document without a schema version", () => {
    expect(() => parseSummary('{"points": []}', "bare.json")).toThrow(SchemaError);
  });

  it("refuses malformed JSON", () => {
    expect(() => parseSummary("{nope", "bad.json")).toThrow(SchemaError);
  });

  it("refuses a document whose points are not a list", () => {
    expect(() => parseSummary('{"schema_version": 1, "points": 3}', "odd.json")).toThrow(
      SchemaError
    );
  });
});
