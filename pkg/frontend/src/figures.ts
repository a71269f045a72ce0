/**
 * Figure builders.
 *
 * Each builder reads CSV/JSON artifacts produced by the simulator presets
 * and returns the finished SVG together with the exact cell strings that
 * were plotted, so tests can verify the rendered series against the files
 * byte for byte. No physics happens here: builders only select columns,
 * convert them to coordinates, and draw.
 */

import * as path from "node:path";

import { CsvTable, SchemaError, column, readCsv, requireColumns, toNumbers } from "./csv.js";
import { PointBlock, Summary, readSummary } from "./summary.js";
import { Series, buildChart, buildHistogram, composeRow, fmt } from "./svg.js";

export interface PlottedColumn {
  column: string;
  /** Raw cell strings exactly as they appear in the CSV. */
  cells: string[];
}

export interface PlottedSeries {
  file: string;
  x: PlottedColumn;
  y: PlottedColumn;
}

export interface FigureResult {
  name: string;
  svg: string;
  plotted: PlottedSeries[];
}

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"];

interface Extracted {
  series: Series;
  plotted: PlottedSeries;
}

function extract(
  table: CsvTable,
  xName: string,
  yName: string,
  style: Partial<Series> & { color: string; label: string },
  errName?: string
): Extracted {
  const names = errName ? [xName, yName, errName] : [xName, yName];
  requireColumns(table, names);
  const xCells = column(table, xName);
  const yCells = column(table, yName);
  const series: Series = {
    x: toNumbers(xCells, table.file, xName),
    y: toNumbers(yCells, table.file, yName),
    ...style,
  };
  if (errName) {
    series.yErr = toNumbers(column(table, errName), table.file, errName);
  }
  return {
    series,
    plotted: {
      file: table.file,
      x: { column: xName, cells: xCells },
      y: { column: yName, cells: yCells },
    },
  };
}

function ensembleTimeSeries(
  dataDir: string,
  preset: string,
  name: string,
  yColumn: string,
  title: string,
  yLabel: string
): FigureResult {
  const file = path.join(dataDir, preset, "ensemble.csv");
  const table = readCsv(file);
  const { series, plotted } = extract(table, "t", yColumn, {
    color: COLORS[0],
    label: yColumn,
  });
  const svg = buildChart({
    title,
    subtitle: `${preset}/ensemble.csv`,
    xLabel: "time (trap units)",
    yLabel,
    series: [series],
  });
  return { name, svg, plotted: [plotted] };
}

export function fig3a(dataDir: string): FigureResult {
  return ensembleTimeSeries(
    dataDir,
    "fig3",
    "fig3a",
    "fraction_mean",
    "Condensed fraction during continuous loading",
    "condensate fraction"
  );
}

export function fig3b(dataDir: string): FigureResult {
  return ensembleTimeSeries(
    dataDir,
    "fig3",
    "fig3b",
    "N0_mean",
    "Ground-state occupation during continuous loading",
    "condensate atoms N0"
  );
}

export function fig3c(dataDir: string): FigureResult {
  return ensembleTimeSeries(
    dataDir,
    "fig3",
    "fig3c",
    "energy_per_particle_mean",
    "Energy per trapped atom during continuous loading",
    "E/N (trap quanta)"
  );
}

function onsetScan(
  dataDir: string,
  preset: string,
  name: string,
  title: string,
  xLabel: string
): FigureResult {
  const file = path.join(dataDir, preset, "scan.csv");
  const table = readCsv(file);
  const { series, plotted } = extract(
    table,
    "value",
    "onset_natural",
    { color: COLORS[0], label: "condensation onset", markers: true },
    "onset_stderr_natural"
  );
  const svg = buildChart({
    title,
    subtitle: `${preset}/scan.csv`,
    xLabel,
    yLabel: "onset time (trap units)",
    series: [series],
    logX: true,
  });
  return { name, svg, plotted: [plotted] };
}

export function fig4(dataDir: string): FigureResult {
  return onsetScan(
    dataDir,
    "fig4",
    "fig4",
    "Condensation onset vs loading rate",
    "loading rate (trap units)"
  );
}

export function fig5(dataDir: string): FigureResult {
  return onsetScan(
    dataDir,
    "fig5",
    "fig5",
    "Condensation onset vs scattering length",
    "scattering length (m)"
  );
}

function overlayFigure(
  dataDir: string,
  preset: string,
  name: string,
  yColumn: string,
  title: string,
  yLabel: string
): FigureResult {
  const summary = readSummary(path.join(dataDir, preset, "summary.json"));
  if (!summary.points.length) {
    throw new SchemaError(`${preset}/summary.json: no points to plot`);
  }
  const series: Series[] = [];
  const plotted: PlottedSeries[] = [];
  summary.points.forEach((point: PointBlock, i: number) => {
    const file = path.join(dataDir, preset, point.files.ensemble);
    const table = readCsv(file);
    const got = extract(table, "t", yColumn, {
      color: COLORS[i % COLORS.length],
      label: point.label,
      dash: i % 2 === 1 ? "6,3" : undefined,
    });
    series.push(got.series);
    plotted.push(got.plotted);
  });
  const svg = buildChart({
    title,
    subtitle: `${preset}/*/ensemble.csv`,
    xLabel: "time (trap units)",
    yLabel,
    series,
  });
  return { name, svg, plotted };
}

export function fig6a(dataDir: string): FigureResult {
  return overlayFigure(
    dataDir,
    "fig6",
    "fig6a",
    "N0_mean",
    "Ground-state occupation for two trap depths",
    "condensate atoms N0"
  );
}

export function fig6b(dataDir: string): FigureResult {
  return overlayFigure(
    dataDir,
    "fig6",
    "fig6b",
    "N_mean",
    "Trapped atom number for two trap depths",
    "trapped atoms N"
  );
}

export function fig6c(dataDir: string): FigureResult {
  return overlayFigure(
    dataDir,
    "fig6",
    "fig6c",
    "fraction_mean",
    "Condensed fraction for two trap depths",
    "condensate fraction"
  );
}

export function fig7(dataDir: string): FigureResult {
  const file = path.join(dataDir, "fig7", "scan.csv");
  const table = readCsv(file);
  const { series, plotted } = extract(
    table,
    "value",
    "final_N0_mean",
    { color: COLORS[0], label: "final condensate", markers: true },
    "final_N0_stderr"
  );
  const summary = readSummary(path.join(dataDir, "fig7", "summary.json"));
  const threshold = summary.threshold;
  if (!threshold) {
    throw new SchemaError("fig7/summary.json: missing threshold block");
  }
  const opts = {
    title: "Condensate survival vs outcoupling strength",
    subtitle: "fig7/scan.csv",
    xLabel: "outcoupling strength (dimensionless)",
    yLabel: "final condensate atoms N0",
    series: [series],
    hLines: [
      {
        value: threshold.retention_level,
        color: "#777",
        label: `retention level ${fmt(threshold.retention_level)}`,
      },
    ],
    bands: [] as { from: number; to: number; color: string; opacity: number }[],
    vLines: [] as { value: number; color: string; label: string }[],
  };
  const [b0, b1] = threshold.bracket;
  if (!threshold.open_ended && b0 !== null && b1 !== null && threshold.xi0 !== null) {
    opts.bands.push({ from: b0, to: b1, color: COLORS[1], opacity: 0.12 });
    opts.vLines.push({
      value: threshold.xi0,
      color: COLORS[1],
      label: `threshold near ${fmt(threshold.xi0)}`,
    });
  }
  const svg = buildChart(opts);
  return { name: "fig7", svg, plotted: [plotted] };
}

export function fig8(dataDir: string): FigureResult {
  const file = path.join(dataDir, "fig8", "trajectory.csv");
  const table = readCsv(file);
  const { series, plotted } = extract(table, "t", "N0", {
    color: COLORS[0],
    label: "N0 (single run)",
  });
  const summary = readSummary(path.join(dataDir, "fig8", "summary.json"));
  if (!summary.points.length) {
    throw new SchemaError("fig8/summary.json: no points");
  }
  const stab = summary.points[0].stabilization;

  const bands = [];
  const hLines = [];
  const histValues: number[] = [];
  if (stab) {
    const [w0, w1] = stab.window_natural;
    bands.push({ from: w0, to: w1, color: COLORS[2], opacity: 0.1 });
    hLines.push({
      value: stab.mean_n0,
      color: "#777",
      label: `hold mean ${fmt(stab.mean_n0)}`,
    });
    for (let i = 0; i < series.x.length; i++) {
      if (series.x[i] >= w0 && series.x[i] <= w1 && Number.isFinite(series.y[i])) {
        histValues.push(series.y[i]);
      }
    }
  }

  const trace = buildChart({
    title: "Condensate under randomized outcoupling",
    subtitle: "fig8/trajectory.csv",
    xLabel: "time (trap units)",
    yLabel: "condensate atoms N0",
    series: [series],
    bands,
    hLines,
    width: 640,
    height: 360,
    clipId: "plot-trace",
  });
  const hist = buildHistogram({
    title: "N0 samples in the hold window",
    subtitle: stab
      ? `window [${fmt(stab.window_natural[0])}, ${fmt(stab.window_natural[1])}]`
      : "no hold window recorded",
    xLabel: "condensate atoms N0",
    values: histValues,
    binCount: 15,
    color: COLORS[0],
    width: 420,
    height: 360,
  });
  const svg = composeRow(
    [
      { svg: trace, width: 640 },
      { svg: hist, width: 420 },
    ],
    360
  );
  return { name: "fig8", svg, plotted: [plotted] };
}

/** Figure builders keyed by the preset whose artifacts they consume. */
export const FIGURES_BY_PRESET: Record<string, ((dataDir: string) => FigureResult)[]> = {
  fig3: [fig3a, fig3b, fig3c],
  fig4: [fig4],
  fig5: [fig5],
  fig6: [fig6a, fig6b, fig6c],
  fig7: [fig7],
  fig8: [fig8],
};
