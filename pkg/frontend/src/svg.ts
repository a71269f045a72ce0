/**
 * Minimal deterministic SVG chart building.
 *
 * Everything is assembled from plain template strings with fixed styles,
 * fixed layout, and fixed number formatting; no timestamps, randomness, or
 * environment lookups, so identical inputs yield identical bytes.
 */

export function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

/** Deterministic human-friendly tick label. */
export function fmt(v: number): string {
  if (!Number.isFinite(v)) return String(v);
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e5 || a < 1e-3) {
    return v.toExponential(2).replace(/\.?0+e/, "e");
  }
  return String(+v.toPrecision(6));
}

export function niceTicks(min: number, max: number, count: number): number[] {
  const range = max - min || 1;
  const rough = range / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rough)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((n) => n >= rough) ?? rough;
  const start = Math.ceil(min / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= max + step * 1e-9; v += step) ticks.push(v);
  return ticks;
}

/** Decade ticks (1eN) covering [min, max], for log axes. */
export function logTicks(min: number, max: number): number[] {
  const lo = Math.floor(Math.log10(min));
  const hi = Math.ceil(Math.log10(max));
  const ticks: number[] = [];
  for (let e = lo; e <= hi; e++) {
    const v = Math.pow(10, e);
    if (v >= min / (1 + 1e-9) && v <= max * (1 + 1e-9)) ticks.push(v);
  }
  return ticks;
}

export interface Series {
  x: number[];
  y: number[];
  /** Optional symmetric error on y, drawn as bars with caps. */
  yErr?: number[];
  color: string;
  label: string;
  width?: number;
  dash?: string;
  /** Draw circle markers at the points (used for scan figures). */
  markers?: boolean;
}

export interface VLine {
  value: number;
  color: string;
  label?: string;
  dash?: string;
}

export interface HLine {
  value: number;
  color: string;
  label?: string;
  dash?: string;
}

export interface Band {
  from: number;
  to: number;
  color: string;
  opacity: number;
}

export interface ChartOpts {
  title: string;
  subtitle?: string;
  xLabel: string;
  yLabel: string;
  series: Series[];
  logX?: boolean;
  yMin?: number;
  yMax?: number;
  vLines?: VLine[];
  hLines?: HLine[];
  bands?: Band[];
  width?: number;
  height?: number;
  /** Unique id for the plot-area clip path when composing multiple charts. */
  clipId?: string;
}

const FONT = "Helvetica, Arial, sans-serif";

export function buildChart(opts: ChartOpts): string {
  const W = opts.width ?? 640;
  const H = opts.height ?? 360;
  const ml = 64;
  const mr = 20;
  const mt = 44;
  const mb = 52;
  const pw = W - ml - mr;
  const ph = H - mt - mb;

  const clip = opts.clipId ?? "plot";
  const xsAll = opts.series.flatMap((s) => s.x).filter(Number.isFinite);
  const vVals = (opts.vLines ?? []).map((v) => v.value);
  const bandVals = (opts.bands ?? []).flatMap((b) => [b.from, b.to]);
  let xMinData = Math.min(...xsAll, ...vVals, ...bandVals);
  let xMaxData = Math.max(...xsAll, ...vVals, ...bandVals);
  if (!Number.isFinite(xMinData) || !Number.isFinite(xMaxData)) {
    xMinData = 0;
    xMaxData = 1;
  }

  let xOf: (v: number) => number;
  let xTicks: number[];
  if (opts.logX) {
    const lmin = Math.log10(xMinData);
    const lmax = Math.log10(xMaxData);
    const span = lmax - lmin || 1;
    xOf = (v) => ml + ((Math.log10(v) - lmin) / span) * pw;
    xTicks = logTicks(xMinData, xMaxData);
    if (xTicks.length < 2) xTicks = [xMinData, xMaxData];
  } else {
    const span = xMaxData - xMinData || 1;
    xOf = (v) => ml + ((v - xMinData) / span) * pw;
    xTicks = niceTicks(xMinData, xMaxData, 6);
  }

  const ysAll = opts.series.flatMap((s) =>
    s.y.flatMap((v, i) => {
      if (!Number.isFinite(v)) return [];
      const e = s.yErr && Number.isFinite(s.yErr[i]) ? s.yErr[i] : 0;
      return [v - e, v + e];
    })
  );
  const hVals = (opts.hLines ?? []).map((h) => h.value);
  const yMin = opts.yMin ?? Math.min(...ysAll, ...hVals, 0);
  let yMaxRaw = opts.yMax ?? Math.max(...ysAll, ...hVals);
  if (!Number.isFinite(yMaxRaw)) yMaxRaw = yMin + 1;
  const ySpan = yMaxRaw - yMin || 1;
  const yMax = opts.yMax ?? yMaxRaw + 0.06 * ySpan;
  const yOf = (v: number) => mt + ph - ((v - yMin) / (yMax - yMin || 1)) * ph;
  const yTicks = niceTicks(yMin, yMax, 5);

  let s = `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${W} ${H}" font-family="${FONT}">\n`;
  s += `<rect width="${W}" height="${H}" fill="#fff"/>\n`;
  s += `<text x="${ml}" y="18" font-size="13" font-weight="600" fill="#222">${esc(opts.title)}</text>\n`;
  if (opts.subtitle) {
    s += `<text x="${ml}" y="32" font-size="9" fill="#888">${esc(opts.subtitle)}</text>\n`;
  }
  s += `<defs><clipPath id="${clip}"><rect x="${ml}" y="${mt}" width="${pw}" height="${ph}"/></clipPath></defs>\n`;

  for (const band of opts.bands ?? []) {
    const x0 = xOf(band.from);
    const x1 = xOf(band.to);
    s += `<rect x="${x0.toFixed(2)}" y="${mt}" width="${(x1 - x0).toFixed(2)}" height="${ph}" fill="${band.color}" opacity="${band.opacity}"/>\n`;
  }

  for (const v of yTicks) {
    const y = yOf(v).toFixed(2);
    s += `<line x1="${ml}" y1="${y}" x2="${ml + pw}" y2="${y}" stroke="#eee" stroke-width="0.6"/>\n`;
    s += `<text x="${ml - 6}" y="${(yOf(v) + 3).toFixed(2)}" font-size="9" fill="#555" text-anchor="end">${esc(fmt(v))}</text>\n`;
  }
  for (const v of xTicks) {
    const x = xOf(v).toFixed(2);
    s += `<line x1="${x}" y1="${mt + ph}" x2="${x}" y2="${mt + ph + 4}" stroke="#555" stroke-width="0.8"/>\n`;
    s += `<text x="${x}" y="${mt + ph + 16}" font-size="9" fill="#555" text-anchor="middle">${esc(fmt(v))}</text>\n`;
  }
  s += `<rect x="${ml}" y="${mt}" width="${pw}" height="${ph}" fill="none" stroke="#999" stroke-width="0.8"/>\n`;
  s += `<text x="${ml + pw / 2}" y="${H - 12}" font-size="10" fill="#333" text-anchor="middle">${esc(opts.xLabel)}</text>\n`;
  s += `<text x="16" y="${mt + ph / 2}" font-size="10" fill="#333" text-anchor="middle" transform="rotate(-90 16 ${mt + ph / 2})">${esc(opts.yLabel)}</text>\n`;

  for (const line of opts.hLines ?? []) {
    const y = yOf(line.value).toFixed(2);
    s += `<line x1="${ml}" y1="${y}" x2="${ml + pw}" y2="${y}" stroke="${line.color}" stroke-width="1" stroke-dasharray="${line.dash ?? "5,3"}"/>\n`;
    if (line.label) {
      s += `<text x="${ml + pw - 4}" y="${(yOf(line.value) - 4).toFixed(2)}" font-size="8.5" fill="${line.color}" text-anchor="end">${esc(line.label)}</text>\n`;
    }
  }
  for (const line of opts.vLines ?? []) {
    const x = xOf(line.value).toFixed(2);
    s += `<line clip-path="url(#${clip})" x1="${x}" y1="${mt}" x2="${x}" y2="${mt + ph}" stroke="${line.color}" stroke-width="1" stroke-dasharray="${line.dash ?? "4,3"}"/>\n`;
    if (line.label) {
      s += `<text x="${(xOf(line.value) + 4).toFixed(2)}" y="${mt + 12}" font-size="8.5" fill="${line.color}">${esc(line.label)}</text>\n`;
    }
  }

  for (const ser of opts.series) {
    if (ser.yErr) {
      for (let i = 0; i < ser.x.length; i++) {
        const e = ser.yErr[i];
        if (!Number.isFinite(e) || !Number.isFinite(ser.y[i]) || e <= 0) continue;
        const x = xOf(ser.x[i]).toFixed(2);
        const y0 = yOf(ser.y[i] - e).toFixed(2);
        const y1 = yOf(ser.y[i] + e).toFixed(2);
        s += `<line x1="${x}" y1="${y0}" x2="${x}" y2="${y1}" stroke="${ser.color}" stroke-width="1"/>\n`;
        const xl = (xOf(ser.x[i]) - 3).toFixed(2);
        const xr = (xOf(ser.x[i]) + 3).toFixed(2);
        s += `<line x1="${xl}" y1="${y0}" x2="${xr}" y2="${y0}" stroke="${ser.color}" stroke-width="1"/>\n`;
        s += `<line x1="${xl}" y1="${y1}" x2="${xr}" y2="${y1}" stroke="${ser.color}" stroke-width="1"/>\n`;
      }
    }
    const pts: string[] = [];
    for (let i = 0; i < ser.x.length; i++) {
      if (!Number.isFinite(ser.x[i]) || !Number.isFinite(ser.y[i])) continue;
      pts.push(`${xOf(ser.x[i]).toFixed(2)},${yOf(ser.y[i]).toFixed(2)}`);
    }
    if (pts.length > 1) {
      s += `<polyline clip-path="url(#${clip})" points="${pts.join(" ")}" fill="none" stroke="${ser.color}" stroke-width="${ser.width ?? 1.4}"${ser.dash ? ` stroke-dasharray="${ser.dash}"` : ""}/>\n`;
    }
    if (ser.markers) {
      for (const p of pts) {
        const [x, y] = p.split(",");
        s += `<circle cx="${x}" cy="${y}" r="2.6" fill="${ser.color}"/>\n`;
      }
    }
  }

  const legendY = mt + 10;
  opts.series.forEach((ser, i) => {
    const y = legendY + i * 13;
    s += `<line x1="${ml + 8}" y1="${y}" x2="${ml + 28}" y2="${y}" stroke="${ser.color}" stroke-width="2"${ser.dash ? ` stroke-dasharray="${ser.dash}"` : ""}/>\n`;
    s += `<text x="${ml + 33}" y="${y + 3}" font-size="9" fill="#333">${esc(ser.label)}</text>\n`;
  });

  s += `</svg>\n`;
  return s;
}

export interface HistogramOpts {
  title: string;
  subtitle?: string;
  xLabel: string;
  values: number[];
  binCount: number;
  color: string;
  vLines?: VLine[];
  width?: number;
  height?: number;
}

/** Fixed-bin histogram of a sample array. */
export function buildHistogram(opts: HistogramOpts): string {
  const W = opts.width ?? 420;
  const H = opts.height ?? 360;
  const ml = 56;
  const mr = 16;
  const mt = 44;
  const mb = 52;
  const pw = W - ml - mr;
  const ph = H - mt - mb;

  const finite = opts.values.filter(Number.isFinite);
  const lo = finite.length ? Math.min(...finite) : 0;
  const hi = finite.length ? Math.max(...finite) : 1;
  const span = hi - lo || 1;
  const counts = new Array<number>(opts.binCount).fill(0);
  for (const v of finite) {
    let b = Math.floor(((v - lo) / span) * opts.binCount);
    if (b >= opts.binCount) b = opts.binCount - 1;
    counts[b] += 1;
  }
  const cMax = Math.max(...counts, 1);

  const xOf = (v: number) => ml + ((v - lo) / span) * pw;
  const yOf = (c: number) => mt + ph - (c / cMax) * ph;

  let s = `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${W} ${H}" font-family="${FONT}">\n`;
  s += `<rect width="${W}" height="${H}" fill="#fff"/>\n`;
  s += `<text x="${ml}" y="18" font-size="13" font-weight="600" fill="#222">${esc(opts.title)}</text>\n`;
  if (opts.subtitle) {
    s += `<text x="${ml}" y="32" font-size="9" fill="#888">${esc(opts.subtitle)}</text>\n`;
  }
  for (let b = 0; b < opts.binCount; b++) {
    if (counts[b] === 0) continue;
    const x0 = xOf(lo + (b / opts.binCount) * span);
    const x1 = xOf(lo + ((b + 1) / opts.binCount) * span);
    const y = yOf(counts[b]);
    s += `<rect x="${x0.toFixed(2)}" y="${y.toFixed(2)}" width="${(x1 - x0).toFixed(2)}" height="${(mt + ph - y).toFixed(2)}" fill="${opts.color}" opacity="0.85"/>\n`;
  }
  for (const v of niceTicks(lo, hi, 5)) {
    const x = xOf(v).toFixed(2);
    s += `<line x1="${x}" y1="${mt + ph}" x2="${x}" y2="${mt + ph + 4}" stroke="#555" stroke-width="0.8"/>\n`;
    s += `<text x="${x}" y="${mt + ph + 16}" font-size="9" fill="#555" text-anchor="middle">${esc(fmt(v))}</text>\n`;
  }
  for (const line of opts.vLines ?? []) {
    const x = xOf(line.value).toFixed(2);
    s += `<line x1="${x}" y1="${mt}" x2="${x}" y2="${mt + ph}" stroke="${line.color}" stroke-width="1" stroke-dasharray="${line.dash ?? "4,3"}"/>\n`;
    if (line.label) {
      s += `<text x="${(xOf(line.value) + 4).toFixed(2)}" y="${mt + 12}" font-size="8.5" fill="${line.color}">${esc(line.label)}</text>\n`;
    }
  }
  s += `<rect x="${ml}" y="${mt}" width="${pw}" height="${ph}" fill="none" stroke="#999" stroke-width="0.8"/>\n`;
  s += `<text x="${ml + pw / 2}" y="${H - 12}" font-size="10" fill="#333" text-anchor="middle">${esc(opts.xLabel)}</text>\n`;
  s += `<text x="16" y="${mt + ph / 2}" font-size="10" fill="#333" text-anchor="middle" transform="rotate(-90 16 ${mt + ph / 2})">samples</text>\n`;
  s += `</svg>\n`;
  return s;
}

/**
 * Place charts side by side in one document. Panels must carry distinct
 * clip ids if more than one of them clips to its plot area.
 */
export function composeRow(panels: { svg: string; width: number }[], height: number): string {
  const total = panels.reduce((w, p) => w + p.width, 0);
  let s = `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${total} ${height}" font-family="${FONT}">\n`;
  let x = 0;
  for (const p of panels) {
    const inner = p.svg.replace(/^<svg[^>]*>\n/, "").replace(/<\/svg>\n$/, "");
    s += `<g transform="translate(${x},0)">\n${inner}</g>\n`;
    x += p.width;
  }
  s += `</svg>\n`;
  return s;
}
