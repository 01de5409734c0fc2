/**
 * Figure rendering from eigencurve artifact files.
 *
 * Reads only the documented CSV/JSON formats; the numerical package is never
 * imported. Output is SVG text, deterministic for identical inputs.
 */

import { CsvError, parseNumericCsv, requireColumn } from "./csv.js";
import {
  divergingColor,
  fmt,
  linearScale,
  logTicks,
  polylinePath,
  renderSvg,
  svgDocument,
  ticks,
} from "./svg.js";

export class Refusal extends Error {}

const WIDTH = 800;
const HEIGHT = 500;
const MARGIN = { left: 64, right: 20, top: 20, bottom: 48 };
const LOG_CLAMP = 1e-12;

export interface LossCurveInput {
  lossCurveCsv: string;
  lossCurveFile: string;
  upperBoundCsv?: string;
  upperBoundFile?: string;
  eigenvaluesJson?: string;
}

export interface RenderResult {
  svg: string;
  warnings: string[];
}

export function plotLossCurve(input: LossCurveInput, logScale: boolean): RenderResult {
  const warnings: string[] = [];
  const table = parseNumericCsv(input.lossCurveCsv, input.lossCurveFile);
  const E = requireColumn(table, "E", input.lossCurveFile);
  let total = requireColumn(table, "total", input.lossCurveFile);

  let upperE: number[] = [];
  let upperU: number[] = [];
  if (input.upperBoundCsv !== undefined) {
    const ub = parseNumericCsv(input.upperBoundCsv, input.upperBoundFile ?? "upper_bound.csv");
    upperE = requireColumn(ub, "E", input.upperBoundFile ?? "upper_bound.csv");
    upperU = requireColumn(ub, "upper_bound", input.upperBoundFile ?? "upper_bound.csv");
  }
  let marks: number[] = [];
  if (input.eigenvaluesJson !== undefined) {
    const doc = JSON.parse(input.eigenvaluesJson) as { estimates?: Array<{ E_hat: number }> };
    marks = (doc.estimates ?? []).map((e) => e.E_hat);
  }

  let yValues = [...total, ...upperU];
  if (logScale) {
    const clampCount = yValues.filter((v) => v < LOG_CLAMP).length;
    if (clampCount > 0) {
      warnings.push(
        `log scale: clamped ${clampCount} value(s) below ${LOG_CLAMP} to ${LOG_CLAMP}`,
      );
    }
    total = total.map((v) => Math.max(v, LOG_CLAMP));
    upperU = upperU.map((v) => Math.max(v, LOG_CLAMP));
    yValues = [...total, ...upperU];
  }

  const x = linearScale(
    [Math.min(...E), Math.max(...E)],
    [MARGIN.left, WIDTH - MARGIN.right],
  );
  const yLo = Math.min(...yValues);
  const yHi = Math.max(...yValues);
  const toY = (v: number) => (logScale ? Math.log10(v) : v);
  const y = linearScale(
    [toY(yLo), toY(yHi === yLo ? yLo + 1 : yHi)],
    [HEIGHT - MARGIN.bottom, MARGIN.top],
  );

  const doc = svgDocument(WIDTH, HEIGHT);
  doc.body.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
  // axes
  const axisY = HEIGHT - MARGIN.bottom;
  doc.body.push(
    `<line x1="${MARGIN.left}" y1="${axisY}" x2="${WIDTH - MARGIN.right}" y2="${axisY}" stroke="black"/>`,
    `<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" y2="${axisY}" stroke="black"/>`,
  );
  for (const t of ticks(x.domain[0], x.domain[1])) {
    const px = x(t);
    doc.body.push(
      `<line x1="${fmt(px)}" y1="${axisY}" x2="${fmt(px)}" y2="${axisY + 5}" stroke="black"/>`,
      `<text x="${fmt(px)}" y="${axisY + 20}" font-size="12" text-anchor="middle">${fmt(t)}</text>`,
    );
  }
  const yTicks = logScale ? logTicks(yLo, yHi) : ticks(y.domain[0], y.domain[1]);
  for (const t of yTicks) {
    const py = y(toY(t));
    doc.body.push(
      `<line x1="${MARGIN.left - 5}" y1="${fmt(py)}" x2="${MARGIN.left}" y2="${fmt(py)}" stroke="black"/>`,
      `<text x="${MARGIN.left - 8}" y="${fmt(py + 4)}" font-size="12" text-anchor="end">${fmt(t)}</text>`,
    );
  }
  doc.body.push(
    `<text x="${(MARGIN.left + WIDTH - MARGIN.right) / 2}" y="${HEIGHT - 10}" font-size="14" text-anchor="middle">E</text>`,
    `<text x="16" y="${(MARGIN.top + axisY) / 2}" font-size="14" text-anchor="middle" transform="rotate(-90 16 ${(MARGIN.top + axisY) / 2})">loss</text>`,
  );
  // detected eigenvalues as vertical markers
  for (const m of marks) {
    const px = x(m);
    doc.body.push(
      `<line x1="${fmt(px)}" y1="${MARGIN.top}" x2="${fmt(px)}" y2="${axisY}" stroke="#2ca02c" stroke-dasharray="2,3"/>`,
    );
  }
  // theoretical upper bound as a dashed overlay
  if (upperE.length > 0) {
    const path = polylinePath(upperE.map(x), upperU.map((v) => y(toY(v))));
    doc.body.push(
      `<path d="${path}" fill="none" stroke="#d62728" stroke-dasharray="6,4" stroke-width="1.5"/>`,
    );
  }
  // the loss curve itself: line plus markers
  const path = polylinePath(E.map(x), total.map((v) => y(toY(v))));
  doc.body.push(`<path d="${path}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>`);
  for (let i = 0; i < E.length; i++) {
    doc.body.push(
      `<circle cx="${fmt(x(E[i]))}" cy="${fmt(y(toY(total[i])))}" r="2" fill="#1f77b4"/>`,
    );
  }
  return { svg: renderSvg(doc), warnings };
}

export function plotEigenfunction(csvText: string, file: string): RenderResult {
  const table = parseNumericCsv(csvText, file);
  const coordCols = table.header.filter((h) => /^x\d+$/.test(h));
  if (table.header[table.header.length - 1] !== "u") {
    throw new CsvError(file, 1, "expected a trailing 'u' column");
  }
  if (coordCols.length !== 2) {
    throw new Refusal(
      `${file} holds a ${coordCols.length}-coordinate lattice; only 2D eigenfunctions ` +
        "can be drawn as heatmaps (higher-dimensional exports are data-only)",
    );
  }
  const x1 = requireColumn(table, "x1", file);
  const x2 = requireColumn(table, "x2", file);
  const u = requireColumn(table, "u", file);
  const xs = [...new Set(x1)].sort((a, b) => a - b);
  const ys = [...new Set(x2)].sort((a, b) => a - b);
  if (xs.length * ys.length !== u.length) {
    throw new CsvError(file, 1, "lattice is not a full regular grid");
  }
  const peak = Math.max(...u.map(Math.abs));
  const size = 640;
  const doc = svgDocument(size, size);
  doc.body.push(`<rect width="${size}" height="${size}" fill="white"/>`);
  const px = linearScale([xs[0], xs[xs.length - 1]], [10, size - 10]);
  const py = linearScale([ys[0], ys[ys.length - 1]], [size - 10, 10]);
  const cellW = xs.length > 1 ? (px(xs[1]) - px(xs[0])) : size - 20;
  const cellH = ys.length > 1 ? (py(ys[0]) - py(ys[1])) : size - 20;
  for (let i = 0; i < u.length; i++) {
    if (u[i] === 0) continue; // exterior nodes are exactly zero: transparent mask
    const cx = px(x1[i]);
    const cy = py(x2[i]);
    const color = divergingColor(peak > 0 ? u[i] / peak : 0);
    doc.body.push(
      `<rect x="${fmt(cx - cellW / 2)}" y="${fmt(cy - cellH / 2)}" width="${fmt(cellW)}" ` +
        `height="${fmt(cellH)}" fill="${color}"/>`,
    );
  }
  return { svg: renderSvg(doc), warnings: [] };
}
