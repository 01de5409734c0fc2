/**
 * CSV reading for artifact files. Errors carry the file name and the
 * 1-based line number of the offending row so refusals are actionable.
 */

import Papa from "papaparse";

export class CsvError extends Error {
  constructor(
    public readonly file: string,
    public readonly line: number,
    detail: string,
  ) {
    super(`${file}:${line}: ${detail}`);
  }
}

export interface NumericTable {
  header: string[];
  /** column-major numeric data, data[c][r] */
  columns: number[][];
  rows: number;
}

export function parseNumericCsv(text: string, file: string): NumericTable {
  const parsed = Papa.parse<string[]>(text.trim(), { delimiter: "," });
  if (parsed.errors.length > 0) {
    const e = parsed.errors[0];
    throw new CsvError(file, (e.row ?? 0) + 1, e.message);
  }
  const rows = parsed.data;
  if (rows.length < 2) {
    throw new CsvError(file, 1, "expected a header row and at least one data row");
  }
  const header = rows[0];
  const columns: number[][] = header.map(() => []);
  for (let r = 1; r < rows.length; r++) {
    const row = rows[r];
    if (row.length === 1 && row[0] === "") continue; // trailing newline
    if (row.length !== header.length) {
      throw new CsvError(file, r + 1, `expected ${header.length} fields, found ${row.length}`);
    }
    for (let c = 0; c < header.length; c++) {
      const v = Number(row[c]);
      if (!Number.isFinite(v) && row[c] !== "inf") {
        // non-numeric payload is allowed only in the stop_reason column of
        // loss curves; the caller decides which columns it needs as numbers
        columns[c].push(NaN);
      } else {
        columns[c].push(v);
      }
    }
  }
  return { header, columns, rows: columns[0]?.length ?? 0 };
}

export function requireColumn(table: NumericTable, name: string, file: string): number[] {
  const idx = table.header.indexOf(name);
  if (idx < 0) {
    throw new CsvError(file, 1, `missing required column '${name}' (found: ${table.header.join(", ")})`);
  }
  const col = table.columns[idx];
  const bad = col.findIndex((v) => !Number.isFinite(v));
  if (bad >= 0) {
    throw new CsvError(file, bad + 2, `column '${name}' holds a non-numeric value`);
  }
  return col;
}
