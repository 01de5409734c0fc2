/** Minimal deterministic SVG building blocks: scales, axes, paths, colors. */

export interface Scale {
  (v: number): number;
  domain: [number, number];
  range: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const f = ((v: number) => r0 + ((v - d0) / span) * (r1 - r0)) as Scale;
  f.domain = domain;
  f.range = range;
  return f;
}

export function fmt(v: number): string {
  if (v === 0) return "0";
  const s = v.toPrecision(6);
  return s.includes(".") ? s.replace(/\.?0+($|e)/, "$1") : s;
}

/** round-ish tick positions covering [lo, hi] */
export function ticks(lo: number, hi: number, count = 6): number[] {
  const span = hi - lo || 1;
  const step0 = span / Math.max(1, count);
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  const norm = step0 / mag;
  const step = (norm >= 5 ? 5 : norm >= 2 ? 2 : 1) * mag;
  const start = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let v = start; v <= hi + 1e-12 * span; v += step) out.push(Number(v.toPrecision(12)));
  return out;
}

export function logTicks(lo: number, hi: number): number[] {
  const out: number[] = [];
  for (let e = Math.ceil(Math.log10(lo)); Math.pow(10, e) <= hi * (1 + 1e-12); e++) {
    out.push(Math.pow(10, e));
  }
  return out;
}

export function polylinePath(xs: number[], ys: number[]): string {
  const parts: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    parts.push(`${i === 0 ? "M" : "L"}${fmt(xs[i])},${fmt(ys[i])}`);
  }
  return parts.join("");
}

/** blue-to-red diverging colormap on [-1, 1]; grayscale-safe midpoint */
export function divergingColor(t: number): string {
  const x = Math.max(-1, Math.min(1, t));
  const stops: Array<[number, [number, number, number]]> = [
    [-1, [33, 102, 172]],
    [-0.5, [146, 197, 222]],
    [0, [247, 247, 247]],
    [0.5, [244, 165, 130]],
    [1, [178, 24, 43]],
  ];
  for (let i = 0; i < stops.length - 1; i++) {
    const [a, ca] = stops[i];
    const [b, cb] = stops[i + 1];
    if (x <= b) {
      const u = (x - a) / (b - a);
      const rgb = ca.map((v, k) => Math.round(v + u * (cb[k] - v)));
      return `rgb(${rgb[0]},${rgb[1]},${rgb[2]})`;
    }
  }
  return "rgb(178,24,43)";
}

export interface SvgDoc {
  width: number;
  height: number;
  body: string[];
}

export function svgDocument(width: number, height: number): SvgDoc {
  return { width, height, body: [] };
}

export function renderSvg(doc: SvgDoc): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${doc.width}" height="${doc.height}" ` +
      `viewBox="0 0 ${doc.width} ${doc.height}">`,
    ...doc.body,
    "</svg>",
    "",
  ].join("\n");
}
