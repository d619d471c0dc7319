// SVG chart builders for the live view. Pure string generation so the
// rendering is unit-testable without a canvas.
//
// The dashboard performs no computation on medical quantities: every
// number shown in a label is a value the server sent; the only
// arithmetic here maps values onto fixed pixel scales.

import type { ObservationRecord } from "./types.js";

export interface ChartOptions {
  width: number;
  height: number;
}

const DEFAULTS: ChartOptions = { width: 640, height: 260 };

// fixed physiological display ranges (never rescaled to the data)
const SPO2_RANGE: [number, number] = [0, 100];
const HR_RANGE: [number, number] = [0, 250];

export const ACTIVITY_NAMES: Record<number, string> = {
  1: "resting",
  2: "walking",
  3: "running",
  4: "falling",
};

export interface SeriesPoint {
  t: number;
  value: number;
  lowConfidence: boolean;
}

export function vitalsSeries(
  records: ObservationRecord[],
  field: "spo2" | "hr",
): SeriesPoint[] {
  const points: SeriesPoint[] = [];
  for (const record of records) {
    const value = record[field];
    if (value === undefined || value === null) continue;
    points.push({ t: record.t, value, lowConfidence: record.quality === "low_confidence" });
  }
  return points;
}

export interface ActivityBand {
  t0: number;
  t1: number;
  activity: number;
}

export function activityBands(records: ObservationRecord[]): ActivityBand[] {
  const bands: ActivityBand[] = [];
  for (const record of records) {
    const last = bands[bands.length - 1];
    if (last && last.activity === record.activity) {
      last.t1 = record.t;
    } else {
      if (last) last.t1 = record.t;
      bands.push({ t0: record.t, t1: record.t, activity: record.activity });
    }
  }
  return bands;
}

function timeScale(records: ObservationRecord[], width: number) {
  const t0 = records[0].t;
  const t1 = records[records.length - 1].t;
  const span = t1 - t0 || 1;
  return (t: number) => ((t - t0) / span) * (width - 70) + 60;
}

function valueScale(range: [number, number], y0: number, y1: number) {
  const [lo, hi] = range;
  return (v: number) => y1 - ((v - lo) / (hi - lo)) * (y1 - y0);
}

function seriesMarkup(
  points: SeriesPoint[],
  cls: string,
  tx: (t: number) => number,
  vy: (v: number) => number,
): string {
  if (points.length === 0) return "";
  const coords = points.map((p) => `${tx(p.t).toFixed(1)},${vy(p.value).toFixed(1)}`);
  const circles = points
    .map((p) => {
      // low-confidence readings get a visibly larger hollow marker
      const classes = p.lowConfidence ? `point-${cls} low-confidence` : `point-${cls}`;
      const radius = p.lowConfidence ? 5 : 2.5;
      return (
        `<circle class="${classes}" r="${radius}" cx="${tx(p.t).toFixed(1)}"` +
        ` cy="${vy(p.value).toFixed(1)}"><title>${p.value}</title></circle>`
      );
    })
    .join("");
  return `<polyline class="line-${cls}" fill="none" points="${coords.join(" ")}"/>` + circles;
}

/** Full live-view SVG: SpO2 panel, HR panel, activity color band. */
export function renderChart(
  records: ObservationRecord[],
  options: Partial<ChartOptions> = {},
): string {
  const { width, height } = { ...DEFAULTS, ...options };
  if (records.length === 0) return "";
  const tx = timeScale(records, width);
  const panelH = (height - 40) / 2;
  const spo2Y = valueScale(SPO2_RANGE, 10, 10 + panelH);
  const hrY = valueScale(HR_RANGE, 20 + panelH, 20 + 2 * panelH);

  const spo2 = seriesMarkup(vitalsSeries(records, "spo2"), "spo2", tx, spo2Y);
  const hr = seriesMarkup(vitalsSeries(records, "hr"), "hr", tx, hrY);

  const bandY = height - 16;
  const bands = activityBands(records)
    .map((band) => {
      const x0 = tx(band.t0);
      const x1 = Math.max(tx(band.t1), x0 + 2);
      return (
        `<rect class="band band-${band.activity}" x="${x0.toFixed(1)}" y="${bandY}"` +
        ` width="${(x1 - x0).toFixed(1)}" height="12">` +
        `<title>${ACTIVITY_NAMES[band.activity] ?? band.activity}</title></rect>`
      );
    })
    .join("");

  const axisLabels =
    `<text class="axis" x="4" y="${spo2Y(SPO2_RANGE[1]) + 10}">SpO2 ${SPO2_RANGE[1]}</text>` +
    `<text class="axis" x="4" y="${spo2Y(SPO2_RANGE[0])}">${SPO2_RANGE[0]}</text>` +
    `<text class="axis" x="4" y="${hrY(HR_RANGE[1]) + 10}">HR ${HR_RANGE[1]}</text>` +
    `<text class="axis" x="4" y="${hrY(HR_RANGE[0])}">${HR_RANGE[0]}</text>`;

  return (
    `<svg class="live-chart" viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">` +
    axisLabels +
    spo2 +
    hr +
    bands +
    `</svg>`
  );
}
