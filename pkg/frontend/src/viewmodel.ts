/**
 * Pure render models.
 *
 * Every number displayed by the UI is copied verbatim from an API response
 * field; nothing here re-derives model quantities.  Keeping these builders
 * free of DOM access makes the API contract directly testable.
 */

import type {
  CompensationMapJson,
  VerdictJson,
  WhatIfResponse,
} from "./types";

export interface DosePoint {
  dose: number;
  reward: { mean: number; lo: number; hi: number };
  probLc: { mean: number; lo: number; hi: number };
  probRp2: { mean: number; lo: number; hi: number };
}

export interface DoseExplorerView {
  points: DosePoint[];
  aiDose: number;
  aiIndex: number;
  physicianDose: number | null;
  modelDigest: string;
  seed: number;
}

/** Ties resolve to the lowest dose, mirroring the service's convention. */
export function argmaxLowest(values: number[]): number {
  let best = 0;
  for (let i = 1; i < values.length; i++) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

export function buildDoseExplorer(
  response: WhatIfResponse,
  physicianDose: number | null
): DoseExplorerView {
  const points: DosePoint[] = response.doses_gy.map((dose, i) => ({
    dose,
    reward: {
      mean: response.reward.mean[i],
      lo: response.reward.lo[i],
      hi: response.reward.hi[i],
    },
    probLc: {
      mean: response.prob_lc.mean[i],
      lo: response.prob_lc.lo[i],
      hi: response.prob_lc.hi[i],
    },
    probRp2: {
      mean: response.prob_rp2.mean[i],
      lo: response.prob_rp2.lo[i],
      hi: response.prob_rp2.hi[i],
    },
  }));
  const aiIndex = argmaxLowest(response.reward.mean);
  return {
    points,
    aiIndex,
    aiDose: response.doses_gy[aiIndex],
    physicianDose,
    modelDigest: response.model_digest,
    seed: response.seed,
  };
}

export interface EllipseView {
  label: "AI" | "PHYSICIAN";
  /** center: (P[control], P[pneumonitis]); radii from the +-2sd interval */
  cx: number;
  cy: number;
  rx: number;
  ry: number;
}

export function buildEllipses(verdict: VerdictJson): EllipseView[] {
  const make = (
    label: "AI" | "PHYSICIAN",
    outcomes: VerdictJson["ai_outcomes"]
  ): EllipseView => ({
    label,
    cx: outcomes.lc.prob_mean,
    cy: outcomes.rp2.prob_mean,
    rx: (outcomes.lc.prob_hi - outcomes.lc.prob_lo) / 2,
    ry: (outcomes.rp2.prob_hi - outcomes.rp2.prob_lo) / 2,
  });
  return [
    make("AI", verdict.ai_outcomes),
    make("PHYSICIAN", verdict.physician_outcomes),
  ];
}

export interface VerdictPanelView {
  headline: string;
  followAi: boolean;
  pValueText: string;
  aiDoseText: string;
  physicianDoseText: string;
  rewardComparison: string;
  reliabilityWarning: string | null;
}

export function formatP(p: number): string {
  if (p < 0.001) return "p<0.001";
  return `p=${p.toFixed(3)}`;
}

export function buildVerdictPanel(verdict: VerdictJson): VerdictPanelView {
  const followAi = verdict.chosen === "AI";
  const p = formatP(verdict.p_value);
  return {
    followAi,
    headline: followAi
      ? `Follow AI recommendation (${p})`
      : `Keep the physician's prescription (${p})`,
    pValueText: p,
    aiDoseText: `${verdict.ai_dose_gy.toFixed(1)} Gy/fraction`,
    physicianDoseText: `${verdict.physician_dose_gy.toFixed(1)} Gy/fraction`,
    rewardComparison:
      `AI reward ${verdict.ai_reward.mean.toFixed(3)} vs physician ` +
      `${verdict.physician_reward.mean.toFixed(3)} ` +
      `(${verdict.sample_count} Monte-Carlo samples)`,
    reliabilityWarning: verdict.reliability_flag
      ? "Wide outcome uncertainty at the AI dose: the AI recommendation " +
        "is not reliable here. Consider keeping the original prescription."
      : null,
  };
}

export type CellTone = "warm" | "cold" | "zero";

export interface HeatmapCell {
  row: number;
  col: number;
  x: number;
  y: number;
  value: number;
  tone: CellTone;
  css: string;
}

export interface HeatmapView {
  empty: false;
  var1: string;
  var2: string;
  axis1: number[];
  axis2: number[];
  cells: HeatmapCell[];
  markers: { x: number; y: number; value: number }[];
}

export interface HeatmapEmptyView {
  empty: true;
  message: string;
}

export function cellTone(value: number): CellTone {
  if (value > 0) return "warm";
  if (value < 0) return "cold";
  return "zero";
}

/** Warm hues for positive compensation (raise the dose), cold for negative. */
export function cellCss(value: number, maxAbs: number): string {
  const tone = cellTone(value);
  if (tone === "zero" || maxAbs === 0) return "hsl(0, 0%, 95%)";
  const strength = Math.min(1, Math.abs(value) / maxAbs);
  const lightness = 92 - 42 * strength;
  return tone === "warm"
    ? `hsl(14, 82%, ${lightness.toFixed(0)}%)`
    : `hsl(214, 72%, ${lightness.toFixed(0)}%)`;
}

export function buildHeatmap(
  map: CompensationMapJson | null
): HeatmapView | HeatmapEmptyView {
  if (map === null) {
    return {
      empty: true,
      message:
        "No compensation model: not enough adjudications favored the " +
        "optimizer (p<0.05) to learn a dose-compensation surface.",
    };
  }
  let maxAbs = 0;
  for (const row of map.delta_gy) {
    for (const v of row) maxAbs = Math.max(maxAbs, Math.abs(v));
  }
  const cells: HeatmapCell[] = [];
  map.delta_gy.forEach((row, i) => {
    row.forEach((value, j) => {
      cells.push({
        row: i,
        col: j,
        x: map.axis1[i],
        y: map.axis2[j],
        value,
        tone: cellTone(value),
        css: cellCss(value, maxAbs),
      });
    });
  });
  return {
    empty: false,
    var1: map.var1,
    var2: map.var2,
    axis1: map.axis1,
    axis2: map.axis2,
    cells,
    markers: map.training_points.map((t) => ({
      x: t.var1,
      y: t.var2,
      value: t.delta_gy,
    })),
  };
}

export interface ExplorerState {
  view: DoseExplorerView | null;
  error: string | null;
  stale: boolean;
}

export const initialExplorerState: ExplorerState = {
  view: null,
  error: null,
  stale: false,
};

/** Successful responses replace the chart; failures keep the last good
 * chart, watermark it stale, and surface the error banner. */
export function nextExplorerState(
  prev: ExplorerState,
  result:
    | { ok: true; response: WhatIfResponse; physicianDose: number | null }
    | { ok: false; message: string }
): ExplorerState {
  if (result.ok) {
    return {
      view: buildDoseExplorer(result.response, result.physicianDose),
      error: null,
      stale: false,
    };
  }
  return { view: prev.view, error: result.message, stale: prev.view !== null };
}
