/**
 * UI contract tests against recorded API responses.
 *
 * The fixtures were captured from the real service; these tests pin the
 * rule that the UI renders API numbers verbatim and performs no model
 * mathematics of its own.
 */

import { describe, expect, it } from "vitest";

import type {
  CompensationMapJson,
  VerdictJson,
  WhatIfResponse,
} from "../src/types";
import {
  buildDoseExplorer,
  buildEllipses,
  buildHeatmap,
  buildVerdictPanel,
  cellTone,
  formatP,
  initialExplorerState,
  nextExplorerState,
} from "../src/viewmodel";

import whatifFixture from "./fixtures/whatif.json";
import verdictsFixture from "./fixtures/verdicts.json";
import compensationFixture from "./fixtures/compensation.json";

const whatif = whatifFixture as unknown as WhatIfResponse;
const verdicts = verdictsFixture as unknown as VerdictJson[];
const compensation = compensationFixture as unknown as CompensationMapJson;

describe("dose explorer", () => {
  it("renders exactly the API band values", () => {
    const view = buildDoseExplorer(whatif, 2.0);
    expect(view.points.length).toBe(whatif.doses_gy.length);
    view.points.forEach((p, i) => {
      expect(p.dose).toBe(whatif.doses_gy[i]);
      expect(p.reward.mean).toBe(whatif.reward.mean[i]);
      expect(p.reward.lo).toBe(whatif.reward.lo[i]);
      expect(p.reward.hi).toBe(whatif.reward.hi[i]);
      expect(p.probLc.mean).toBe(whatif.prob_lc.mean[i]);
      expect(p.probLc.lo).toBe(whatif.prob_lc.lo[i]);
      expect(p.probLc.hi).toBe(whatif.prob_lc.hi[i]);
      expect(p.probRp2.mean).toBe(whatif.prob_rp2.mean[i]);
      expect(p.probRp2.lo).toBe(whatif.prob_rp2.lo[i]);
      expect(p.probRp2.hi).toBe(whatif.prob_rp2.hi[i]);
    });
  });

  it("bands always enclose means in the recorded response", () => {
    const view = buildDoseExplorer(whatif, null);
    for (const p of view.points) {
      expect(p.reward.lo).toBeLessThanOrEqual(p.reward.mean);
      expect(p.reward.hi).toBeGreaterThanOrEqual(p.reward.mean);
      expect(p.probLc.lo).toBeLessThanOrEqual(p.probLc.mean);
      expect(p.probLc.hi).toBeGreaterThanOrEqual(p.probLc.mean);
    }
  });

  it("marks the AI dose at the argmax of the API reward means", () => {
    const view = buildDoseExplorer(whatif, null);
    const best = whatif.reward.mean.indexOf(Math.max(...whatif.reward.mean));
    expect(view.aiIndex).toBe(best);
    expect(view.aiDose).toBe(whatif.doses_gy[best]);
  });

  it("keeps the physician marker verbatim", () => {
    const view = buildDoseExplorer(whatif, 2.7);
    expect(view.physicianDose).toBe(2.7);
  });

  it("single-dose responses render one point", () => {
    const single: WhatIfResponse = {
      ...whatif,
      doses_gy: [whatif.doses_gy[0]],
      prob_lc: {
        mean: [whatif.prob_lc.mean[0]],
        lo: [whatif.prob_lc.lo[0]],
        hi: [whatif.prob_lc.hi[0]],
      },
      prob_rp2: {
        mean: [whatif.prob_rp2.mean[0]],
        lo: [whatif.prob_rp2.lo[0]],
        hi: [whatif.prob_rp2.hi[0]],
      },
      reward: {
        mean: [whatif.reward.mean[0]],
        lo: [whatif.reward.lo[0]],
        hi: [whatif.reward.hi[0]],
      },
      logit_variance: {
        lc: [whatif.logit_variance.lc[0]],
        rp2: [whatif.logit_variance.rp2[0]],
      },
    };
    expect(buildDoseExplorer(single, null).points.length).toBe(1);
  });
});

describe("explorer error handling", () => {
  it("failure keeps the last chart and raises the banner + watermark", () => {
    const good = nextExplorerState(initialExplorerState, {
      ok: true,
      response: whatif,
      physicianDose: 2.0,
    });
    expect(good.error).toBeNull();
    expect(good.stale).toBe(false);
    const failed = nextExplorerState(good, {
      ok: false,
      message: "API error 422: dose outside bounds",
    });
    expect(failed.view).toBe(good.view);
    expect(failed.error).toContain("422");
    expect(failed.stale).toBe(true);
  });

  it("failure before any data leaves no stale watermark", () => {
    const failed = nextExplorerState(initialExplorerState, {
      ok: false,
      message: "network down",
    });
    expect(failed.view).toBeNull();
    expect(failed.stale).toBe(false);
  });
});

describe("verdict panel", () => {
  it("has a full mixed set of twenty recorded verdicts", () => {
    expect(verdicts.length).toBe(20);
    const kinds = new Set(verdicts.map((v) => v.chosen));
    expect(kinds).toEqual(new Set(["AI", "PHYSICIAN"]));
  });

  it("rendering matches the chosen field on all recorded verdicts", () => {
    for (const verdict of verdicts) {
      const panel = buildVerdictPanel(verdict);
      expect(panel.followAi).toBe(verdict.chosen === "AI");
      if (verdict.chosen === "AI") {
        expect(panel.headline.startsWith("Follow AI recommendation")).toBe(
          true
        );
      } else {
        expect(
          panel.headline.startsWith("Keep the physician's prescription")
        ).toBe(true);
      }
      expect(panel.headline).toContain(formatP(verdict.p_value));
      // AI is chosen exactly when p < 0.05 (backend invariant mirrored)
      expect(verdict.chosen === "AI").toBe(verdict.p_value < 0.05);
    }
  });

  it("renders doses and sample counts verbatim", () => {
    const v = verdicts[0];
    const panel = buildVerdictPanel(v);
    expect(panel.aiDoseText).toContain(v.ai_dose_gy.toFixed(1));
    expect(panel.physicianDoseText).toContain(
      v.physician_dose_gy.toFixed(1)
    );
    expect(panel.rewardComparison).toContain(`${v.sample_count}`);
  });

  it("raises the reliability warning exactly when flagged", () => {
    const flagged = { ...verdicts[0], reliability_flag: true };
    expect(buildVerdictPanel(flagged).reliabilityWarning).toMatch(
      /not reliable/
    );
    const calm = { ...verdicts[0], reliability_flag: false };
    expect(buildVerdictPanel(calm).reliabilityWarning).toBeNull();
  });
});

describe("outcome ellipses", () => {
  it("centers and radii come from the verdict's interval fields", () => {
    const v = verdicts[1];
    const [ai, phys] = buildEllipses(v);
    expect(ai.label).toBe("AI");
    expect(ai.cx).toBe(v.ai_outcomes.lc.prob_mean);
    expect(ai.cy).toBe(v.ai_outcomes.rp2.prob_mean);
    expect(ai.rx).toBeCloseTo(
      (v.ai_outcomes.lc.prob_hi - v.ai_outcomes.lc.prob_lo) / 2,
      12
    );
    expect(phys.label).toBe("PHYSICIAN");
    expect(phys.cy).toBe(v.physician_outcomes.rp2.prob_mean);
  });

  it("ellipses are axis aligned with nonnegative radii", () => {
    for (const v of verdicts) {
      for (const e of buildEllipses(v)) {
        expect(e.rx).toBeGreaterThanOrEqual(0);
        expect(e.ry).toBeGreaterThanOrEqual(0);
      }
    }
  });
});

describe("compensation heatmap", () => {
  it("lattice size matches the requested resolution", () => {
    const view = buildHeatmap(compensation);
    if (view.empty) throw new Error("fixture should not be empty");
    expect(view.axis1.length).toBe(12);
    expect(view.axis2.length).toBe(12);
    expect(view.cells.length).toBe(144);
  });

  it("cell colors match the sign of the recorded compensation", () => {
    const view = buildHeatmap(compensation);
    if (view.empty) throw new Error("fixture should not be empty");
    for (const cell of view.cells) {
      expect(cell.value).toBe(compensation.delta_gy[cell.row][cell.col]);
      if (cell.value > 0) {
        expect(cell.tone).toBe("warm");
        expect(cell.css).toMatch(/^hsl\(14,/);
      } else if (cell.value < 0) {
        expect(cell.tone).toBe("cold");
        expect(cell.css).toMatch(/^hsl\(214,/);
      } else {
        expect(cell.tone).toBe("zero");
      }
    }
  });

  it("fixture exercises both warm and cold cells", () => {
    const tones = new Set(
      compensation.delta_gy.flat().map((v: number) => cellTone(v))
    );
    expect(tones.has("warm")).toBe(true);
    expect(tones.has("cold")).toBe(true);
  });

  it("training markers carry original-unit coordinates", () => {
    const view = buildHeatmap(compensation);
    if (view.empty) throw new Error("fixture should not be empty");
    expect(view.markers.length).toBe(compensation.training_points.length);
    expect(view.markers[0].x).toBe(compensation.training_points[0].var1);
  });

  it("missing compensation renders the explanatory empty state", () => {
    const view = buildHeatmap(null);
    expect(view.empty).toBe(true);
    if (view.empty) expect(view.message).toMatch(/p<0.05/);
  });
});
