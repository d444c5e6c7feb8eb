/** SVG chart rendering for the render models (thin DOM glue, no math). */

import type {
  DoseExplorerView,
  EllipseView,
  HeatmapEmptyView,
  HeatmapView,
  VerdictPanelView,
} from "./viewmodel";

const SVG_NS = "http://www.w3.org/2000/svg";

function svgEl(tag: string, attrs: Record<string, string>): SVGElement {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) el.setAttribute(k, v);
  return el;
}

interface Scale {
  (v: number): number;
}

function linearScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const span = d1 - d0 || 1;
  return (v) => r0 + ((v - d0) / span) * (r1 - r0);
}

export function renderDoseChart(
  host: HTMLElement,
  view: DoseExplorerView,
  stale: boolean
): void {
  host.innerHTML = "";
  const W = 640;
  const H = 300;
  const pad = 42;
  const doses = view.points.map((p) => p.dose);
  const los = view.points.map((p) => p.reward.lo);
  const his = view.points.map((p) => p.reward.hi);
  const yMin = Math.min(...los);
  const yMax = Math.max(...his);
  const x = linearScale(doses[0], doses[doses.length - 1], pad, W - 12);
  const y = linearScale(yMin, yMax, H - pad, 12);

  const svg = svgEl("svg", {
    viewBox: `0 0 ${W} ${H}`,
    class: "dose-chart" + (stale ? " stale" : ""),
  });

  const bandPath =
    view.points.map((p, i) => `${i ? "L" : "M"}${x(p.dose)},${y(p.reward.hi)}`)
      .join(" ") +
    " " +
    [...view.points]
      .reverse()
      .map((p) => `L${x(p.dose)},${y(p.reward.lo)}`)
      .join(" ") +
    " Z";
  svg.appendChild(svgEl("path", { d: bandPath, class: "band" }));

  const meanPath = view.points
    .map((p, i) => `${i ? "L" : "M"}${x(p.dose)},${y(p.reward.mean)}`)
    .join(" ");
  svg.appendChild(svgEl("path", { d: meanPath, class: "mean-line", fill: "none" }));

  const aiX = x(view.aiDose);
  svg.appendChild(svgEl("line", {
    x1: `${aiX}`, x2: `${aiX}`, y1: "12", y2: `${H - pad}`,
    class: "marker marker-ai",
  }));
  if (view.physicianDose !== null) {
    const phX = x(view.physicianDose);
    svg.appendChild(svgEl("line", {
      x1: `${phX}`, x2: `${phX}`, y1: "12", y2: `${H - pad}`,
      class: "marker marker-physician",
    }));
  }
  const axis = svgEl("line", {
    x1: `${pad}`, x2: `${W - 12}`, y1: `${H - pad}`, y2: `${H - pad}`,
    class: "axis",
  });
  svg.appendChild(axis);
  for (const dose of doses.filter((_, i) => i % 5 === 0)) {
    const label = svgEl("text", {
      x: `${x(dose)}`, y: `${H - pad + 16}`, class: "tick",
    });
    label.textContent = dose.toFixed(1);
    svg.appendChild(label);
  }
  host.appendChild(svg);
  if (stale) {
    const mark = document.createElement("div");
    mark.className = "stale-watermark";
    mark.textContent = "showing last successful response";
    host.appendChild(mark);
  }
}

export function renderEllipses(host: HTMLElement, views: EllipseView[]): void {
  host.innerHTML = "";
  const S = 280;
  const pad = 34;
  const scale = linearScale(0, 1, pad, S - 10);
  const scaleY = linearScale(0, 1, S - pad, 10);
  const svg = svgEl("svg", { viewBox: `0 0 ${S} ${S}`, class: "ellipse-panel" });
  svg.appendChild(svgEl("rect", {
    x: `${pad}`, y: "10", width: `${S - 10 - pad}`, height: `${S - pad - 10}`,
    class: "frame",
  }));
  for (const e of views) {
    svg.appendChild(svgEl("ellipse", {
      cx: `${scale(e.cx)}`,
      cy: `${scaleY(e.cy)}`,
      rx: `${Math.max(2, Math.abs(scale(e.rx) - scale(0)))}`,
      ry: `${Math.max(2, Math.abs(scaleY(e.ry) - scaleY(0)))}`,
      class: `ellipse ellipse-${e.label.toLowerCase()}`,
    }));
    const center = svgEl("circle", {
      cx: `${scale(e.cx)}`, cy: `${scaleY(e.cy)}`, r: "3",
      class: `center center-${e.label.toLowerCase()}`,
    });
    svg.appendChild(center);
  }
  const xl = svgEl("text", { x: `${S / 2}`, y: `${S - 6}`, class: "tick" });
  xl.textContent = "P[tumor control]";
  const yl = svgEl("text", {
    x: "12", y: `${S / 2}`, class: "tick",
    transform: `rotate(-90 12 ${S / 2})`,
  });
  yl.textContent = "P[pneumonitis]";
  svg.appendChild(xl);
  svg.appendChild(yl);
  host.appendChild(svg);
}

export function renderVerdict(host: HTMLElement, view: VerdictPanelView): void {
  host.innerHTML = "";
  const headline = document.createElement("h3");
  headline.className = view.followAi ? "verdict-ai" : "verdict-physician";
  headline.textContent = view.headline;
  host.appendChild(headline);
  for (const text of [
    `AI dose: ${view.aiDoseText}`,
    `Physician dose: ${view.physicianDoseText}`,
    view.rewardComparison,
  ]) {
    const line = document.createElement("div");
    line.textContent = text;
    host.appendChild(line);
  }
  if (view.reliabilityWarning !== null) {
    const badge = document.createElement("div");
    badge.className = "reliability-warning";
    badge.textContent = view.reliabilityWarning;
    host.appendChild(badge);
  }
}

export function renderHeatmap(
  host: HTMLElement,
  view: HeatmapView | HeatmapEmptyView
): void {
  host.innerHTML = "";
  if (view.empty) {
    const note = document.createElement("div");
    note.className = "empty-state";
    note.textContent = view.message;
    host.appendChild(note);
    return;
  }
  const n1 = view.axis1.length;
  const n2 = view.axis2.length;
  const S = 320;
  const pad = 46;
  const cw = (S - pad - 10) / n1;
  const ch = (S - pad - 10) / n2;
  const svg = svgEl("svg", { viewBox: `0 0 ${S} ${S}`, class: "heatmap" });
  for (const cell of view.cells) {
    const rect = svgEl("rect", {
      x: `${pad + cell.row * cw}`,
      y: `${S - pad - (cell.col + 1) * ch}`,
      width: `${cw}`,
      height: `${ch}`,
      fill: cell.css,
      "data-tone": cell.tone,
      "data-value": `${cell.value}`,
    });
    svg.appendChild(rect);
  }
  const x = linearScale(view.axis1[0], view.axis1[n1 - 1], pad + cw / 2,
                        pad + (n1 - 0.5) * cw);
  const y = linearScale(view.axis2[0], view.axis2[n2 - 1], S - pad - ch / 2,
                        S - pad - (n2 - 0.5) * ch);
  for (const m of view.markers) {
    const cross = svgEl("text", {
      x: `${x(m.x)}`, y: `${y(m.y)}`, class: "marker-cross",
      "text-anchor": "middle",
    });
    cross.textContent = "+";
    svg.appendChild(cross);
  }
  const xl = svgEl("text", { x: `${S / 2}`, y: `${S - 8}`, class: "tick" });
  xl.textContent = view.var1;
  const yl = svgEl("text", {
    x: "14", y: `${S / 2}`, class: "tick",
    transform: `rotate(-90 14 ${S / 2})`,
  });
  yl.textContent = view.var2;
  svg.appendChild(xl);
  svg.appendChild(yl);
  host.appendChild(svg);
}

export function renderErrorBanner(host: HTMLElement, message: string | null): void {
  host.innerHTML = "";
  if (message === null) return;
  const banner = document.createElement("div");
  banner.className = "error-banner";
  banner.textContent = message;
  host.appendChild(banner);
}
