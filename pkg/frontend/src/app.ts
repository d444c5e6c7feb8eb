/** Page wiring: form, slider, verdict panel, and heatmap bound to the API. */

import { ApiClient, ApiError, debounce } from "./api";
import {
  renderDoseChart,
  renderEllipses,
  renderErrorBanner,
  renderHeatmap,
  renderVerdict,
} from "./dom";
import type { ModelSchema } from "./types";
import { submitEnabled, validateDose, validateState } from "./validation";
import {
  ExplorerState,
  buildEllipses,
  buildHeatmap,
  buildVerdictPanel,
  initialExplorerState,
  nextExplorerState,
} from "./viewmodel";

declare global {
  interface Window {
    DOSEGUIDE_API_BASE?: string;
  }
}

const DOSE_STEP = 0.1;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startApp(): void {
  const base =
    window.DOSEGUIDE_API_BASE ??
    new URLSearchParams(window.location.search).get("api") ??
    "http://127.0.0.1:8000";
  const client = new ApiClient(base);

  const modelSelect = el<HTMLSelectElement>("model-select");
  const formHost = el<HTMLDivElement>("patient-form");
  const doseInput = el<HTMLInputElement>("physician-dose");
  const doseSlider = el<HTMLInputElement>("dose-slider");
  const sliderLabel = el<HTMLSpanElement>("slider-value");
  const submitButton = el<HTMLButtonElement>("submit-decision");
  const chartHost = el<HTMLDivElement>("dose-chart");
  const bannerHost = el<HTMLDivElement>("error-banner");
  const verdictHost = el<HTMLDivElement>("verdict-panel");
  const ellipseHost = el<HTMLDivElement>("ellipse-panel");
  const heatmapHost = el<HTMLDivElement>("heatmap-panel");

  let schema: ModelSchema | null = null;
  let explorer: ExplorerState = initialExplorerState;
  const values: Record<string, string> = {};

  function refreshSubmit(): void {
    submitButton.disabled = !submitEnabled(values, doseInput.value, schema);
  }

  function rebuildForm(): void {
    formHost.innerHTML = "";
    if (schema === null) return;
    for (const spec of schema.variables) {
      const wrap = document.createElement("label");
      wrap.className = "field";
      const caption = document.createElement("span");
      caption.textContent = `${spec.name} (${spec.unit})`;
      const input = document.createElement("input");
      input.type = "number";
      input.step = "any";
      input.name = spec.name;
      const hint = document.createElement("small");
      hint.className = "field-error";
      input.addEventListener("input", () => {
        values[spec.name] = input.value;
        const errors = validateState(values, schema!).errors;
        hint.textContent = errors[spec.name] ?? "";
        refreshSubmit();
        scheduleSweep();
      });
      wrap.append(caption, input, hint);
      formHost.appendChild(wrap);
    }
    const [lo, hi] = schema.dose_bounds;
    doseInput.min = `${lo}`;
    doseInput.max = `${hi}`;
    doseSlider.min = `${lo}`;
    doseSlider.max = `${hi}`;
    doseSlider.step = `${DOSE_STEP}`;
    refreshSubmit();
  }

  function stateNumbers(): Record<string, number> {
    const out: Record<string, number> = {};
    for (const [k, v] of Object.entries(values)) out[k] = Number(v);
    return out;
  }

  async function runSweep(): Promise<void> {
    if (schema === null || !validateState(values, schema).valid) return;
    const [lo, hi] = schema.dose_bounds;
    try {
      const response = await client.whatIf(modelSelect.value, {
        state: stateNumbers(),
        dose_grid: { min_gy: lo, max_gy: hi, step_gy: DOSE_STEP },
        seed: 0,
      });
      if (response === null) return; // superseded by a newer request
      explorer = nextExplorerState(explorer, {
        ok: true,
        response,
        physicianDose: Number(doseInput.value) || null,
      });
    } catch (err) {
      explorer = nextExplorerState(explorer, {
        ok: false,
        message: err instanceof ApiError ? err.message : `${err}`,
      });
    }
    renderErrorBanner(bannerHost, explorer.error);
    if (explorer.view !== null) {
      renderDoseChart(chartHost, explorer.view, explorer.stale);
    }
  }

  // debounced slider exploration (250 ms) bounds API load
  const scheduleSweep = debounce(() => void runSweep(), 250);

  doseSlider.addEventListener("input", () => {
    sliderLabel.textContent = `${Number(doseSlider.value).toFixed(1)} Gy/frac`;
    doseInput.value = doseSlider.value;
    refreshSubmit();
    scheduleSweep();
  });
  doseInput.addEventListener("input", () => {
    const problem = schema === null ? null : validateDose(doseInput.value, schema);
    el<HTMLElement>("dose-error").textContent = problem ?? "";
    refreshSubmit();
    scheduleSweep();
  });

  submitButton.addEventListener("click", () => {
    void (async () => {
      try {
        const verdict = await client.decide(modelSelect.value, {
          state: stateNumbers(),
          physician_dose: Number(doseInput.value),
          seed: 0,
        });
        renderVerdict(verdictHost, buildVerdictPanel(verdict));
        renderEllipses(ellipseHost, buildEllipses(verdict));
      } catch (err) {
        renderErrorBanner(bannerHost,
                          err instanceof ApiError ? err.message : `${err}`);
      }
    })();
  });

  async function loadModel(modelId: string): Promise<void> {
    const status = await client.modelStatus(modelId);
    schema = status.schema ?? null;
    rebuildForm();
    const map = await client.compensationMap(modelId, 20);
    renderHeatmap(heatmapHost, buildHeatmap(map));
  }

  void (async () => {
    try {
      const models = (await client.listModels()).filter(
        (m) => m.status === "done"
      );
      modelSelect.innerHTML = "";
      for (const m of models) {
        const option = document.createElement("option");
        option.value = m.model_id;
        option.textContent = `${m.model_id} (${m.digest?.slice(0, 8)})`;
        modelSelect.appendChild(option);
      }
      modelSelect.addEventListener("change", () =>
        void loadModel(modelSelect.value)
      );
      if (models.length > 0) await loadModel(models[0].model_id);
      else renderErrorBanner(bannerHost, "no trained models on the server");
    } catch (err) {
      renderErrorBanner(bannerHost,
                        err instanceof ApiError ? err.message : `${err}`);
    }
  })();
}

if (typeof document !== "undefined" && document.getElementById("model-select")) {
  startApp();
}
