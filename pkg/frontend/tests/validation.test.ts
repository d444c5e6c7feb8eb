/** Form validation against the model schema from the status endpoint. */

import { describe, expect, it } from "vitest";

import type { ModelSchema, ModelStatus } from "../src/types";
import { submitEnabled, validateDose, validateState } from "../src/validation";

import statusFixture from "./fixtures/status.json";

const schema = (statusFixture as unknown as ModelStatus).schema as ModelSchema;

function completeValues(): Record<string, string> {
  const values: Record<string, string> = {};
  for (const spec of schema.variables) {
    values[spec.name] = `${(spec.min + spec.max) / 2}`;
  }
  return values;
}

describe("state validation", () => {
  it("accepts midpoint values for all 12 variables", () => {
    expect(schema.variables.length).toBe(12);
    const result = validateState(completeValues(), schema);
    expect(result.valid).toBe(true);
    expect(result.errors).toEqual({});
  });

  it("flags missing and non-numeric fields", () => {
    const values = completeValues();
    delete values.il4;
    values.mtv = "not-a-number";
    const result = validateState(values, schema);
    expect(result.valid).toBe(false);
    expect(result.errors.il4).toBe("required");
    expect(result.errors.mtv).toMatch(/number/);
  });

  it("flags values outside the observed range", () => {
    const values = completeValues();
    const spec = schema.variables[0];
    values[spec.name] = `${spec.max * 10 + 1}`;
    const result = validateState(values, schema);
    expect(result.errors[spec.name]).toMatch(/outside observed range/);
  });
});

describe("dose validation", () => {
  it("doses are restricted to the model bounds", () => {
    const [lo, hi] = schema.dose_bounds;
    expect(validateDose(`${lo}`, schema)).toBeNull();
    expect(validateDose(`${hi}`, schema)).toBeNull();
    expect(validateDose(`${lo - 0.1}`, schema)).toMatch(/within/);
    expect(validateDose(`${hi + 0.1}`, schema)).toMatch(/within/);
    expect(validateDose("", schema)).toBe("required");
  });
});

describe("submit gating", () => {
  it("disabled until every field and the dose are valid", () => {
    const values = completeValues();
    expect(submitEnabled(values, "2.0", schema)).toBe(true);
    expect(submitEnabled(values, "9.0", schema)).toBe(false);
    const incomplete = completeValues();
    delete incomplete.il10;
    expect(submitEnabled(incomplete, "2.0", schema)).toBe(false);
    expect(submitEnabled(values, "2.0", null)).toBe(false);
  });
});
