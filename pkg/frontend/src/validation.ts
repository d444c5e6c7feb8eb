/** Patient-form validation against the model's schema. */

import type { ModelSchema } from "./types";

export interface FormErrors {
  [field: string]: string;
}

export interface ValidationResult {
  valid: boolean;
  errors: FormErrors;
}

export function validateState(
  values: Record<string, string>,
  schema: ModelSchema
): ValidationResult {
  const errors: FormErrors = {};
  for (const spec of schema.variables) {
    const raw = values[spec.name];
    if (raw === undefined || raw.trim() === "") {
      errors[spec.name] = "required";
      continue;
    }
    const value = Number(raw);
    if (!Number.isFinite(value)) {
      errors[spec.name] = "must be a number";
      continue;
    }
    if (value < spec.min || value > spec.max) {
      errors[spec.name] =
        `outside observed range [${spec.min.toPrecision(4)}, ` +
        `${spec.max.toPrecision(4)}] ${spec.unit}`;
    }
  }
  return { valid: Object.keys(errors).length === 0, errors };
}

export function validateDose(
  raw: string,
  schema: ModelSchema
): string | null {
  if (raw.trim() === "") return "required";
  const value = Number(raw);
  if (!Number.isFinite(value)) return "must be a number";
  const [lo, hi] = schema.dose_bounds;
  if (value < lo || value > hi) {
    return `dose must lie within [${lo}, ${hi}] Gy/fraction`;
  }
  return null;
}

export function submitEnabled(
  values: Record<string, string>,
  dose: string,
  schema: ModelSchema | null
): boolean {
  if (schema === null) return false;
  return (
    validateState(values, schema).valid && validateDose(dose, schema) === null
  );
}
