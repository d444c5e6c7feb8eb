/** JSON contract of the doseguide HTTP service. */

export interface Band {
  mean: number[];
  lo: number[];
  hi: number[];
}

export interface WhatIfResponse {
  model_id: string;
  model_digest: string;
  seed: number;
  units_note: string;
  doses_gy: number[];
  prob_lc: Band;
  prob_rp2: Band;
  reward: Band;
  logit_variance: { lc: number[]; rp2: number[] };
}

export interface OutcomeMomentsJson {
  logit_mean: number;
  logit_variance: number;
  prob_mean: number;
  prob_variance: number;
  prob_lo: number;
  prob_hi: number;
}

export interface RewardSummaryJson {
  mean: number;
  std: number;
  seed: number;
  sample_count: number;
}

export interface VerdictJson {
  model_id?: string;
  model_digest?: string;
  ai_dose_gy: number;
  physician_dose_gy: number;
  p_value: number;
  chosen: "AI" | "PHYSICIAN";
  reliability_flag: boolean;
  sample_count: number;
  seed: number;
  ai_reward: RewardSummaryJson;
  physician_reward: RewardSummaryJson;
  ai_outcomes: { lc: OutcomeMomentsJson; rp2: OutcomeMomentsJson };
  physician_outcomes: { lc: OutcomeMomentsJson; rp2: OutcomeMomentsJson };
}

export interface CompensationMapJson {
  model_id?: string;
  model_digest?: string;
  var1: string;
  var2: string;
  axis1: number[];
  axis2: number[];
  delta_gy: number[][];
  training_points: { var1: number; var2: number; delta_gy: number }[];
}

export interface VariableSpec {
  name: string;
  unit: string;
  min: number;
  max: number;
  constant: boolean;
}

export interface ModelSchema {
  dose_bounds: [number, number];
  variables: VariableSpec[];
  compensation_variables: string[] | null;
}

export interface ModelStatus {
  model_id: string;
  status: string;
  digest: string | null;
  schema?: ModelSchema;
}

export interface ModelListEntry {
  model_id: string;
  status: string;
  digest: string | null;
}
