// Schema-driven answer forms: a prompt's output_schema becomes typed input
// fields, and raw input strings are validated/coerced client-side before the
// answer is posted.

import type { SchemaSpec } from "./types.js";

export interface FormField {
  name: string;
  declaredType: string;
  inputType: "number" | "checkbox" | "text";
  required: boolean;
  description: string;
}

export function fieldsFromSchema(schema: Record<string, SchemaSpec> | undefined): FormField[] {
  if (!schema || Object.keys(schema).length === 0) {
    return [
      { name: "answer", declaredType: "any", inputType: "text", required: false, description: "" },
    ];
  }
  return Object.entries(schema).map(([name, spec]) => {
    const declared = typeof spec === "string" ? spec : (spec.type ?? "any");
    const description = typeof spec === "string" ? "" : (spec.description ?? "");
    const required = typeof spec === "string" ? false : Boolean(spec.required);
    let inputType: FormField["inputType"] = "text";
    if (declared === "integer" || declared === "float" || declared === "number") {
      inputType = "number";
    } else if (declared === "boolean") {
      inputType = "checkbox";
    }
    return { name, declaredType: declared, inputType, required, description };
  });
}

export interface CoercionResult {
  ok: boolean;
  value?: unknown;
  error?: string;
}

export function coerceField(field: FormField, raw: string | boolean): CoercionResult {
  if (typeof raw === "boolean") {
    return { ok: true, value: raw };
  }
  const text = raw.trim();
  if (text === "") {
    if (field.required) {
      return { ok: false, error: `${field.name} is required` };
    }
    return { ok: true, value: null };
  }
  switch (field.declaredType) {
    case "integer": {
      if (!/^-?\d+$/.test(text)) {
        return { ok: false, error: `${field.name} must be an integer` };
      }
      return { ok: true, value: Number.parseInt(text, 10) };
    }
    case "float":
    case "number": {
      const value = Number(text);
      if (!Number.isFinite(value)) {
        return { ok: false, error: `${field.name} must be a number` };
      }
      return { ok: true, value };
    }
    case "boolean": {
      if (text === "true" || text === "yes" || text === "1") {
        return { ok: true, value: true };
      }
      if (text === "false" || text === "no" || text === "0") {
        return { ok: true, value: false };
      }
      return { ok: false, error: `${field.name} must be true or false` };
    }
    case "list":
    case "map": {
      try {
        return { ok: true, value: JSON.parse(text) };
      } catch {
        return { ok: false, error: `${field.name} must be valid JSON` };
      }
    }
    default:
      return { ok: true, value: text };
  }
}

export interface AnswerResult {
  ok: boolean;
  answer?: Record<string, unknown>;
  errors: string[];
}

export function buildAnswer(
  fields: FormField[],
  values: Record<string, string | boolean>,
): AnswerResult {
  const answer: Record<string, unknown> = {};
  const errors: string[] = [];
  for (const field of fields) {
    const coerced = coerceField(field, values[field.name] ?? "");
    if (!coerced.ok) {
      errors.push(coerced.error!);
      continue;
    }
    if (coerced.value !== null) {
      answer[field.name] = coerced.value;
    }
  }
  return { ok: errors.length === 0, answer: errors.length === 0 ? answer : undefined, errors };
}
