import { describe, expect, it } from "vitest";

import { buildAnswer, coerceField, fieldsFromSchema } from "../src/forms.js";

describe("fieldsFromSchema", () => {
  it("maps integer attributes to numeric inputs", () => {
    const fields = fieldsFromSchema({ min_salary: "integer" });
    expect(fields).toHaveLength(1);
    expect(fields[0].name).toBe("min_salary");
    expect(fields[0].inputType).toBe("number");
  });

  it("maps booleans to checkboxes and strings to text", () => {
    const fields = fieldsFromSchema({ remote: "boolean", city: "string" });
    expect(fields.find((f) => f.name === "remote")!.inputType).toBe("checkbox");
    expect(fields.find((f) => f.name === "city")!.inputType).toBe("text");
  });

  it("falls back to a single free-text field without a schema", () => {
    const fields = fieldsFromSchema(undefined);
    expect(fields).toHaveLength(1);
    expect(fields[0].name).toBe("answer");
  });

  it("carries required flags from object specs", () => {
    const fields = fieldsFromSchema({ k: { type: "string", required: true } });
    expect(fields[0].required).toBe(true);
  });
});

describe("coerceField", () => {
  const intField = fieldsFromSchema({ min_salary: "integer" })[0];

  it("accepts well-formed integers", () => {
    expect(coerceField(intField, "150000")).toEqual({ ok: true, value: 150000 });
  });

  it("rejects malformed integers before any POST happens", () => {
    const result = coerceField(intField, "150k");
    expect(result.ok).toBe(false);
    expect(result.error).toContain("min_salary");
  });

  it("parses JSON for list-typed fields", () => {
    const listField = fieldsFromSchema({ tags: "list" })[0];
    expect(coerceField(listField, '["a", "b"]')).toEqual({ ok: true, value: ["a", "b"] });
    expect(coerceField(listField, "not json").ok).toBe(false);
  });

  it("treats empty optional input as null", () => {
    expect(coerceField(intField, "")).toEqual({ ok: true, value: null });
  });

  it("enforces required fields", () => {
    const required = fieldsFromSchema({ k: { type: "string", required: true } })[0];
    expect(coerceField(required, "").ok).toBe(false);
  });
});

describe("buildAnswer", () => {
  it("assembles a typed answer object", () => {
    const fields = fieldsFromSchema({ min_salary: "integer", remote: "boolean" });
    const result = buildAnswer(fields, { min_salary: "150000", remote: true });
    expect(result.ok).toBe(true);
    expect(result.answer).toEqual({ min_salary: 150000, remote: true });
  });

  it("collects all validation errors and withholds the answer", () => {
    const fields = fieldsFromSchema({ a: "integer", b: "integer" });
    const result = buildAnswer(fields, { a: "x", b: "y" });
    expect(result.ok).toBe(false);
    expect(result.errors).toHaveLength(2);
    expect(result.answer).toBeUndefined();
  });
});
