// For every seeded input the loss report the binding returns must be
// byte-identical to the CLI's stdout for the same arguments.

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { lossCheck } from "../src/index.js";
import { fixture, readManifest } from "./helpers.js";

const manifest = readManifest();
const seeds = Array.from({ length: manifest.seeds }, (_, k) => k);

describe("loss-check bitwise parity with the CLI", () => {
  for (const k of seeds) {
    it(`returns identical loss text (seed ${k})`, () => {
      const report = lossCheck({ seed: k, hw: manifest.hw, sigma: 0.02 });
      expect(report.text).toBe(readFileSync(fixture(`loss_${k}.txt`), "utf8"));
      expect(Object.keys(report.terms).sort()).toEqual([
        "flow",
        "motion2d",
        "point",
        "pose",
        "viewpoint",
      ]);
      expect(Number.isFinite(report.total)).toBe(true);
    });
  }
});
